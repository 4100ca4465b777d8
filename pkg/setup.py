import os

from setuptools import setup

ext_modules = []
if os.environ.get("NEUROSPLIT_NO_EXT", "") in ("", "0"):
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "neurosplit._kernels._bp",
                    ["src/neurosplit/_kernels/_bp.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3", "-fno-math-errno"],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        # no Cython: the numpy fallback kernels are used
        ext_modules = []

setup(ext_modules=ext_modules)
