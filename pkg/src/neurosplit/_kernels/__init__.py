"""Hot numerical kernels.

The compiled Cython build is used when importable; set
``NEUROSPLIT_PURE_PYTHON=1`` to force the numpy fallback.
"""

import os

from . import _bp_py

bp_decode_python = _bp_py.bp_decode

try:
    if os.environ.get("NEUROSPLIT_PURE_PYTHON", "") not in ("", "0"):
        raise ImportError("pure-python kernels requested")
    from ._bp import bp_decode as bp_decode_compiled
except ImportError:
    bp_decode_compiled = None

if bp_decode_compiled is not None:
    bp_decode = bp_decode_compiled
    BACKEND = "cython"
else:
    bp_decode = bp_decode_python
    BACKEND = "python"

__all__ = ["bp_decode", "bp_decode_python", "bp_decode_compiled", "BACKEND"]
