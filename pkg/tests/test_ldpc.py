import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from neurosplit import _kernels
from neurosplit.ldpc import LdpcCode, gf2_rref, regular_parity_matrix

KERNELS = [pytest.param(_kernels.bp_decode_python, id="python")]
if _kernels.bp_decode_compiled is not None:
    KERNELS.append(pytest.param(_kernels.bp_decode_compiled, id="cython"))


@pytest.fixture(scope="module")
def code():
    return LdpcCode.regular(1024)


def test_dimensions(code):
    assert (code.n, code.k) == (1024, 512)
    assert code.rate == 0.5
    assert np.all(code.H.sum(axis=0) == 3) and np.all(code.H.sum(axis=1) == 6)


def test_full_rank(code):
    _, piv = gf2_rref(code.H)
    assert len(piv) == code.H.shape[0]


def test_deterministic_construction():
    a = LdpcCode.regular(96, seed=3)
    np.testing.assert_array_equal(a.H, LdpcCode.regular(96, seed=3).H)
    assert not np.array_equal(a.H, LdpcCode.regular(96, seed=4).H)
    assert a.k == 96 - a.H.shape[0]


def test_rejects_rank_deficient():
    H = np.array([[1, 1, 0], [1, 1, 0]], dtype=np.uint8)
    with pytest.raises(ValueError):
        LdpcCode(H)


def test_invalid_degrees():
    with pytest.raises(ValueError):
        regular_parity_matrix(7, 3, 6, np.random.default_rng(0))


def test_all_zero_codeword(code):
    assert not code.encode(np.zeros(code.k, dtype=np.uint8)).any()


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_encoded_words_satisfy_checks(code, seed):
    u = np.random.default_rng(seed).integers(0, 2, code.k)
    c = code.encode(u)
    assert not code.syndrome(c).any()
    np.testing.assert_array_equal(c[code.info_cols], u)


def test_linearity(code):
    rng = np.random.default_rng(0)
    a, b = rng.integers(0, 2, (2, code.k))
    np.testing.assert_array_equal(code.encode(a) ^ code.encode(b), code.encode(a ^ b))


@pytest.mark.parametrize("kernel", KERNELS)
def test_noiseless_round_trip(code, kernel):
    u = np.random.default_rng(1).integers(0, 2, code.k)
    c = code.encode(u)
    llr = np.where(c == 0, 1e3, -1e3)
    bits, ok = code.decode(llr, kernel=kernel)
    assert ok
    np.testing.assert_array_equal(bits, u)


@pytest.mark.parametrize("kernel", KERNELS)
def test_corrects_errors_and_flags_failure(code, kernel):
    rng = np.random.default_rng(2)
    u = rng.integers(0, 2, code.k)
    c = code.encode(u)
    # BPSK-equivalent channel at Eb/N0 = 3 dB, rate 1/2
    sigma = math.sqrt(1 / (2 * 0.5 * 10 ** 0.3))
    y = (1 - 2 * c.astype(float)) + sigma * rng.standard_normal(code.n)
    llr = 2 * y / sigma**2
    assert np.any((llr < 0) != c)
    bits, ok = code.decode(llr, kernel=kernel)
    assert ok
    np.testing.assert_array_equal(bits, u)
    # pure noise cannot converge in a handful of iterations
    _, ok = code.decode(rng.standard_normal(code.n) * 0.1, max_iter=3, kernel=kernel)
    assert not ok


def test_kernels_agree(code):
    if _kernels.bp_decode_compiled is None:
        pytest.skip("compiled kernel not built")
    rng = np.random.default_rng(4)
    for snr_db in (0.5, 1.5, 2.5):
        sigma = math.sqrt(1 / (2 * 0.5 * 10 ** (snr_db / 10)))
        c = code.encode(rng.integers(0, 2, code.k))
        llr = 2 * ((1 - 2 * c.astype(float)) + sigma * rng.standard_normal(code.n)) / sigma**2
        a = code.decode_codeword(llr, kernel=_kernels.bp_decode_python)
        b = code.decode_codeword(llr, kernel=_kernels.bp_decode_compiled)
        assert a[1:] == b[1:]
        np.testing.assert_array_equal(a[0], b[0])


def test_decode_shape_check(code):
    with pytest.raises(ValueError):
        code.decode(np.zeros(10))
    with pytest.raises(ValueError):
        code.encode(np.zeros(10))
