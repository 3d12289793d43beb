"""The compiled kernels and the numpy fallback must agree bit for bit."""

import numpy as np
import pytest

from snnlab import kernels
from snnlab.kernels import RESET_HARD, RESET_NONE, RESET_SOFT, get_backend

try:
    get_backend("cython")
    HAVE_EXT = True
except ImportError:
    HAVE_EXT = False

needs_ext = pytest.mark.skipif(not HAVE_EXT, reason="compiled extension not built")


def test_backend_reported():
    assert kernels.BACKEND in ("cython", "python")


def test_unknown_backend():
    with pytest.raises(ValueError):
        get_backend("fortran")


@needs_ext
@pytest.mark.parametrize("reset", [RESET_NONE, RESET_SOFT, RESET_HARD])
def test_lif_update_matches(gen, reset):
    n = 1001
    u0 = gen.standard_normal(n)
    x0 = (gen.random(n) < 0.3).astype(float)
    drive = gen.standard_normal(n)
    results = []
    for name in ("python", "cython"):
        mod = get_backend(name)
        u, spikes = u0.copy(), np.empty(n)
        count = mod.lif_update(u, x0, drive, 0.7, 0.8, reset, spikes)
        results.append((u, spikes, count))
    (u_a, s_a, c_a), (u_b, s_b, c_b) = results
    assert np.array_equal(u_a, u_b) and np.array_equal(s_a, s_b) and c_a == c_b == int(s_a.sum())


@needs_ext
def test_lif_update_aliasing(gen):
    """Spikes may be written over the previous-spike buffer."""
    n = 64
    u0, drive = gen.standard_normal(n), gen.standard_normal(n)
    x0 = (gen.random(n) < 0.5).astype(float)
    mod = get_backend("cython")
    u_ref, s_ref = u0.copy(), np.empty(n)
    mod.lif_update(u_ref, x0, drive, 0.5, 1.0, RESET_SOFT, s_ref)
    u, x = u0.copy(), x0.copy()
    mod.lif_update(u, x, drive, 0.5, 1.0, RESET_SOFT, x)
    assert np.array_equal(u, u_ref) and np.array_equal(x, s_ref)


@needs_ext
def test_column_moments_match(gen):
    a = gen.standard_normal((37, 9)) * 3 + 1
    ref = get_backend("python").column_moments(a)
    got = get_backend("cython").column_moments(a)
    np.testing.assert_allclose(got, ref, rtol=1e-12, atol=1e-12)


@needs_ext
def test_surrogate_match(gen):
    u = gen.standard_normal(500) * 2
    outs = []
    for name in ("python", "cython"):
        out = np.empty_like(u)
        get_backend(name).arctan_surrogate(u, 1.0, 2.0, out)
        outs.append(out)
    np.testing.assert_allclose(outs[0], outs[1], rtol=1e-15, atol=0)


@pytest.mark.parametrize("name", ["python"] + (["cython"] if HAVE_EXT else []))
def test_column_moments_oracle(name, gen):
    a = gen.standard_normal((20, 4))
    got = get_backend(name).column_moments(a)
    d = a - a.mean(axis=0)
    np.testing.assert_allclose(got[:, 0], a.mean(axis=0), atol=1e-14)
    for p, col in ((2, 1), (3, 2), (4, 3)):
        np.testing.assert_allclose(got[:, col], (d**p).mean(axis=0), atol=1e-13)
