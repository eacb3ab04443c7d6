import numpy as np
import pytest

from tanapprox import _pykernels, kernels
from tanapprox.expr import parse
from tanapprox.jets import taylor

try:
    from tanapprox import _ckernels
except ImportError:
    _ckernels = None

needs_ext = pytest.mark.skipif(_ckernels is None, reason="compiled extension not built")


def test_backend_flag():
    assert kernels.BACKEND in ("cython", "python")


def test_nearest_against_brute_force():
    rng = np.random.default_rng(0)
    A, B = rng.standard_normal((300, 4)), rng.standard_normal((50, 4))
    D = np.linalg.norm(B[:, None, :] - A[None, :, :], axis=-1)
    for impl in filter(None, (_pykernels, _ckernels)):
        dist, idx = kernels.nearest(A, B, impl=impl)
        np.testing.assert_allclose(dist, D.min(axis=1), rtol=1e-14)
        np.testing.assert_array_equal(idx, D.argmin(axis=1))


@needs_ext
def test_backends_agree():
    rng = np.random.default_rng(1)
    A, B = rng.standard_normal((500, 3)), rng.standard_normal((80, 3))
    A[7] = A[3]  # a tie, broken towards the lower index
    for m in (1, 5, 8):
        np.testing.assert_array_equal(kernels.knn(A, B, m, impl=_pykernels), kernels.knn(A, B, m, impl=_ckernels))
    d1, i1 = kernels.nearest(A, B, impl=_pykernels)
    d2, i2 = kernels.nearest(A, B, impl=_ckernels)
    np.testing.assert_allclose(d1, d2, rtol=1e-14)
    np.testing.assert_array_equal(i1, i2)
    s = taylor(parse("exp(x1 - x2) * cos(x3)", 3), 6)[0]
    t = taylor(parse("sin(x1*x3) + x2", 3), 6)[0]
    args = (np.array(list(s.terms)), np.array(list(s.terms.values())),
            np.array(list(t.terms)), np.array(list(t.terms.values())), 6)
    np.testing.assert_allclose(kernels.series_mul(*args, impl=_pykernels),
                               kernels.series_mul(*args, impl=_ckernels), rtol=1e-14, atol=1e-16)


def test_empty_reference_cloud():
    with pytest.raises(ValueError):
        kernels.nearest(np.zeros((0, 3)), np.zeros((2, 3)))


def test_fallback_selected_at_import():
    import os
    import subprocess
    import sys

    code = ("from tanapprox import kernels; from tanapprox.expr import parse; "
            "from tanapprox.verify import approximate; "
            "print(kernels.BACKEND, approximate(parse('x1^2+x2^2-x3^2', 3), 2).k_star)")
    env = dict(os.environ, TANAPPROX_PURE="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.split() == ["python", "2"]
