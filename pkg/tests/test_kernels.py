"""Both kernel backends must agree; the numba one is only a speedup."""
import subprocess
import sys

import numpy as np
import pytest

from reswcae import kernels
from reswcae.kernels import _numba, _numpy


@pytest.mark.parametrize("stride, oh, ow", [(1, 5, 4), (2, 3, 2), (2, 4, 4)])
def test_im2col_col2im_backends_agree(stride, oh, ow, rng):
    hp = stride * (oh - 1) + 3
    wp = stride * (ow - 1) + 3
    xp = rng.normal(size=(2, 3, hp, wp))
    a = _numpy.im2col(xp, 3, 3, stride, oh, ow)
    b = _numba.im2col(xp, 3, 3, stride, oh, ow)
    np.testing.assert_array_equal(a, b)
    cols = rng.normal(size=a.shape)
    np.testing.assert_allclose(_numpy.col2im(cols, hp, wp, stride), _numba.col2im(cols, hp, wp, stride), atol=1e-13)


def test_col2im_is_adjoint_of_im2col(rng):
    xp = rng.normal(size=(2, 2, 9, 7))
    cols = rng.normal(size=(2, 3, 3, 2, 4, 3))
    lhs = np.sum(kernels.im2col(xp, 3, 3, 2, 4, 3) * cols)
    rhs = np.sum(xp * kernels.col2im(cols, 9, 7, 2))
    assert abs(lhs - rhs) < 1e-10


@pytest.mark.parametrize("m, length", [(16, 8), (6, 8), (12, 2), (4, 4)])
def test_dwt_rows_backends_agree(m, length, rng):
    x = rng.normal(size=(5, m))
    lo_f = rng.normal(size=length)
    hi_f = rng.normal(size=length)
    for a, b in zip(_numpy.dwt_rows(x, lo_f, hi_f), _numba.dwt_rows(x, lo_f, hi_f)):
        np.testing.assert_allclose(a, b, atol=1e-12)
    lo, hi = rng.normal(size=(5, m // 2)), rng.normal(size=(5, m // 2))
    np.testing.assert_allclose(
        _numpy.idwt_rows(lo, hi, lo_f, hi_f), _numba.idwt_rows(lo, hi, lo_f, hi_f), atol=1e-12
    )


def test_env_flag_selects_numpy_backend():
    code = "from reswcae import kernels; print(kernels.BACKEND)"
    out = subprocess.run(
        [sys.executable, "-c", code],
        env={"RESWCAE_DISABLE_NUMBA": "1", "PATH": ""},
        capture_output=True,
        text=True,
        check=True,
    )
    assert out.stdout.strip() == "numpy"
    assert kernels.BACKEND in ("numba", "numpy")
