import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from reswcae.autodiff import ContractError, Tensor
from reswcae.losses import LossConfig, kl_divergence, reconstruction_loss
from reswcae.metrics import mse, psnr, ssim, ssim_detail

from conftest import check_gradients

unit_images = arrays(np.float64, (6, 7), elements=st.floats(0.0, 1.0))


# --- loss ----------------------------------------------------------------------


@pytest.mark.parametrize("lam", [0.0, 1e-3, 1.0, 10.0])
def test_loss_zero_when_output_equals_clean(lam, rng):
    x = rng.random((2, 5, 4))
    assert reconstruction_loss(Tensor(x), Tensor(x), LossConfig(lam=lam)).item() == pytest.approx(0.0, abs=1e-15)


def test_lambda_zero_is_squared_error(rng):
    out, clean = rng.random((3, 4, 4)), rng.random((3, 4, 4))
    got = reconstruction_loss(Tensor(out), Tensor(clean), LossConfig(lam=0.0)).item()
    assert got == np.sum((out - clean) ** 2) / 3


def test_two_pixel_hand_example():
    out, clean = np.array([[0.5, 0.5]]), np.array([[0.25, 0.75]])
    eps = 1e-12
    got = reconstruction_loss(Tensor(out), Tensor(clean), LossConfig(lam=1.0, eps=eps)).item()
    hand = 0.125 + 0.5 * math.log(0.5 / 0.25) + 0.5 * math.log(0.5 / 0.75)
    # brute-force summation with the same epsilon
    p = (out[0] + eps) / np.sum(out[0] + eps)
    q = (clean[0] + eps) / np.sum(clean[0] + eps)
    brute = sum((o - c) ** 2 for o, c in zip(out[0], clean[0])) + sum(pi * math.log(pi / qi) for pi, qi in zip(p, q))
    assert got == pytest.approx(hand, abs=1e-10)
    assert got == pytest.approx(brute, abs=1e-14)


@settings(max_examples=60, deadline=None)
@given(unit_images, unit_images)
def test_kl_non_negative(a, b):
    assert kl_divergence(Tensor(a), Tensor(b)).item() >= -1e-12


def test_loss_gradient(rng):
    out = rng.uniform(0.05, 0.95, (2, 4, 3))
    clean = rng.random((2, 4, 3))
    err = check_gradients(lambda o: reconstruction_loss(o, Tensor(clean), LossConfig(lam=0.5)), [out])
    assert err < 1e-4


def test_loss_contract_errors():
    with pytest.raises(ContractError):
        reconstruction_loss(Tensor(np.zeros((1, 2, 2))), Tensor(np.zeros((1, 2, 3))))
    with pytest.raises(ContractError):
        reconstruction_loss(Tensor(np.full((1, 2, 2), np.nan)), Tensor(np.zeros((1, 2, 2))))
    with pytest.raises(ContractError):
        LossConfig(lam=-1.0)


# --- metrics -------------------------------------------------------------------


def test_psnr_sentinels():
    x = np.random.default_rng(0).random((8, 8))
    assert psnr(x, x) == math.inf
    assert psnr(np.zeros((4, 4)), np.ones((4, 4))) == 0.0
    assert mse(np.zeros((4, 4)), np.ones((4, 4))) == 1.0
    assert mse(x, x) == 0.0


@settings(max_examples=60, deadline=None)
@given(unit_images, unit_images)
def test_psnr_relation_and_symmetry(a, b):
    m = mse(a, b)
    if m > 0:
        assert psnr(a, b) == -10 * math.log10(m)
    assert psnr(a, b) == psnr(b, a)
    assert mse(a, b) == mse(b, a)


def test_ssim_self_is_one(rng):
    for shape in [(103, 96), (16, 16), (5, 9)]:
        x = rng.random(shape)
        assert abs(ssim(x, x) - 1.0) < 1e-9


def ssim_loop_oracle(a, b, size=11, sigma=1.5, k1=0.01, k2=0.03):
    """Direct-formula SSIM: explicit 2D Gaussian, per-window statistics."""
    ax = np.arange(size) - (size - 1) / 2
    g = np.exp(-(ax[:, None] ** 2 + ax[None, :] ** 2) / (2 * sigma**2))
    g /= g.sum()
    c1, c2 = k1**2, k2**2
    vals = []
    for i in range(a.shape[0] - size + 1):
        for j in range(a.shape[1] - size + 1):
            pa, pb = a[i:i + size, j:j + size], b[i:i + size, j:j + size]
            ma, mb = np.sum(g * pa), np.sum(g * pb)
            va = np.sum(g * (pa - ma) ** 2)
            vb = np.sum(g * (pb - mb) ** 2)
            cov = np.sum(g * (pa - ma) * (pb - mb))
            vals.append(((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma**2 + mb**2 + c1) * (va + vb + c2)))
    return float(np.mean(vals))


def test_ssim_matches_direct_oracle(rng):
    for _ in range(3):
        a = rng.random((16, 16))
        b = np.clip(a + rng.normal(0, 0.2, a.shape), 0, 1)
        assert abs(ssim(a, b) - ssim_loop_oracle(a, b)) < 1e-6


def test_ssim_truncated_window_flag(rng):
    a, b = rng.random((6, 20)), rng.random((6, 20))
    res = ssim_detail(a, b)
    assert res.truncated and res.window == (6, 11)
    assert -1.0 <= res.value <= 1.0
    assert not ssim_detail(rng.random((16, 16)), rng.random((16, 16))).truncated


def test_ssim_symmetric_and_bounded(rng):
    a, b = rng.random((20, 20)), rng.random((20, 20))
    assert ssim(a, b) == pytest.approx(ssim(b, a), abs=1e-12)
    assert -1.0 <= ssim(a, 1 - a) <= ssim(a, b) <= 1.0
