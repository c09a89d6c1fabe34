"""Differentiable convolution, transpose convolution, bilinear resize and concat.

Activations are ``(N, C, H, W)``. Convolutions run as im2col + one GEMM per
batch chunk; chunks keep the unfolded buffer under ``COL_BUDGET`` elements,
which matters for the full-resolution output conv.

Shape policy:

* ``conv2d`` pads "same" style, so stride 2 maps ``H -> ceil(H / 2)``.
* ``conv2d_transpose`` is the exact adjoint of that conv whenever
  ``ceil(target / stride) == H``. Other reachable targets are obtained by
  cropping or zero-padding the full transposed output.
"""
from __future__ import annotations

import numpy as np

from . import kernels
from .autodiff import ContractError, DimensionError, Tensor, add_bias, as_tensor, matmul

KSIZE = 3
COL_BUDGET = 1 << 23


def same_padding(size, stride, k=KSIZE):
    """Return ``(out, pad_before, pad_after)`` for a "same" strided conv."""
    out = -(-size // stride)
    total = max((out - 1) * stride + k - size, 0)
    return out, total // 2, total - total // 2


def _chunks(n, per_sample):
    step = max(1, COL_BUDGET // max(per_sample, 1))
    for lo in range(0, n, step):
        yield lo, min(n, lo + step)


def _check_input(x, channels, name):
    if x.ndim != 4:
        raise ContractError(f"{name} expects (N, C, H, W), got shape {x.shape}")
    if x.shape[1] != channels:
        raise ContractError(f"{name}: input has {x.shape[1]} channels, layer expects {channels}")


def conv2d(x, weight, bias=None, stride=1):
    """Strided 3x3 cross-correlation with "same" zero padding.

    ``weight`` is ``(C_out, C_in, 3, 3)``.
    """
    x, weight = as_tensor(x), as_tensor(weight)
    co, ci = weight.shape[:2]
    _check_input(x, ci, "conv2d")
    n, _, h, w = x.shape
    oh, pt, pb = same_padding(h, stride)
    ow, pl, pr = same_padding(w, stride)
    xp = np.pad(x.data, ((0, 0), (0, 0), (pt, pb), (pl, pr)))
    hp, wp = xp.shape[2:]
    w2 = weight.data.reshape(co, ci * KSIZE * KSIZE)
    per = ci * KSIZE * KSIZE * oh * ow

    out = np.empty((n, co, oh, ow), dtype=np.result_type(x.data, weight.data))
    cached = {}
    for lo, hi in _chunks(n, per):
        cols = kernels.im2col(xp[lo:hi], KSIZE, KSIZE, stride, oh, ow)
        cols2 = cols.reshape(ci * KSIZE * KSIZE, -1)
        out[lo:hi] = (w2 @ cols2).reshape(co, hi - lo, oh, ow).transpose(1, 0, 2, 3)
        if lo == 0 and hi == n:
            cached[lo] = cols2

    def bw(g):
        dw = np.zeros_like(w2)
        dxp = np.empty_like(xp) if x.requires_grad else None
        for lo, hi in _chunks(n, per):
            cols2 = cached.get(lo)
            if cols2 is None:
                cols2 = kernels.im2col(xp[lo:hi], KSIZE, KSIZE, stride, oh, ow).reshape(ci * KSIZE * KSIZE, -1)
            g2 = g[lo:hi].transpose(1, 0, 2, 3).reshape(co, -1)
            dw += g2 @ cols2.T
            if dxp is not None:
                dcols = (w2.T @ g2).reshape(ci, KSIZE, KSIZE, hi - lo, oh, ow)
                dxp[lo:hi] = kernels.col2im(dcols, hp, wp, stride)
        dx = dxp[:, :, pt:pt + h, pl:pl + w] if dxp is not None else None
        return dx, dw.reshape(weight.shape)

    y = Tensor._node(out, (x, weight), bw, "conv2d")
    return add_bias(y, bias) if bias is not None else y


def transpose_window(size, stride, target):
    """Offset of the ``target``-long output window inside the full transposed output.

    Raises :class:`DimensionError` when ``target`` is outside
    ``[stride*size - stride, stride*size + stride]``.
    """
    if not stride * size - stride <= target <= stride * size + stride:
        raise DimensionError(
            f"transpose conv cannot map size {size} to {target} with stride {stride} "
            f"(reachable: {stride * size - stride}..{stride * size + stride})"
        )
    full = (size - 1) * stride + KSIZE
    return full, (full - target) // 2


def _window(full_arr, start_h, th, start_w, tw):
    # crop (or zero-pad where the window leaves the array)
    n, c, fh, fw = full_arr.shape
    out = np.zeros((n, c, th, tw), dtype=full_arr.dtype)
    sh0, sh1 = max(start_h, 0), min(start_h + th, fh)
    sw0, sw1 = max(start_w, 0), min(start_w + tw, fw)
    out[:, :, sh0 - start_h:sh1 - start_h, sw0 - start_w:sw1 - start_w] = full_arr[:, :, sh0:sh1, sw0:sw1]
    return out


def _unwindow(g, fh, fw, start_h, start_w):
    n, c, th, tw = g.shape
    full = np.zeros((n, c, fh, fw), dtype=g.dtype)
    sh0, sh1 = max(start_h, 0), min(start_h + th, fh)
    sw0, sw1 = max(start_w, 0), min(start_w + tw, fw)
    full[:, :, sh0:sh1, sw0:sw1] = g[:, :, sh0 - start_h:sh1 - start_h, sw0 - start_w:sw1 - start_w]
    return full


def conv2d_transpose(x, weight, bias=None, stride=2, target_h=None, target_w=None):
    """Shape-targeted 3x3 transpose convolution.

    ``weight`` is ``(C_in, C_out, 3, 3)``: the same array that, used as a
    ``conv2d`` kernel ``(C_out', C_in')``, defines the forward conv this op is
    the adjoint of.
    """
    x, weight = as_tensor(x), as_tensor(weight)
    ci, co = weight.shape[:2]
    _check_input(x, ci, "conv2d_transpose")
    n, _, h, w = x.shape
    th = stride * h if target_h is None else target_h
    tw = stride * w if target_w is None else target_w
    fh, sh = transpose_window(h, stride, th)
    fw, sw = transpose_window(w, stride, tw)
    wt = weight.data.reshape(ci, co * KSIZE * KSIZE)
    per = co * KSIZE * KSIZE * h * w

    full = np.empty((n, co, fh, fw), dtype=np.result_type(x.data, weight.data))
    for lo, hi in _chunks(n, per):
        x2 = x.data[lo:hi].transpose(1, 0, 2, 3).reshape(ci, -1)
        cols = (wt.T @ x2).reshape(co, KSIZE, KSIZE, hi - lo, h, w)
        full[lo:hi] = kernels.col2im(cols, fh, fw, stride)
    out = _window(full, sh, th, sw, tw)

    def bw(g):
        gfull = _unwindow(g, fh, fw, sh, sw)
        dx = np.empty_like(x.data) if x.requires_grad else None
        dw = np.zeros_like(wt)
        for lo, hi in _chunks(n, per):
            gcols = kernels.im2col(gfull[lo:hi], KSIZE, KSIZE, stride, h, w).reshape(co * KSIZE * KSIZE, -1)
            x2 = x.data[lo:hi].transpose(1, 0, 2, 3).reshape(ci, -1)
            if dx is not None:
                dx[lo:hi] = (wt @ gcols).reshape(ci, hi - lo, h, w).transpose(1, 0, 2, 3)
            dw += x2 @ gcols.T
        return dx, dw.reshape(weight.shape)

    y = Tensor._node(out, (x, weight), bw, "conv2d_transpose")
    return add_bias(y, bias) if bias is not None else y


def bilinear_matrix(src, dst, dtype=np.float64):
    """``(dst, src)`` interpolation matrix, align-corners convention."""
    if src < 1 or dst < 1:
        raise ContractError(f"resize sizes must be >= 1, got {src} -> {dst}")
    m = np.zeros((dst, src), dtype=dtype)
    if src == 1:
        m[:, 0] = 1.0
        return m
    pos = np.zeros(dst) if dst == 1 else np.arange(dst) * ((src - 1) / (dst - 1))
    i0 = np.minimum(np.floor(pos).astype(int), src - 2)
    frac = pos - i0
    rows = np.arange(dst)
    m[rows, i0] += 1.0 - frac
    m[rows, i0 + 1] += frac
    return m


def bilinear_resize(x, target_h, target_w):
    """Per-channel bilinear resize of the last two axes (align corners)."""
    x = as_tensor(x)
    h, w = x.shape[-2:]
    if (h, w) == (target_h, target_w):
        return x
    rh = bilinear_matrix(h, target_h, x.dtype)
    rw = bilinear_matrix(w, target_w, x.dtype)
    out = rh @ x.data @ rw.T
    return Tensor._node(out, (x,), lambda g: (rh.T @ g @ rw,), "bilinear_resize")


def concat_channels(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 4 or b.ndim != 4 or a.shape[0] != b.shape[0] or a.shape[2:] != b.shape[2:]:
        raise DimensionError(f"cannot concatenate channels of {a.shape} and {b.shape}")
    split = a.shape[1]
    out = np.concatenate([a.data, b.data.astype(a.dtype, copy=False)], axis=1)
    return Tensor._node(out, (a, b), lambda g: (g[:, :split], g[:, split:]), "concat")


def glorot_uniform(rng, shape, fan_in, fan_out, dtype):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class ConvLayer:
    """A 3x3 conv, either downsampling (``mode="down"``) or transposed.

    Down weights are ``(out, in, 3, 3)``; transpose weights are
    ``(in, out, 3, 3)`` so each is directly the adjoint partner of the other.
    """

    def __init__(self, in_channels, out_channels, stride=1, mode="down", rng=None, dtype=np.float32):
        if mode not in ("down", "transpose"):
            raise ContractError(f"unknown conv mode {mode!r}")
        if stride not in (1, 2):
            raise ContractError(f"stride must be 1 or 2, got {stride}")
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.stride = stride
        self.mode = mode
        rng = rng if rng is not None else np.random.default_rng(0)
        if mode == "down":
            shape = (out_channels, in_channels, KSIZE, KSIZE)
        else:
            shape = (in_channels, out_channels, KSIZE, KSIZE)
        w = glorot_uniform(rng, shape, in_channels * KSIZE * KSIZE, out_channels * KSIZE * KSIZE, dtype)
        self.weight = Tensor(w, requires_grad=True)
        self.bias = Tensor(np.zeros(out_channels, dtype=dtype), requires_grad=True)

    def parameters(self):
        return [self.weight, self.bias]

    def output_size(self, h, w, target=None):
        if self.mode == "down":
            return same_padding(h, self.stride)[0], same_padding(w, self.stride)[0]
        th, tw = target if target is not None else (self.stride * h, self.stride * w)
        transpose_window(h, self.stride, th)
        transpose_window(w, self.stride, tw)
        return th, tw

    def __call__(self, x, target=None):
        if self.mode == "down":
            return conv2d(x, self.weight, self.bias, self.stride)
        th, tw = target if target is not None else (None, None)
        return conv2d_transpose(x, self.weight, self.bias, self.stride, th, tw)

    def __repr__(self):
        return f"ConvLayer({self.in_channels}->{self.out_channels}, stride={self.stride}, mode={self.mode})"


class DenseLayer:
    def __init__(self, in_features, out_features, rng=None, dtype=np.float32):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.in_features = in_features
        self.out_features = out_features
        w = glorot_uniform(rng, (in_features, out_features), in_features, out_features, dtype)
        self.weight = Tensor(w, requires_grad=True)
        self.bias = Tensor(np.zeros(out_features, dtype=dtype), requires_grad=True)

    def parameters(self):
        return [self.weight, self.bias]

    def __call__(self, x):
        return add_bias(matmul(x, self.weight), self.bias)

    def __repr__(self):
        return f"DenseLayer({self.in_features}->{self.out_features})"
