"""numba-compiled versions of the hot loops (same signatures as ``_numpy``).

Outputs are allocated by numpy in the thin Python wrappers and filled by the
compiled loops. Allocating large arrays inside compiled code is several times
slower here, because each call touches fresh pages instead of reusing
numpy's cached blocks.
"""
import numpy as np
from numba import njit


@njit(cache=True)
def _im2col_fill(xp, cols, stride):
    c, kh, kw, n, oh, ow = cols.shape
    # one (b, ci) input plane stays in cache while all kh*kw taps read it
    for ci in range(c):
        for b in range(n):
            for i in range(kh):
                for j in range(kw):
                    for y in range(oh):
                        row = i + stride * y
                        for x in range(ow):
                            cols[ci, i, j, b, y, x] = xp[b, ci, row, j + stride * x]


@njit(cache=True)
def _col2im_fill(cols, out, stride):
    c, kh, kw, n, oh, ow = cols.shape
    for b in range(n):
        for ci in range(c):
            for i in range(kh):
                for j in range(kw):
                    for y in range(oh):
                        row = i + stride * y
                        for x in range(ow):
                            out[b, ci, row, j + stride * x] += cols[ci, i, j, b, y, x]


@njit(cache=True)
def _dwt_fill(x, dec_lo, dec_hi, lo, hi):
    rows, m = x.shape
    length = dec_lo.shape[0]
    half = m // 2
    shift = length // 2
    for r in range(rows):
        for i in range(half):
            acc_lo = 0.0
            acc_hi = 0.0
            for k in range(length):
                v = x[r, (2 * i + shift - k) % m]
                acc_lo += dec_lo[k] * v
                acc_hi += dec_hi[k] * v
            lo[r, i] = acc_lo
            hi[r, i] = acc_hi


@njit(cache=True)
def _idwt_fill(lo, hi, rec_lo, rec_hi, out):
    rows, half = lo.shape
    m = 2 * half
    length = rec_lo.shape[0]
    shift = length // 2
    for r in range(rows):
        for i in range(half):
            a = lo[r, i]
            d = hi[r, i]
            for k in range(length):
                out[r, (2 * i + shift - k) % m] += rec_lo[length - 1 - k] * a + rec_hi[length - 1 - k] * d


def im2col(xp, kh, kw, stride, oh, ow):
    n, c = xp.shape[:2]
    cols = np.empty((c, kh, kw, n, oh, ow), dtype=xp.dtype)
    _im2col_fill(xp, cols, stride)
    return cols


def col2im(cols, hp, wp, stride):
    c, kh, kw, n, oh, ow = cols.shape
    out = np.zeros((n, c, hp, wp), dtype=cols.dtype)
    _col2im_fill(cols, out, stride)
    return out


def dwt_rows(x, dec_lo, dec_hi):
    rows, m = x.shape
    lo = np.empty((rows, m // 2), dtype=x.dtype)
    hi = np.empty((rows, m // 2), dtype=x.dtype)
    _dwt_fill(x, dec_lo, dec_hi, lo, hi)
    return lo, hi


def idwt_rows(lo, hi, rec_lo, rec_hi):
    out = np.zeros((lo.shape[0], 2 * lo.shape[1]), dtype=lo.dtype)
    _idwt_fill(lo, hi, rec_lo, rec_hi, out)
    return out
