"""Pure-numpy reference versions of the hot loops.

Every function here has a twin with the same signature in ``_numba``.
"""
import numpy as np


def im2col(xp, kh, kw, stride, oh, ow):
    """Unfold a padded batch ``(N, C, Hp, Wp)`` into ``(C, kh, kw, N, oh, ow)``."""
    n, c = xp.shape[:2]
    cols = np.empty((c, kh, kw, n, oh, ow), dtype=xp.dtype)
    hs = stride * (oh - 1) + 1
    ws = stride * (ow - 1) + 1
    for i in range(kh):
        for j in range(kw):
            patch = xp[:, :, i:i + hs:stride, j:j + ws:stride]
            cols[:, i, j] = patch.transpose(1, 0, 2, 3)
    return cols


def col2im(cols, hp, wp, stride):
    """Scatter-add ``(C, kh, kw, N, oh, ow)`` columns back onto ``(N, C, hp, wp)``."""
    c, kh, kw, n, oh, ow = cols.shape
    out = np.zeros((n, c, hp, wp), dtype=cols.dtype)
    hs = stride * (oh - 1) + 1
    ws = stride * (ow - 1) + 1
    for i in range(kh):
        for j in range(kw):
            out[:, :, i:i + hs:stride, j:j + ws:stride] += cols[:, i, j].transpose(1, 0, 2, 3)
    return out


def _periodic_index(m, length):
    half = m // 2
    shift = length // 2
    return (2 * np.arange(half)[:, None] + shift - np.arange(length)[None, :]) % m


def dwt_rows(x, dec_lo, dec_hi):
    """One periodized analysis step along the last axis of a 2D array (even width)."""
    idx = _periodic_index(x.shape[1], dec_lo.shape[0])
    taps = x[:, idx]  # (R, half, L)
    return taps @ dec_lo, taps @ dec_hi


def idwt_rows(lo, hi, rec_lo, rec_hi):
    """Inverse of :func:`dwt_rows`; returns the even-width signal rows."""
    rows, half = lo.shape
    m = 2 * half
    length = rec_lo.shape[0]
    idx = _periodic_index(m, length)
    out = np.zeros((rows, m), dtype=np.result_type(lo, rec_lo))
    for k in range(length):
        # fixed k hits distinct output positions, so fancy-index += is safe
        out[:, idx[:, k]] += rec_lo[length - 1 - k] * lo + rec_hi[length - 1 - k] * hi
    return out
