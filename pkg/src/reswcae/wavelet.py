"""Multilevel 2D discrete wavelet transform with periodized boundaries.

Odd-length signals are extended by repeating their last sample before each
analysis step, so a level-``k`` subimage is ``ceil(H / 2**k)`` tall. The
synthesis drops that extra sample again, which keeps reconstruction exact.

Detail naming per level: ``horizontal`` is high-pass along rows (axis 0) and
low-pass along columns, ``vertical`` the reverse, ``diagonal`` high-pass on
both.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .autodiff import DimensionError
from .layers import bilinear_matrix

# Least-asymmetric Daubechies 8-tap filter (sym4), analysis low-pass. Values
# are the published coefficients polished to double precision against the
# orthonormality and vanishing-moment equations.
_SYM4_DEC_LO = (
    -0.07576571478950314,
    -0.029635527646001834,
    0.4976186676327757,
    0.8037387518051319,
    0.2978577956053054,
    -0.09921954357663355,
    -0.012603967262030927,
    0.03222310060405162,
)
_R3 = np.sqrt(3.0)
_DB2_DEC_LO = tuple(np.array([1 - _R3, 3 - _R3, 3 + _R3, 1 + _R3]) / (4 * np.sqrt(2.0)))
_HAAR_DEC_LO = (np.sqrt(0.5), np.sqrt(0.5))

_BUILTIN = {"sym4": _SYM4_DEC_LO, "db2": _DB2_DEC_LO, "haar": _HAAR_DEC_LO}


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class FilterBank:
    name: str
    dec_lo: np.ndarray
    dec_hi: np.ndarray
    rec_lo: np.ndarray
    rec_hi: np.ndarray

    @classmethod
    def orthogonal(cls, name, dec_lo):
        """Build the full quadrature-mirror bank from an analysis low-pass."""
        dec_lo = np.asarray(dec_lo, dtype=np.float64)
        if dec_lo.ndim != 1 or dec_lo.size % 2:
            raise ConfigurationError(f"filter length must be even, got {dec_lo.size}")
        rec_lo = dec_lo[::-1].copy()
        signs = (-1.0) ** (np.arange(dec_lo.size) + 1)
        dec_hi = signs * rec_lo
        rec_hi = dec_hi[::-1].copy()
        return cls(name, dec_lo, dec_hi, rec_lo, rec_hi)

    @property
    def length(self):
        return self.dec_lo.size


def filter_bank(name="sym4"):
    try:
        return FilterBank.orthogonal(name, _BUILTIN[name])
    except KeyError:
        raise ConfigurationError(f"unknown wavelet {name!r}; built in: {sorted(_BUILTIN)}") from None


def load_filter_bank(path, name=None):
    """Read a bank from a text file with one filter per line.

    One line is taken as an orthogonal analysis low-pass; four lines are
    ``dec_lo, dec_hi, rec_lo, rec_hi`` in that order. Blank lines and ``#``
    comments are ignored.
    """
    path = Path(path)
    rows = []
    for line in path.read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            rows.append(np.array([float(v) for v in line.replace(",", " ").split()]))
        except ValueError as exc:
            raise ConfigurationError(f"{path}: {exc}") from None
    name = name or path.stem
    if len(rows) == 1:
        return FilterBank.orthogonal(name, rows[0])
    if len(rows) == 4:
        if len({r.size for r in rows}) != 1 or rows[0].size % 2:
            raise ConfigurationError(f"{path}: filters must share one even length")
        return FilterBank(name, *rows)
    raise ConfigurationError(f"{path}: expected 1 or 4 filter lines, found {len(rows)}")


@dataclass
class WaveletPyramid:
    """Approximation plus ``(horizontal, vertical, diagonal)`` details per level.

    ``details[0]`` is level 1 (finest). ``shapes[k]`` is the size of the
    signal entering analysis level ``k + 1``; ``shapes[0]`` is the image size.
    """

    approx: np.ndarray
    details: list = field(default_factory=list)
    shapes: list = field(default_factory=list)

    @property
    def levels(self):
        return len(self.details)

    def subimages(self):
        """All ``3K + 1`` arrays: approx, then coarsest to finest details."""
        out = [self.approx]
        for level in reversed(self.details):
            out.extend(level)
        return out


def _analyze_last_axis(x, bank):
    if x.shape[-1] % 2:
        x = np.concatenate([x, x[..., -1:]], axis=-1)
    rows = x.reshape(-1, x.shape[-1])
    lo, hi = kernels.dwt_rows(np.ascontiguousarray(rows), bank.dec_lo, bank.dec_hi)
    new_shape = x.shape[:-1] + (lo.shape[-1],)
    return lo.reshape(new_shape), hi.reshape(new_shape)


def _synthesize_last_axis(lo, hi, bank, length):
    rows_lo = np.ascontiguousarray(lo.reshape(-1, lo.shape[-1]))
    rows_hi = np.ascontiguousarray(hi.reshape(-1, hi.shape[-1]))
    out = kernels.idwt_rows(rows_lo, rows_hi, bank.rec_lo, bank.rec_hi)
    return out.reshape(lo.shape[:-1] + (out.shape[-1],))[..., :length]


def dwt2_level(x, bank):
    """One 2D analysis step: returns ``(approx, (horizontal, vertical, diagonal))``."""
    lo_c, hi_c = _analyze_last_axis(x, bank)
    ll, hl = (np.swapaxes(a, 0, 1) for a in _analyze_last_axis(np.swapaxes(lo_c, 0, 1), bank))
    lh, hh = (np.swapaxes(a, 0, 1) for a in _analyze_last_axis(np.swapaxes(hi_c, 0, 1), bank))
    # hl: high along rows, low along columns
    return ll, (hl, lh, hh)


def idwt2_level(approx, detail, bank, shape):
    hl, lh, hh = detail
    h, w = shape
    lo_c = np.swapaxes(_synthesize_last_axis(np.swapaxes(approx, 0, 1), np.swapaxes(hl, 0, 1), bank, h), 0, 1)
    hi_c = np.swapaxes(_synthesize_last_axis(np.swapaxes(lh, 0, 1), np.swapaxes(hh, 0, 1), bank, h), 0, 1)
    return _synthesize_last_axis(lo_c, hi_c, bank, w)


def dwt2(image, bank=None, levels=3):
    """K-level decomposition of a 2D image into ``3K + 1`` subimages."""
    bank = bank if bank is not None else filter_bank("sym4")
    x = np.asarray(image, dtype=np.float64)
    if x.ndim != 2:
        raise DimensionError(f"dwt2 expects a 2D image, got shape {x.shape}")
    if levels < 1:
        raise ConfigurationError(f"levels must be >= 1, got {levels}")
    details, shapes = [], []
    for k in range(1, levels + 1):
        if min(x.shape) < bank.length:
            raise DimensionError(
                f"level {k}: input {x.shape[0]}x{x.shape[1]} is smaller than the "
                f"{bank.length}-tap {bank.name} filter"
            )
        shapes.append(x.shape)
        x, detail = dwt2_level(x, bank)
        details.append(detail)
    return WaveletPyramid(x, details, shapes)


def idwt2(pyramid, bank=None):
    bank = bank if bank is not None else filter_bank("sym4")
    if len(pyramid.shapes) != pyramid.levels:
        raise DimensionError("pyramid has no size record for every level")
    x = np.asarray(pyramid.approx, dtype=np.float64)
    for k in range(pyramid.levels, 0, -1):
        h, w = pyramid.shapes[k - 1]
        expect = (-(-h // 2), -(-w // 2))
        sizes = [x.shape] + [d.shape for d in pyramid.details[k - 1]]
        if any(s != expect for s in sizes):
            raise DimensionError(f"level {k}: subimage sizes {sizes} do not match expected {expect}")
        x = idwt2_level(x, pyramid.details[k - 1], bank, (h, w))
    return x


def max_levels(h, w, filter_length):
    """Deepest level at which every analysis input is at least filter-length."""
    k = 0
    while min(h, w) >= filter_length:
        k += 1
        h, w = -(-h // 2), -(-w // 2)
    return k


PACKED_CHANNELS = 10


def pack_pyramid(pyramid, target_h, target_w):
    """Stack a 3-level pyramid into a ``(10, target_h, target_w)`` array.

    Channel order is fixed: approx, level-3 H/V/D, level-2 H/V/D, level-1
    H/V/D. Each subimage is bilinearly resized (align corners) to the target.
    """
    if pyramid.levels != 3:
        raise ConfigurationError(f"packing needs a 3-level pyramid, got {pyramid.levels}")
    out = np.empty((PACKED_CHANNELS, target_h, target_w), dtype=np.float64)
    for c, sub in enumerate(pyramid.subimages()):
        if sub.shape == (target_h, target_w):
            out[c] = sub
        else:
            rh = bilinear_matrix(sub.shape[0], target_h)
            rw = bilinear_matrix(sub.shape[1], target_w)
            out[c] = rh @ sub @ rw.T
    return out


def packed_grid(h, w, levels=3):
    """Spatial size of the level-``levels`` subbands for an ``h x w`` image."""
    for _ in range(levels):
        h, w = -(-h // 2), -(-w // 2)
    return h, w


def pack_images(images, bank=None, levels=3):
    """Decompose and pack a batch ``(N, H, W)`` into ``(N, 10, h3, w3)``."""
    images = np.asarray(images, dtype=np.float64)
    th, tw = packed_grid(*images.shape[-2:], levels)
    return np.stack([pack_pyramid(dwt2(im, bank, levels), th, tw) for im in images])
