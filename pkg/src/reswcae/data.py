"""Degradation model, image I/O, dataset splits and synthetic fingerprints.

Images are 2D float arrays in ``[0, 1]`` (8-bit value / 255). Noise levels
are given on the 0-255 intensity scale, as is customary for AWGN sigmas.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np
from PIL import Image as PILImage
from scipy.ndimage import gaussian_filter, map_coordinates

log = logging.getLogger(__name__)

DEFAULT_SIZE = (103, 96)
IMAGE_SUFFIXES = {".bmp", ".pgm", ".png", ".tif", ".tiff", ".jpg", ".jpeg"}


class DataError(ValueError):
    pass


@dataclass(frozen=True)
class NoiseSpec:
    """Additive white Gaussian noise with std ``sigma / 255``.

    ``clip=True`` clamps the noisy result to ``[0, 1]`` like an 8-bit sensor
    would. The default keeps the plain additive model.
    """

    sigma: float
    seed: object = 0
    clip: bool = False

    def __post_init__(self):
        if not self.sigma >= 0:
            raise DataError(f"sigma must be >= 0, got {self.sigma}")


def add_awgn(image, spec):
    image = np.asarray(image)
    if spec.sigma == 0:
        return image.copy()
    rng = np.random.default_rng(spec.seed)
    noise = rng.normal(0.0, spec.sigma / 255.0, size=image.shape)
    noisy = image + noise
    if spec.clip:
        noisy = np.clip(noisy, 0.0, 1.0)
    return noisy.astype(image.dtype, copy=False)


def add_awgn_batch(images, sigmas, seeds, clip=False):
    """Noise a stack of images, each with its own sigma and seed."""
    images = np.asarray(images)
    sigmas = np.broadcast_to(np.asarray(sigmas, dtype=np.float64), (len(images),))
    return np.stack([add_awgn(im, NoiseSpec(float(s), seed, clip)) for im, s, seed in zip(images, sigmas, seeds)])


# --- image files -------------------------------------------------------------


def read_image(path, size=DEFAULT_SIZE):
    """Read an 8-bit grayscale file as a ``[0, 1]`` array of ``size``."""
    with PILImage.open(path) as img:
        img = img.convert("L")
        if size is not None and (img.height, img.width) != tuple(size):
            log.warning("%s is %dx%d, resizing to %dx%d", path, img.height, img.width, *size)
            img = img.resize((size[1], size[0]), PILImage.BILINEAR)
        return np.asarray(img, dtype=np.float64) / 255.0


def to_uint8(image):
    return np.round(np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0) * 255.0).astype(np.uint8)


def write_pgm(path, image):
    """Write a binary (P5) PGM; values are clipped to ``[0, 1]`` and quantized."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    PILImage.fromarray(to_uint8(image), mode="L").save(path, format="PPM")


class LoadedDataset(NamedTuple):
    images: np.ndarray
    names: list


def image_files(path):
    path = Path(path)
    if path.is_file():
        return [path]
    return sorted(p for p in path.iterdir() if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES)


def load_dataset(path, size=DEFAULT_SIZE):
    """Load every readable image under ``path`` in filename order."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path} does not exist")
    images, names = [], []
    for f in image_files(path):
        try:
            images.append(read_image(f, size))
        except (OSError, ValueError) as exc:
            log.warning("skipping unreadable image %s: %s", f, exc)
            continue
        names.append(f.name)
    if not images:
        raise DataError(f"no readable images in {path}")
    return LoadedDataset(np.stack(images), names)


# --- splits ------------------------------------------------------------------


@dataclass
class DatasetSplit:
    """Index partition of a dataset into train / validation / test."""

    train: np.ndarray
    validation: np.ndarray
    test: np.ndarray
    ratios: tuple = (70, 15, 15)
    seed: int = 0

    def select(self, images, part):
        return np.asarray(images)[getattr(self, part)]

    def sizes(self):
        return len(self.train), len(self.validation), len(self.test)


def split_dataset(n_items, ratios=(70, 15, 15), seed=0):
    """Seeded shuffle, then partition. Rounding remainders go to train.

    ``n_items`` may be a count or a sequence of images.
    """
    n = n_items if isinstance(n_items, (int, np.integer)) else len(n_items)
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or min(ratios) < 0 or ratios[0] <= 0:
        raise DataError(f"ratios must be three non-negative numbers with train > 0, got {ratios}")
    parts = sum(1 for r in ratios if r > 0)
    if n < max(parts, 3):
        raise DataError(f"need at least {max(parts, 3)} images to split, got {n}")
    total = sum(ratios)
    counts = []
    for r in ratios[1:]:
        c = int(np.floor(n * r / total + 1e-9))
        counts.append(max(c, 1) if r > 0 else 0)
    n_val, n_test = counts
    order = np.random.default_rng(seed).permutation(n)
    n_train = n - n_val - n_test
    return DatasetSplit(
        train=order[:n_train],
        validation=order[n_train:n_train + n_val],
        test=order[n_train + n_val:],
        ratios=ratios,
        seed=seed,
    )


# --- synthetic fingerprints ----------------------------------------------------


def _smooth_field(rng, yy, xx, amplitude, n_waves=3, scale=60.0):
    field = np.zeros_like(yy)
    for _ in range(n_waves):
        theta = rng.uniform(0, np.pi)
        freq = rng.uniform(0.5, 1.5) / scale
        phase = rng.uniform(0, 2 * np.pi)
        field += np.sin(2 * np.pi * freq * (xx * np.cos(theta) + yy * np.sin(theta)) + phase)
    return amplitude * field / n_waves


def synth_fingerprint(seed, height=DEFAULT_SIZE[0], width=DEFAULT_SIZE[1]):
    """Procedural fingerprint-like image, deterministic in ``seed``.

    A loop/whorl-like phase map (elliptic distance to a core, tilted by a
    linear term and warped by a smooth random field) drives cosine ridges with
    a 4.5-6 pixel period. The ridges are smoothed along their own direction,
    sharpened, placed inside a soft elliptical finger mask on a light
    background and finally stretched to span ``[0, 1]``.
    """
    if height < 32 or width < 32:
        raise DataError(f"synthetic fingerprints need at least 32x32, got {height}x{width}")
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    cy = height * rng.uniform(0.35, 0.6)
    cx = width * rng.uniform(0.4, 0.6)
    period = rng.uniform(4.5, 6.0)

    ay, ax = rng.uniform(0.85, 1.2), rng.uniform(0.85, 1.2)
    radial = np.hypot((yy - cy) / ay, (xx - cx) / ax)
    tilt = rng.uniform(0, 2 * np.pi)
    linear = rng.uniform(0.0, 0.6) * ((xx - cx) * np.cos(tilt) + (yy - cy) * np.sin(tilt))
    warp = _smooth_field(rng, yy, xx, amplitude=rng.uniform(2.0, 5.0))
    phase = (radial + linear + warp) / period
    ridges = np.cos(2 * np.pi * phase)

    # smooth along the local ridge direction (perpendicular to the phase gradient)
    gy, gx = np.gradient(phase)
    norm = np.hypot(gy, gx) + 1e-12
    ty, tx = gx / norm, -gy / norm
    offsets = (-2.0, -1.0, 0.0, 1.0, 2.0)
    weights = np.array([0.1, 0.2, 0.4, 0.2, 0.1])
    blurred = np.zeros_like(ridges)
    for wgt, t in zip(weights, offsets):
        blurred += wgt * map_coordinates(ridges, [yy + t * ty, xx + t * tx], order=1, mode="nearest")
    ridges = np.tanh(2.0 * blurred) / np.tanh(2.0)

    ry, rx = height * rng.uniform(0.40, 0.47), width * rng.uniform(0.38, 0.46)
    ell = np.hypot((yy - height / 2) / ry, (xx - width / 2) / rx)
    mask = gaussian_filter((ell < 1.0).astype(np.float64), 2.0)
    background = rng.uniform(0.85, 1.0)
    img = mask * (0.5 + 0.5 * ridges) + (1.0 - mask) * background
    lo, hi = img.min(), img.max()
    return (img - lo) / (hi - lo)


def synth_dataset(n, seed=0, height=DEFAULT_SIZE[0], width=DEFAULT_SIZE[1]):
    """``n`` synthetic fingerprints; image ``i`` is ``synth_fingerprint((seed, i))``."""
    return np.stack([synth_fingerprint((seed, i), height, width) for i in range(n)])
