"""Mini-batch training, evaluation sweeps and checkpoint files.

Noise is redrawn every epoch for every training image from a seed derived
from ``(seed, epoch, image index)``. Validation and evaluation use fixed
per-image seeds, so their numbers are comparable across epochs and runs.

Checkpoint layout (little endian)::

    b"RWAE" | u16 version | u32 n | n bytes JSON metadata (config, history, ...)
    | u32 tensor count | per tensor: u8 ndim, ndim x u32 dims, data
    | u32 CRC32 of everything before it

Tensor data is float32; float64 models (the small test configs) are stored as
float64 so that a round trip stays bitwise exact.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import os
import struct
import tempfile
import zlib
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .autodiff import no_grad
from .data import add_awgn_batch
from .losses import LossConfig, reconstruction_loss
from .metrics import mse, psnr, ssim
from .model import ModelConfig, build, denoise, forward

log = logging.getLogger(__name__)

MAGIC = b"RWAE"
FORMAT_VERSION = 1

# stream tags keeping derived seeds for different purposes apart
_TRAIN_NOISE, _TRAIN_SIGMA, _VAL_NOISE, _VAL_SIGMA, _EVAL_NOISE = range(5)


class TrainingDiverged(RuntimeError):
    def __init__(self, message, checkpoint=None):
        super().__init__(message)
        self.checkpoint = checkpoint


class CheckpointError(ValueError):
    """Unreadable, truncated or corrupt checkpoint file."""


class IncompatibleCheckpointError(CheckpointError):
    """Checkpoint from another format version or architecture."""


@dataclass
class TrainConfig:
    batch_size: int = 32
    learning_rate: float = 1e-3
    max_epochs: int = 200
    lam: float = 1e-3
    sigma: object = (100.0, 200.0)
    optimizer: str = "adam"
    seed: int = 0
    clip_noise: bool = False
    checkpoint_dir: object = None

    def __post_init__(self):
        if isinstance(self.sigma, list):
            self.sigma = tuple(self.sigma)
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if not self.learning_rate >= 0:
            raise ValueError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.max_epochs < 1:
            raise ValueError(f"max_epochs must be >= 1, got {self.max_epochs}")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"optimizer must be adam or sgd, got {self.optimizer!r}")
        lo, hi = self.sigma_range
        if lo < 0 or hi < lo:
            raise ValueError(f"bad sigma setting {self.sigma!r}")

    @property
    def sigma_range(self):
        if isinstance(self.sigma, (tuple, list)):
            lo, hi = self.sigma
            return float(lo), float(hi)
        return float(self.sigma), float(self.sigma)

    def sample_sigmas(self, keys):
        """One sigma per seed key: the fixed value, or uniform over the range."""
        lo, hi = self.sigma_range
        if lo == hi:
            return np.full(len(keys), lo)
        return np.array([np.random.default_rng(k).uniform(lo, hi) for k in keys])


class Adam:
    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.t = 0

    def step(self):
        self.t += 1
        c1 = 1 - self.beta1**self.t
        c2 = 1 - self.beta2**self.t
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            g = p.grad
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
            p.data -= (self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)).astype(p.dtype, copy=False)

    def zero_grad(self):
        for p in self.params:
            p.grad = None


class SGD:
    def __init__(self, params, lr=1e-3):
        self.params = list(params)
        self.lr = lr

    def step(self):
        for p in self.params:
            if p.grad is not None:
                p.data -= (self.lr * p.grad).astype(p.dtype, copy=False)

    def zero_grad(self):
        for p in self.params:
            p.grad = None


def make_optimizer(name, params, lr):
    return Adam(params, lr) if name == "adam" else SGD(params, lr)


@dataclass
class TrainHistory:
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    val_psnr: list = field(default_factory=list)
    best_epoch: int = -1

    def __len__(self):
        return len(self.train_loss)

    def rows(self):
        for i in range(len(self)):
            yield {"epoch": i + 1, "train_loss": self.train_loss[i], "val_loss": self.val_loss[i], "val_psnr": self.val_psnr[i]}

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=["epoch", "train_loss", "val_loss", "val_psnr"])
            w.writeheader()
            for row in self.rows():
                w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})


def noisy_split(images, ids, cfg, noise_tag, sigma_tag, epoch=0):
    keys = [(cfg.seed, sigma_tag, epoch, int(i)) for i in ids]
    sigmas = cfg.sample_sigmas(keys)
    seeds = [(cfg.seed, noise_tag, epoch, int(i)) for i in ids]
    return add_awgn_batch(images, sigmas, seeds, clip=cfg.clip_noise)


def _batch_loss(model, noisy, clean, loss_cfg):
    out = forward(model, noisy.astype(model.config.dtype))
    return out, reconstruction_loss(out, clean.astype(model.config.dtype), loss_cfg)


def validate(model, clean, noisy, loss_cfg, batch_size=32):
    """Mean per-image loss and PSNR on a fixed noisy set."""
    total, psnrs = 0.0, []
    with no_grad():
        for lo in range(0, len(clean), batch_size):
            out, loss = _batch_loss(model, noisy[lo:lo + batch_size], clean[lo:lo + batch_size], loss_cfg)
            total += loss.item() * len(out.data)
            psnrs.extend(psnr(o, c) for o, c in zip(out.data, clean[lo:lo + batch_size]))
    return total / len(clean), float(np.mean(psnrs))


def _snapshot(model):
    return [p.data.copy() for p in model.parameters()]


def _restore(model, arrays):
    for p, a in zip(model.parameters(), arrays):
        p.data = a.copy()


def train(model, images, split, cfg, loss_cfg=None, on_epoch=None):
    """Optimize ``model`` on ``split.train``; keep the best validation epoch.

    Returns ``(model, history)``; the model carries the best-epoch weights.
    A checkpoint ``best.rwae`` is written to ``cfg.checkpoint_dir`` (if set)
    at every validation improvement.
    """
    loss_cfg = loss_cfg if loss_cfg is not None else LossConfig(lam=cfg.lam)
    images = np.asarray(images)
    train_ids = np.asarray(split.train)
    val_ids = np.asarray(split.validation)
    if len(train_ids) == 0 or len(val_ids) == 0:
        raise ValueError("training needs non-empty train and validation sets")

    val_clean = images[val_ids]
    val_noisy = noisy_split(val_clean, val_ids, cfg, _VAL_NOISE, _VAL_SIGMA)
    opt = make_optimizer(cfg.optimizer, model.parameters(), cfg.learning_rate)
    history = TrainHistory()
    best_loss, best_params, ckpt = math.inf, _snapshot(model), None
    if cfg.checkpoint_dir is not None:
        Path(cfg.checkpoint_dir).mkdir(parents=True, exist_ok=True)

    for epoch in range(cfg.max_epochs):
        order = np.random.default_rng((cfg.seed, epoch)).permutation(train_ids)
        running = 0.0
        for lo in range(0, len(order), cfg.batch_size):
            ids = order[lo:lo + cfg.batch_size]
            clean = images[ids]
            noisy = noisy_split(clean, ids, cfg, _TRAIN_NOISE, _TRAIN_SIGMA, epoch + 1)
            _, loss = _batch_loss(model, noisy, clean, loss_cfg)
            value = loss.item()
            if not math.isfinite(value):
                _restore(model, best_params)
                raise TrainingDiverged(f"non-finite loss at epoch {epoch + 1}", ckpt)
            opt.zero_grad()
            loss.backward()
            opt.step()
            running += value * len(ids)

        val_loss, val_psnr = validate(model, val_clean, val_noisy, loss_cfg, cfg.batch_size)
        if not math.isfinite(val_loss):
            _restore(model, best_params)
            raise TrainingDiverged(f"non-finite validation loss at epoch {epoch + 1}", ckpt)
        history.train_loss.append(running / len(order))
        history.val_loss.append(val_loss)
        history.val_psnr.append(val_psnr)
        if val_loss < best_loss:
            best_loss, best_params = val_loss, _snapshot(model)
            history.best_epoch = epoch
            if cfg.checkpoint_dir is not None:
                ckpt = Path(cfg.checkpoint_dir) / "best.rwae"
                save_checkpoint(model, ckpt, history)
        log.info("epoch %d train %.4f val %.4f val_psnr %.2f", epoch + 1, history.train_loss[-1], val_loss, val_psnr)
        if on_epoch is not None:
            on_epoch(epoch, history)

    _restore(model, best_params)
    return model, history


# --- evaluation ----------------------------------------------------------------


@dataclass
class EvalReport:
    sigmas: list
    rows: list = field(default_factory=list)

    FIELDS = ("model", "sigma", "psnr", "ssim", "mse", "delta_psnr")

    def row(self, model, sigma):
        for r in self.rows:
            if r["model"] == model and r["sigma"] == sigma:
                return r
        raise KeyError((model, sigma))

    def models(self):
        return list(dict.fromkeys(r["model"] for r in self.rows))

    def extend(self, other):
        known = {(r["model"], r["sigma"]) for r in self.rows}
        self.rows.extend(r for r in other.rows if (r["model"], r["sigma"]) not in known)
        return self

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=self.FIELDS)
            w.writeheader()
            for r in self.rows:
                w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})


def _summary(outputs, clean):
    return (
        float(np.mean([psnr(o, c) for o, c in zip(outputs, clean)])),
        float(np.mean([ssim(o, c) for o, c in zip(outputs, clean)])),
        float(np.mean([mse(o, c) for o, c in zip(outputs, clean)])),
    )


def evaluate(model, test_images, sigmas=(0, 25, 50, 100, 150, 200), seed=0, clip=False, name=None, batch_size=32):
    """Average PSNR/SSIM/MSE of noisy and denoised images for every sigma.

    Rows named ``"awgn"`` describe the noisy input itself; their
    ``delta_psnr`` is 0 by definition. Model rows carry
    ``delta_psnr = psnr(model) - psnr(noisy)``.
    """
    test_images = np.asarray(test_images)
    name = name or (model.config.kind if model is not None else "awgn")
    report = EvalReport(sigmas=[float(s) for s in sigmas])
    for sigma in report.sigmas:
        seeds = [(seed, _EVAL_NOISE, int(round(sigma * 1000)), i) for i in range(len(test_images))]
        noisy = add_awgn_batch(test_images, sigma, seeds, clip=clip)
        n_psnr, n_ssim, n_mse = _summary(noisy, test_images)
        report.rows.append({"model": "awgn", "sigma": sigma, "psnr": n_psnr, "ssim": n_ssim, "mse": n_mse, "delta_psnr": 0.0})
        if model is None:
            continue
        out = denoise(model, noisy.astype(model.config.dtype), batch_size)
        m_psnr, m_ssim, m_mse = _summary(out, test_images)
        report.rows.append(
            {"model": name, "sigma": sigma, "psnr": m_psnr, "ssim": m_ssim, "mse": m_mse, "delta_psnr": m_psnr - n_psnr}
        )
    return report


# --- checkpoints -----------------------------------------------------------------


def _wire_dtype(config):
    return np.dtype("<f8") if config.dtype == "float64" else np.dtype("<f4")


def save_checkpoint(model, path, history=None, extra=None):
    """Write ``model`` atomically (temp file + rename)."""
    meta = {"config": model.config.to_dict()}
    if history is not None:
        meta["history"] = asdict(history)
    if extra:
        meta["extra"] = extra
    blob = json.dumps(meta, sort_keys=True).encode()
    parts = [MAGIC, struct.pack("<HI", FORMAT_VERSION, len(blob)), blob]
    params = model.parameters()
    fmt = _wire_dtype(model.config)
    parts.append(struct.pack("<I", len(params)))
    for p in params:
        parts.append(struct.pack("<B", p.ndim) + struct.pack(f"<{p.ndim}I", *p.shape))
        parts.append(np.ascontiguousarray(p.data, dtype=fmt).tobytes())
    payload = b"".join(parts)
    payload += struct.pack("<I", zlib.crc32(payload))

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


class _Reader:
    def __init__(self, buf):
        self.buf, self.pos = buf, 0

    def take(self, n):
        if self.pos + n > len(self.buf):
            raise CheckpointError("checkpoint is truncated")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def read_checkpoint(path, expect_config=None):
    """Load ``(model, metadata)``; raises :class:`CheckpointError` on any damage."""
    try:
        buf = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if len(buf) < 4 or buf[:4] != MAGIC:
        raise CheckpointError(f"{path} is not a checkpoint (bad magic)")
    if len(buf) < 14:
        raise CheckpointError("checkpoint is truncated")
    (crc,) = struct.unpack("<I", buf[-4:])
    r = _Reader(buf[:-4])
    r.take(4)
    version, n_meta = r.unpack("<HI")
    if version != FORMAT_VERSION:
        raise IncompatibleCheckpointError(f"checkpoint format version {version}, this build reads {FORMAT_VERSION}")
    if zlib.crc32(buf[:-4]) != crc:
        raise CheckpointError("checkpoint is truncated or corrupt (checksum mismatch)")
    meta = json.loads(r.take(n_meta).decode())
    try:
        config = ModelConfig.from_dict(meta["config"])
    except (KeyError, TypeError, ValueError) as exc:
        raise IncompatibleCheckpointError(f"checkpoint config unusable: {exc}") from exc
    if expect_config is not None and expect_config.to_dict() != config.to_dict():
        raise IncompatibleCheckpointError("checkpoint architecture differs from the requested configuration")

    model = build(config, seed=0)
    params = model.parameters()
    fmt = _wire_dtype(config)
    (count,) = r.unpack("<I")
    if count != len(params):
        raise IncompatibleCheckpointError(f"checkpoint holds {count} tensors, architecture has {len(params)}")
    loaded = []
    for p in params:
        (ndim,) = r.unpack("<B")
        shape = r.unpack(f"<{ndim}I")
        if tuple(shape) != p.shape:
            raise IncompatibleCheckpointError(f"tensor shape {shape} does not match parameter {p.shape}")
        n = int(np.prod(shape)) if shape else 1
        loaded.append(np.frombuffer(r.take(fmt.itemsize * n), dtype=fmt).reshape(shape))
    if r.pos != len(r.buf):
        raise CheckpointError("trailing bytes after the last tensor")
    for p, arr in zip(params, loaded):
        p.data = arr.astype(config.dtype)
    return model, meta


def load_checkpoint(path, expect_config=None):
    return read_checkpoint(path, expect_config)[0]
