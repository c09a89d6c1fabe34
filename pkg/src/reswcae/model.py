"""Res-WCAE and the three comparison architectures.

All four kinds share one contract: a batch of noisy ``(N, H, W)`` images in,
denoised ``(N, H, W)`` images in ``[0, 1]`` out.

Res-WCAE data flow (default 103x96 input)::

    noisy -> conv s2 x4 -> y1 32x52x48, y2 64x26x24, y3 128x13x12, y4 256x7x6
    noisy -> sym4 DWT (K=3) -> 10x13x12 stack -> conv s1 x3 -> 64x13x12 -> resize 64x7x6
    [y4 || w] 320x7x6 -> convT 128x13x12 || y3 -> convT 64x26x24 || y2
                      -> convT 32x52x48 || y1 -> resize 103x96 -> conv s1 -> sigmoid

``wcae`` drops the ``|| y*`` skips, ``autoencoder`` also drops the wavelet
branch, ``dense_nn`` is a plain MLP on the flattened image.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .autodiff import DimensionError, Tensor, as_tensor, no_grad, relu, reshape, sigmoid
from .layers import ConvLayer, DenseLayer, bilinear_resize, concat_channels, same_padding, transpose_window
from .wavelet import PACKED_CHANNELS, filter_bank, pack_images, packed_grid

KINDS = ("dense_nn", "autoencoder", "wcae", "res_wcae")


class ConstructionError(ValueError):
    """A model configuration whose layer shapes cannot be reconciled."""


@dataclass
class ModelConfig:
    kind: str = "res_wcae"
    image_encoder_filters: tuple = (32, 64, 128, 256)
    wavelet_encoder_filters: tuple = (16, 32, 64)
    decoder_filters: tuple = (128, 64, 32, 1)
    dense_hidden: tuple = (1024, 256, 1024)
    wavelet: str = "sym4"
    wavelet_levels: int = 3
    height: int = 103
    width: int = 96
    dtype: str = "float32"

    def __post_init__(self):
        for f in ("image_encoder_filters", "wavelet_encoder_filters", "decoder_filters", "dense_hidden"):
            setattr(self, f, tuple(int(v) for v in getattr(self, f)))

    @property
    def uses_wavelets(self):
        return self.kind in ("wcae", "res_wcae")

    @property
    def uses_skips(self):
        return self.kind == "res_wcae"

    def to_dict(self):
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConstructionError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def tiny(cls, kind="res_wcae", **overrides):
        """A 16x16 configuration small enough for finite-difference checks."""
        base = dict(
            kind=kind,
            image_encoder_filters=(4, 8, 8, 8),
            wavelet_encoder_filters=(2, 4, 4),
            decoder_filters=(8, 8, 4, 1),
            dense_hidden=(16, 8, 16),
            wavelet="haar",
            height=16,
            width=16,
            dtype="float64",
        )
        base.update(overrides)
        return cls(**base)


@dataclass
class Model:
    config: ModelConfig
    image_encoder: list = field(default_factory=list)
    wavelet_encoder: list = field(default_factory=list)
    decoder: list = field(default_factory=list)
    dense: list = field(default_factory=list)
    shapes: dict = field(default_factory=dict)

    def parameters(self):
        """Trainable tensors in declaration order (the checkpoint order)."""
        out = []
        for layer in self.image_encoder + self.wavelet_encoder + self.decoder + self.dense:
            out.extend(layer.parameters())
        return out

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def __call__(self, noisy, packed=None, zero_skips=False):
        return forward(self, noisy, packed=packed, zero_skips=zero_skips)


def _validate(config):
    if config.kind not in KINDS:
        raise ConstructionError(f"kind must be one of {KINDS}, got {config.kind!r}")
    if config.dtype not in ("float32", "float64"):
        raise ConstructionError(f"dtype must be float32 or float64, got {config.dtype!r}")
    if config.height < 1 or config.width < 1:
        raise ConstructionError(f"bad input size {config.height}x{config.width}")
    if config.kind == "dense_nn":
        if not config.dense_hidden:
            raise ConstructionError("dense_nn needs at least one hidden layer")
        return
    enc, dec = config.image_encoder_filters, config.decoder_filters
    if len(enc) < 2:
        raise ConstructionError("image encoder needs at least two layers")
    if len(dec) != len(enc) or dec[-1] != 1:
        raise ConstructionError(
            f"decoder_filters must have {len(enc)} entries ending in 1 "
            f"(one transpose per encoder skip plus the output conv), got {list(dec)}"
        )
    if config.uses_wavelets:
        if config.wavelet_levels != 3:
            raise ConstructionError("wavelet_encoder: packing is defined for 3 levels only")
        if not config.wavelet_encoder_filters:
            raise ConstructionError("wavelet_encoder needs at least one layer")


def _dry_run(config):
    """Propagate shapes through the wiring; raises naming the first bad layer."""
    shapes = {}
    h, w = config.height, config.width
    if config.kind == "dense_nn":
        shapes["input"] = (h * w,)
        for i, n in enumerate(config.dense_hidden):
            shapes[f"dense{i + 1}"] = (n,)
        shapes["output"] = (h * w,)
        return shapes

    enc_sizes = []
    for i, c in enumerate(config.image_encoder_filters):
        h, w = same_padding(h, 2)[0], same_padding(w, 2)[0]
        shapes[f"image_encoder{i + 1}"] = (c, h, w)
        enc_sizes.append((h, w))

    if config.uses_wavelets:
        bank = filter_bank(config.wavelet)
        wh, ww = config.height, config.width
        for k in range(1, config.wavelet_levels + 1):
            if min(wh, ww) < bank.length:
                raise ConstructionError(
                    f"wavelet_encoder: level-{k} input {wh}x{ww} is smaller than the "
                    f"{bank.length}-tap {config.wavelet} filter"
                )
            wh, ww = -(-wh // 2), -(-ww // 2)
        gh, gw = packed_grid(config.height, config.width, config.wavelet_levels)
        for i, c in enumerate(config.wavelet_encoder_filters):
            shapes[f"wavelet_encoder{i + 1}"] = (c, gh, gw)

    n_up = len(config.decoder_filters) - 1
    for j in range(n_up):
        src = enc_sizes[-1 - j]
        dst = enc_sizes[-2 - j]
        name = f"decoder{j + 1}"
        try:
            transpose_window(src[0], 2, dst[0])
            transpose_window(src[1], 2, dst[1])
        except DimensionError as exc:
            raise ConstructionError(f"{name}: {exc}") from None
        shapes[name] = (config.decoder_filters[j],) + dst
    shapes["output"] = (1, config.height, config.width)
    return shapes


def check_config(config):
    """Validate ``config`` without allocating weights; returns the layer shapes."""
    _validate(config)
    return _dry_run(config)


def build(config, seed=0):
    """Construct a model with deterministic Glorot-uniform weights."""
    shapes = check_config(config)
    rng = np.random.default_rng(seed)
    dtype = np.dtype(config.dtype)
    model = Model(config=config, shapes=shapes)

    if config.kind == "dense_nn":
        sizes = (config.height * config.width,) + config.dense_hidden + (config.height * config.width,)
        model.dense = [DenseLayer(a, b, rng, dtype) for a, b in zip(sizes[:-1], sizes[1:])]
        return model

    enc = config.image_encoder_filters
    prev = 1
    for c in enc:
        model.image_encoder.append(ConvLayer(prev, c, 2, "down", rng, dtype))
        prev = c

    bottleneck = enc[-1]
    if config.uses_wavelets:
        prev = PACKED_CHANNELS
        for c in config.wavelet_encoder_filters:
            model.wavelet_encoder.append(ConvLayer(prev, c, 1, "down", rng, dtype))
            prev = c
        bottleneck += config.wavelet_encoder_filters[-1]

    dec = config.decoder_filters
    prev = bottleneck
    for j, c in enumerate(dec[:-1]):
        model.decoder.append(ConvLayer(prev, c, 2, "transpose", rng, dtype))
        prev = c + (enc[-2 - j] if config.uses_skips else 0)
    model.decoder.append(ConvLayer(prev, dec[-1], 1, "down", rng, dtype))
    return model


def param_count(model):
    return int(sum(p.size for p in model.parameters()))


def _as_batch(model, noisy):
    cfg = model.config
    x = noisy if isinstance(noisy, Tensor) else Tensor(np.asarray(noisy, dtype=cfg.dtype))
    if x.ndim == 2:
        x = reshape(x, (1,) + x.shape)
    if x.ndim != 3 or x.shape[1:] != (cfg.height, cfg.width):
        raise DimensionError(f"model expects (N, {cfg.height}, {cfg.width}) input, got {x.shape}")
    return x


def wavelet_input(model, noisy):
    """The packed ``(N, 10, h3, w3)`` wavelet stack for a batch of images."""
    cfg = model.config
    data = noisy.data if isinstance(noisy, Tensor) else np.asarray(noisy)
    if data.ndim == 2:
        data = data[None]
    bank = filter_bank(cfg.wavelet)
    return pack_images(data, bank, cfg.wavelet_levels).astype(cfg.dtype)


def forward(model, noisy, packed=None, zero_skips=False):
    """Denoise a batch; returns a ``(N, H, W)`` tensor.

    ``packed`` overrides the wavelet stack (ignored by kinds without a
    wavelet branch). ``zero_skips`` replaces the encoder-to-decoder skip
    tensors by zeros, an ablation hook only meaningful for ``res_wcae``.
    """
    cfg = model.config
    x = _as_batch(model, noisy)
    n = x.shape[0]

    if cfg.kind == "dense_nn":
        h = reshape(x, (n, cfg.height * cfg.width))
        for layer in model.dense[:-1]:
            h = relu(layer(h))
        out = sigmoid(model.dense[-1](h))
        return reshape(out, (n, cfg.height, cfg.width))

    h = reshape(x, (n, 1, cfg.height, cfg.width))
    feats = []
    for layer in model.image_encoder:
        h = relu(layer(h))
        feats.append(h)

    if cfg.uses_wavelets:
        if packed is None:
            packed = wavelet_input(model, x)
        wv = as_tensor(np.asarray(packed.data if isinstance(packed, Tensor) else packed, dtype=cfg.dtype))
        if wv.ndim != 4 or wv.shape[0] != n or wv.shape[1] != PACKED_CHANNELS:
            raise DimensionError(f"wavelet stack must be (N={n}, {PACKED_CHANNELS}, h, w), got {wv.shape}")
        for layer in model.wavelet_encoder:
            wv = relu(layer(wv))
        wv = bilinear_resize(wv, *h.shape[2:])
        h = concat_channels(h, wv)

    for j, layer in enumerate(model.decoder[:-1]):
        skip = feats[-2 - j]
        h = relu(layer(h, target=skip.shape[2:]))
        if cfg.uses_skips:
            if zero_skips:
                skip = Tensor(np.zeros(skip.shape, dtype=skip.dtype))
            h = concat_channels(h, skip)

    h = bilinear_resize(h, cfg.height, cfg.width)
    out = sigmoid(model.decoder[-1](h))
    return reshape(out, (n, cfg.height, cfg.width))


def denoise(model, images, batch_size=32):
    """Inference helper: numpy in, numpy out, no graph recorded."""
    images = np.asarray(images)
    single = images.ndim == 2
    if single:
        images = images[None]
    outs = []
    with no_grad():
        for lo in range(0, len(images), batch_size):
            outs.append(forward(model, images[lo:lo + batch_size]).data)
    out = np.concatenate(outs) if outs else np.empty((0,) + images.shape[1:])
    return out[0] if single else out
