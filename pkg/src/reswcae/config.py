"""Run configuration: defaults < INI file < command-line flags.

The INI file uses the sections ``[model]``, ``[train]``, ``[loss]``,
``[noise]``, ``[data]`` and ``[run]``. Every key is optional; unknown keys
are rejected so typos do not silently fall back to defaults. List values are
comma separated.
"""
from __future__ import annotations

import configparser
import copy
from pathlib import Path

from .losses import LossConfig
from .model import ModelConfig, check_config
from .training import TrainConfig


class ConfigError(ValueError):
    pass


def _ints(text):
    return tuple(int(v) for v in str(text).replace(",", " ").split())


def _floats(text):
    return tuple(float(v) for v in str(text).replace(",", " ").split())


def _bool(text):
    v = str(text).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _path(text):
    text = str(text).strip()
    return None if text in ("", "none") else text


def _sigma(text):
    vals = _floats(text)
    if len(vals) == 1:
        return vals[0]
    if len(vals) == 2:
        return vals
    raise ValueError(f"sigma takes one value or a lo,hi range, got {text!r}")


_m, _t = ModelConfig(), TrainConfig()

# section -> key -> (parser, default)
SCHEMA = {
    "model": {
        "kind": (str, _m.kind),
        "image_encoder_filters": (_ints, _m.image_encoder_filters),
        "wavelet_encoder_filters": (_ints, _m.wavelet_encoder_filters),
        "decoder_filters": (_ints, _m.decoder_filters),
        "dense_hidden": (_ints, _m.dense_hidden),
        "wavelet": (str, _m.wavelet),
        "wavelet_levels": (int, _m.wavelet_levels),
        "height": (int, _m.height),
        "width": (int, _m.width),
        "dtype": (str, _m.dtype),
    },
    "train": {
        "batch_size": (int, _t.batch_size),
        "learning_rate": (float, _t.learning_rate),
        "epochs": (int, _t.max_epochs),
        "optimizer": (str, _t.optimizer),
        "sigma": (_sigma, _t.sigma),
    },
    "loss": {
        "lam": (float, LossConfig().lam),
        "eps": (float, LossConfig().eps),
    },
    "noise": {
        "eval_sigmas": (_floats, (0.0, 25.0, 50.0, 100.0, 150.0, 200.0)),
        "clip": (_bool, False),
    },
    "data": {
        "path": (_path, None),
        "synthetic": (int, 0),
        "ratios": (_floats, (70.0, 15.0, 15.0)),
    },
    "run": {
        "seed": (int, 0),
        "out": (str, "runs/latest"),
    },
}


def _format(value):
    if value is None:
        return "none"
    if isinstance(value, (tuple, list)):
        return ", ".join(_format(v) for v in value)
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


class RunConfig:
    """Fully resolved settings for one command.

    ``values[section][key]`` holds typed values; the ``*_config`` helpers
    build the library dataclasses from them.
    """

    def __init__(self, values=None):
        self.values = values if values is not None else {s: {k: d for k, (_, d) in keys.items()} for s, keys in SCHEMA.items()}

    def __getitem__(self, section):
        return self.values[section]

    def copy(self):
        return RunConfig(copy.deepcopy(self.values))

    @property
    def seed(self):
        return self.values["run"]["seed"]

    @property
    def out(self):
        return Path(self.values["run"]["out"])

    def set(self, section, key, value, source="flag"):
        if section not in SCHEMA or key not in SCHEMA[section]:
            raise ConfigError(f"unknown setting [{section}] {key} ({source})")
        parser = SCHEMA[section][key][0]
        if isinstance(value, str):
            try:
                value = parser(value)
            except ValueError as exc:
                raise ConfigError(f"[{section}] {key} ({source}): {exc}") from None
        self.values[section][key] = value

    def update_from_file(self, path):
        parser = configparser.ConfigParser(interpolation=None)
        try:
            with open(path) as fh:
                parser.read_file(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from None
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from None
        for section in parser.sections():
            if section not in SCHEMA:
                raise ConfigError(f"{path}: unknown section [{section}]")
            for key, raw in parser.items(section):
                self.set(section, key, raw, source=str(path))

    def model_config(self, kind=None):
        d = dict(self.values["model"])
        if kind is not None:
            d["kind"] = kind
        return ModelConfig(**d)

    def train_config(self, checkpoint_dir=None):
        t = self.values["train"]
        return TrainConfig(
            batch_size=t["batch_size"],
            learning_rate=t["learning_rate"],
            max_epochs=t["epochs"],
            lam=self.values["loss"]["lam"],
            sigma=t["sigma"],
            optimizer=t["optimizer"],
            seed=self.seed,
            clip_noise=self.values["noise"]["clip"],
            checkpoint_dir=checkpoint_dir,
        )

    def loss_config(self):
        return LossConfig(**self.values["loss"])

    def validate(self):
        """Build every dataclass once so bad values fail before any work."""
        try:
            check_config(self.model_config())
            self.train_config()
            self.loss_config()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        d = self.values["data"]
        if d["synthetic"] < 0:
            raise ConfigError("[data] synthetic must be >= 0")
        if len(d["ratios"]) != 3:
            raise ConfigError("[data] ratios needs three values")
        if any(s < 0 for s in self.values["noise"]["eval_sigmas"]):
            raise ConfigError("[noise] eval_sigmas must be >= 0")
        return self

    def to_ini(self):
        parser = configparser.ConfigParser(interpolation=None)
        for section, keys in self.values.items():
            parser[section] = {k: _format(v) for k, v in keys.items()}
        return parser

    def write(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as fh:
            self.to_ini().write(fh)
        return path


def resolve(config_path=None, overrides=None):
    """Merge defaults, an optional INI file and ``{(section, key): value}`` flags."""
    cfg = RunConfig()
    if config_path is not None:
        cfg.update_from_file(config_path)
    for (section, key), value in (overrides or {}).items():
        if value is not None:
            cfg.set(section, key, value)
    return cfg.validate()
