"""Command-line entry point.

    reswcae [--config INI] [--seed N] [--out DIR] COMMAND ...

Commands: train, denoise, evaluate, compare, synth-data. Every command writes
``resolved_config.ini`` next to its outputs.

Exit codes: 0 success, 2 configuration error, 3 numerical failure (training
diverged), 4 incompatible or missing artifact.
"""
from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, resolve
from .data import NoiseSpec, add_awgn, image_files, load_dataset, read_image, split_dataset, synth_dataset, write_pgm
from .metrics import psnr
from .model import KINDS, build, denoise, param_count
from .training import CheckpointError, EvalReport, TrainingDiverged, evaluate, read_checkpoint, save_checkpoint, train

log = logging.getLogger("reswcae")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_ARTIFACT = 4


class ArtifactError(Exception):
    pass


# --- helpers -------------------------------------------------------------------


def _overrides(args):
    """Map parsed flags onto config keys; unset flags stay None."""
    get = lambda name: getattr(args, name, None)  # noqa: E731
    sigma = get("sigma")
    return {
        ("run", "seed"): get("seed"),
        ("run", "out"): get("out"),
        ("model", "kind"): get("kind"),
        ("train", "epochs"): get("epochs"),
        ("train", "batch_size"): get("batch_size"),
        ("train", "learning_rate"): get("lr"),
        ("train", "sigma"): sigma if get("command") in ("train", "compare") else None,
        ("loss", "lam"): get("lam"),
        ("noise", "eval_sigmas"): get("sigmas"),
        ("noise", "clip"): True if get("clip") else None,
        ("data", "path"): get("data"),
        ("data", "synthetic"): get("synthetic"),
    }


def _dataset(cfg):
    """Images for the configured source plus the seeded split over them."""
    d = cfg["data"]
    size = (cfg["model"]["height"], cfg["model"]["width"])
    if d["path"]:
        images = load_dataset(d["path"], size).images
    elif d["synthetic"] > 0:
        images = synth_dataset(d["synthetic"], seed=cfg.seed, height=size[0], width=size[1])
    else:
        raise ConfigError("no data: pass --data DIR or --synthetic N")
    return images, split_dataset(len(images), d["ratios"], seed=cfg.seed)


def _data_meta(cfg):
    d = cfg["data"]
    return {"data_path": d["path"], "synthetic": d["synthetic"], "ratios": list(d["ratios"]), "seed": cfg.seed}


def _load(path, expect=None):
    try:
        return read_checkpoint(path, expect)
    except CheckpointError as exc:
        raise ArtifactError(str(exc)) from None


def _train_one(cfg, kind, images, split, out, tag=""):
    model = build(cfg.model_config(kind), seed=cfg.seed)
    log.info("%s: %d parameters", kind, param_count(model))
    tcfg = cfg.train_config(checkpoint_dir=out)
    t0 = time.time()
    model, history = train(model, images, split, tcfg, cfg.loss_config())
    log.info("%s: trained %d epochs in %.1fs, best epoch %d", kind, len(history), time.time() - t0, history.best_epoch + 1)
    ckpt = out / f"{tag}best.rwae"
    save_checkpoint(model, ckpt, history, extra=_data_meta(cfg))
    if tag:
        # train() keeps its rolling best under the plain name
        (out / "best.rwae").unlink(missing_ok=True)
    history.to_csv(out / f"{tag}history.csv")
    return model, history


# --- commands ------------------------------------------------------------------


def cmd_train(cfg, args):
    images, split = _dataset(cfg)
    out = cfg.out
    cfg.write(out / "resolved_config.ini")
    _, history = _train_one(cfg, cfg["model"]["kind"], images, split, out)
    print(f"best epoch {history.best_epoch + 1}: val_loss {min(history.val_loss):.4f}, "
          f"val_psnr {history.val_psnr[history.best_epoch]:.2f} dB -> {out / 'best.rwae'}")
    return EXIT_OK


def _pair_inputs(inputs, clean):
    """Match each input file with its clean reference (same name in a directory)."""
    if clean is None:
        return [(f, None) for f in inputs]
    clean = Path(clean)
    if clean.is_file():
        if len(inputs) != 1:
            raise ConfigError("--clean FILE needs a single input file; pass a directory instead")
        return [(inputs[0], clean)]
    pairs = []
    for f in inputs:
        ref = clean / f.name
        if not ref.exists():
            raise ConfigError(f"no clean reference {ref} for {f}")
        pairs.append((f, ref))
    return pairs


def cmd_denoise(cfg, args):
    model, _ = _load(args.checkpoint)
    mc = model.config
    size = (mc.height, mc.width)
    src = Path(args.input)
    if not src.exists():
        raise ConfigError(f"input {src} does not exist")
    inputs = image_files(src)
    if not inputs:
        raise ConfigError(f"no images in {src}")
    out = cfg.out
    cfg.write(out / "resolved_config.ini")
    pairs = _pair_inputs(inputs, args.clean)

    for i, (f, ref) in enumerate(pairs):
        noisy = read_image(f, size)
        clean = read_image(ref, size) if ref is not None else None
        if args.sigma is not None:
            # the file is treated as the clean image and corrupted here
            clean = noisy if clean is None else clean
            noisy = add_awgn(noisy, NoiseSpec(args.sigma, seed=(cfg.seed, i), clip=cfg["noise"]["clip"]))
        restored = denoise(model, noisy.astype(mc.dtype))
        write_pgm(out / f"{f.stem}_denoised.pgm", restored)
        msg = f"{f.name} -> {f.stem}_denoised.pgm"
        if clean is not None:
            write_pgm(out / f"{f.stem}_triptych.pgm", np.concatenate([clean, np.clip(noisy, 0, 1), restored], axis=1))
            msg += f"  (psnr noisy {psnr(noisy, clean):.2f} dB, denoised {psnr(restored, clean):.2f} dB)"
        print(msg)
    return EXIT_OK


def _test_images(cfg):
    images, split = _dataset(cfg)
    return split.select(images, "test")


def cmd_evaluate(cfg, args):
    if not Path(args.checkpoint).exists():
        raise ArtifactError(f"checkpoint {args.checkpoint} not found")
    model, meta = _load(args.checkpoint)
    # evaluate on the test split the checkpoint was trained with, unless overridden
    saved = meta.get("extra", {})
    d = cfg["data"]
    if not d["path"] and not d["synthetic"]:
        d["path"], d["synthetic"] = saved.get("data_path"), saved.get("synthetic", 0)
        if "ratios" in saved:
            d["ratios"] = tuple(saved["ratios"])
    for k in ("height", "width"):
        cfg["model"][k] = getattr(model.config, k)
    out = cfg.out
    cfg.write(out / "resolved_config.ini")
    test = _test_images(cfg)
    report = evaluate(model, test, cfg["noise"]["eval_sigmas"], seed=cfg.seed, clip=cfg["noise"]["clip"])
    report.to_csv(out / "eval.csv")
    _print_report(report)
    return EXIT_OK


def cmd_compare(cfg, args):
    images, split = _dataset(cfg)
    out = cfg.out
    cfg.write(out / "resolved_config.ini")
    sigmas = cfg["noise"]["eval_sigmas"]
    test = split.select(images, "test")
    report = EvalReport(sigmas=list(sigmas))
    kinds = args.kinds.split(",") if args.kinds else list(KINDS)
    for kind in kinds:
        if kind not in KINDS:
            raise ConfigError(f"unknown kind {kind!r}")
        model, _ = _train_one(cfg, kind, images, split, out, tag=f"{kind}_")
        report.extend(evaluate(model, test, sigmas, seed=cfg.seed, clip=cfg["noise"]["clip"]))
    report.to_csv(out / "compare.csv")
    _print_report(report)
    return EXIT_OK


def cmd_synth_data(cfg, args):
    out = cfg.out
    cfg.write(out / "resolved_config.ini")
    h, w = cfg["model"]["height"], cfg["model"]["width"]
    for i, img in enumerate(synth_dataset(args.count, seed=cfg.seed, height=h, width=w)):
        write_pgm(out / f"synth_{i:04d}.pgm", img)
    print(f"wrote {args.count} images to {out}")
    return EXIT_OK


def _print_report(report):
    print(f"{'model':<12}{'sigma':>7}{'psnr':>9}{'ssim':>8}{'mse':>9}{'dpsnr':>8}")
    for r in report.rows:
        print(f"{r['model']:<12}{r['sigma']:>7g}{r['psnr']:>9.2f}{r['ssim']:>8.3f}{r['mse']:>9.4f}{r['delta_psnr']:>8.2f}")


COMMANDS = {
    "train": cmd_train,
    "denoise": cmd_denoise,
    "evaluate": cmd_evaluate,
    "compare": cmd_compare,
    "synth-data": cmd_synth_data,
}


# --- argument parsing ----------------------------------------------------------------


def _global_flags(parser, suppress):
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", type=Path, default=default, help="INI file with [model]/[train]/... sections")
    parser.add_argument("--seed", type=int, default=default, help="seed for init, splits, noise and shuffling")
    parser.add_argument("--out", type=str, default=default, help="output directory")


def _data_flags(p):
    g = p.add_mutually_exclusive_group()
    g.add_argument("--data", type=str, help="directory of grayscale fingerprint images")
    g.add_argument("--synthetic", type=int, metavar="N", help="use N procedurally generated fingerprints")


def _train_flags(p):
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--lam", type=float, help="weight of the KL-divergence term")
    p.add_argument("--sigma", type=str, help="training noise: fixed value or lo,hi range (0-255 scale)")
    p.add_argument("--clip", action="store_true", help="clamp noisy images to [0, 1]")


def build_parser():
    parser = argparse.ArgumentParser(prog="reswcae", description="Wavelet-conditioned fingerprint denoising")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one model")
    _global_flags(p, suppress=True)
    _data_flags(p)
    _train_flags(p)
    p.add_argument("--kind", choices=KINDS)

    p = sub.add_parser("denoise", help="denoise an image file or a directory")
    _global_flags(p, suppress=True)
    p.add_argument("input", help="noisy image file or directory")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--clean", help="clean reference file or directory; enables triptych output")
    p.add_argument("--sigma", type=float, help="corrupt the input with AWGN first (input doubles as reference)")
    p.add_argument("--clip", action="store_true")

    p = sub.add_parser("evaluate", help="PSNR/SSIM/MSE sweep over noise levels")
    _global_flags(p, suppress=True)
    p.add_argument("--checkpoint", required=True)
    _data_flags(p)
    p.add_argument("--sigmas", type=str, help="comma separated noise levels (default 0,25,50,100,150,200)")
    p.add_argument("--clip", action="store_true")

    p = sub.add_parser("compare", help="train and evaluate every architecture on one split")
    _global_flags(p, suppress=True)
    _data_flags(p)
    _train_flags(p)
    p.add_argument("--sigmas", type=str, default="100", help="evaluation noise levels (default 100)")
    p.add_argument("--kinds", type=str, help="comma separated subset of " + ",".join(KINDS))

    p = sub.add_parser("synth-data", help="write synthetic fingerprints as PGM files")
    _global_flags(p, suppress=True)
    p.add_argument("count", type=int)
    return parser


def run(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve(args.config, _overrides(args))
        return COMMANDS[args.command](cfg, args)
    except ArtifactError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ARTIFACT
    except TrainingDiverged as exc:
        where = f"; last good checkpoint {exc.checkpoint}" if exc.checkpoint else ""
        print(f"error: training diverged: {exc}{where}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
