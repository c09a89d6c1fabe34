"""Numba vs pure-numpy kernel timings.

    python3 benchmarks/bench_kernels.py [--repeat N] [--batch B] [--step]

Each kernel is called on the shapes it sees in the default model at the
given batch size. Outputs are checked for agreement before timing. With
``--step`` the script also times one full forward+backward+Adam step in two
subprocesses, one per backend (selected with RESWCAE_DISABLE_NUMBA).
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from reswcae.kernels import _numba, _numpy
from reswcae.layers import same_padding
from reswcae.wavelet import filter_bank


def conv_case(rng, batch, channels, h, w):
    oh, pt, pb = same_padding(h, 2)
    ow, pl, pr = same_padding(w, 2)
    xp = rng.normal(size=(batch, channels, h + pt + pb, w + pl + pr))
    return xp, oh, ow


def cases(batch, rng):
    bank = filter_bank("sym4")
    out = []
    for c, h, w in [(1, 103, 96), (32, 52, 48), (64, 26, 24)]:
        xp, oh, ow = conv_case(rng, batch, c, h, w)
        out.append((f"im2col   {c:>3}x{h}x{w}", "im2col", (xp, 3, 3, 2, oh, ow)))
        cols = rng.normal(size=(c, 3, 3, batch, oh, ow))
        out.append((f"col2im   {c:>3}x{h}x{w}", "col2im", (cols, xp.shape[2], xp.shape[3], 2)))
    rows = rng.normal(size=(batch * 103, 96))
    out.append((f"dwt_rows {batch * 103}x96", "dwt_rows", (rows, bank.dec_lo, bank.dec_hi)))
    lo, hi = _numpy.dwt_rows(rows, bank.dec_lo, bank.dec_hi)
    out.append((f"idwt_rows {batch * 103}x48", "idwt_rows", (lo, hi, bank.rec_lo, bank.rec_hi)))
    return out


def bench(fn, args, repeat):
    fn(*args)  # warm up (and compile)
    return min(timeit.repeat(lambda: fn(*args), number=1, repeat=repeat))


STEP_SNIPPET = """
import time, numpy as np
from reswcae import kernels
from reswcae.data import synth_dataset
from reswcae.losses import reconstruction_loss
from reswcae.model import ModelConfig, build, forward
from reswcae.training import Adam
x = synth_dataset({batch}, seed=0).astype(np.float32)
noisy = x + np.random.default_rng(0).normal(0, 100 / 255, x.shape).astype(np.float32)
model = build(ModelConfig(), seed=0)
opt = Adam(model.parameters())
best = float("inf")
for i in range({repeat} + 1):
    t = time.perf_counter()
    loss = reconstruction_loss(forward(model, noisy), x)
    opt.zero_grad(); loss.backward(); opt.step()
    if i:
        best = min(best, time.perf_counter() - t)
print(kernels.BACKEND, best)
"""


def step_time(disable_numba, batch, repeat):
    env = dict(os.environ, RESWCAE_DISABLE_NUMBA="1" if disable_numba else "0")
    res = subprocess.run(
        [sys.executable, "-c", STEP_SNIPPET.format(batch=batch, repeat=repeat)],
        env=env, capture_output=True, text=True, check=True,
    )
    backend, seconds = res.stdout.split()
    return backend, float(seconds)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--batch", type=int, default=32)
    ap.add_argument("--step", action="store_true", help="also time a full training step per backend")
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    print(f"{'kernel':<26}{'numpy ms':>10}{'numba ms':>10}{'speedup':>9}")
    for label, name, fargs in cases(args.batch, rng):
        ref, fast = getattr(_numpy, name), getattr(_numba, name)
        a, b = ref(*fargs), fast(*fargs)
        for u, v in zip(a if isinstance(a, tuple) else (a,), b if isinstance(b, tuple) else (b,)):
            np.testing.assert_allclose(u, v, rtol=1e-12, atol=1e-12)
        t_np = bench(ref, fargs, args.repeat)
        t_nb = bench(fast, fargs, args.repeat)
        print(f"{label:<26}{t_np * 1e3:>10.2f}{t_nb * 1e3:>10.2f}{t_np / t_nb:>8.1f}x")

    if args.step:
        print(f"\nfull res_wcae training step, batch {args.batch}")
        for disable in (True, False):
            backend, sec = step_time(disable, args.batch, max(1, args.repeat // 2))
            print(f"  {backend:<6} {sec:.3f} s")


if __name__ == "__main__":
    main()
