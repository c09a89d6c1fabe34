"""Training objective: squared L2 reconstruction plus a KL-divergence penalty.

Each image is turned into a distribution over its pixels,
``p = (x + eps) / sum(x + eps)``, and the penalty is ``KL(p_output || p_clean)``.
Both terms are per image; the loss averages them over the batch.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import ContractError, Tensor, as_tensor, log, reduce, square


@dataclass
class LossConfig:
    lam: float = 1e-3
    eps: float = 1e-8

    def __post_init__(self):
        if self.lam < 0:
            raise ContractError(f"lambda must be >= 0, got {self.lam}")
        if self.eps <= 0:
            raise ContractError(f"epsilon must be > 0, got {self.eps}")


def _check_pair(output, clean):
    if output.shape != clean.shape:
        raise ContractError(f"output {output.shape} and clean {clean.shape} differ in shape")
    if not (np.all(np.isfinite(output.data)) and np.all(np.isfinite(clean.data))):
        raise ContractError("loss inputs must be finite")


def kl_divergence(output, clean, eps=1e-8):
    """``KL(p_output || p_clean)`` for one image; differentiable in ``output``."""
    output, clean = as_tensor(output), as_tensor(clean)
    shifted = output + eps
    p = shifted / reduce("sum", shifted)
    q = clean.data.astype(output.dtype) + eps
    log_q = np.log(q / q.sum())
    return reduce("sum", p * (log(p) - log_q))


def reconstruction_loss(output, clean, cfg=None):
    """Batch mean of ``||out - clean||^2 + lam * KL(p_out || p_clean)``.

    ``output``/``clean`` are ``(N, H, W)`` (a single ``(H, W)`` image is
    treated as a batch of one).
    """
    cfg = cfg if cfg is not None else LossConfig()
    output = as_tensor(output)
    clean = as_tensor(clean, like=output)
    _check_pair(output, clean)
    if output.ndim == 2:
        output = output.reshape((1,) + output.shape)
        clean = Tensor(clean.data[None])
    n = output.shape[0]
    total = reduce("sum", square(output - clean.data))
    if cfg.lam > 0:
        for i in range(n):
            total = total + cfg.lam * kl_divergence(output[i], clean.data[i], cfg.eps)
    return total * (1.0 / n)
