"""Wavelet-conditioned residual autoencoder for fingerprint denoising.

Everything (autodiff, layers, wavelets, training) is implemented on numpy;
the inner loops of im2col/col2im and the 1D wavelet filters are compiled
with numba unless ``RESWCAE_DISABLE_NUMBA=1`` is set.
"""
__version__ = "0.1.0"

from .autodiff import Tensor, no_grad
from .data import NoiseSpec, add_awgn, load_dataset, split_dataset, synth_dataset, synth_fingerprint
from .losses import LossConfig, reconstruction_loss
from .metrics import mse, psnr, ssim
from .model import KINDS, ModelConfig, build, denoise, forward, param_count
from .training import TrainConfig, evaluate, load_checkpoint, save_checkpoint, train
from .wavelet import dwt2, filter_bank, idwt2

__all__ = [
    "KINDS",
    "LossConfig",
    "ModelConfig",
    "NoiseSpec",
    "Tensor",
    "TrainConfig",
    "add_awgn",
    "build",
    "denoise",
    "dwt2",
    "evaluate",
    "filter_bank",
    "forward",
    "idwt2",
    "load_checkpoint",
    "load_dataset",
    "mse",
    "no_grad",
    "param_count",
    "psnr",
    "reconstruction_loss",
    "save_checkpoint",
    "split_dataset",
    "ssim",
    "synth_dataset",
    "synth_fingerprint",
    "train",
]
