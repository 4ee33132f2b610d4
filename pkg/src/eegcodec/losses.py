"""Reconstruction losses.

All STFTs here use a periodic Hann window, no centre padding (frames start
at sample 0 and stop at the last full frame) and magnitude spectra.

* spectrogram loss: sum over scales of mean |log(|X| + eps) - log(|Y| + eps)|
* multi-scale STFT loss: sum over windows {2048, 1024, 512, 256, 128}, hop
  window/4, of mean ||X| - |Y|| + mean |log(|X| + eps) - log(|Y| + eps)|
"""

from __future__ import annotations

import numpy as np
import torch

from .errors import ShapeError

EPS = 1e-5
SPEC_SCALES = ((2048, 512), (512, 128))
MSTFT_WINDOWS = (2048, 1024, 512, 256, 128)


def _as_tensor(x) -> torch.Tensor:
    if isinstance(x, torch.Tensor):
        return x
    return torch.as_tensor(np.asarray(x, dtype=np.float64))


def _pair(x, y):
    x, y = _as_tensor(x), _as_tensor(y)
    if x.shape != y.shape:
        raise ShapeError(f"length mismatch: {tuple(x.shape)} vs {tuple(y.shape)}")
    return x, y


def stft_mag(x: torch.Tensor, win: int, hop: int) -> torch.Tensor:
    """|STFT| of x [..., N] -> [..., win // 2 + 1, frames]."""
    lead = x.shape[:-1]
    window = torch.hann_window(win, periodic=True, dtype=x.dtype, device=x.device)
    spec = torch.stft(x.reshape(-1, x.shape[-1]), n_fft=win, hop_length=hop, win_length=win,
                      window=window, center=False, return_complex=True)
    return spec.abs().reshape(*lead, *spec.shape[-2:])


def _feasible(n: int, scales):
    ok = [s for s in scales if s[0] <= n]
    if not ok:
        raise ShapeError(f"signal of {n} samples is shorter than every STFT window {[s[0] for s in scales]}")
    return ok


def waveform_loss(x, x_hat):
    x, x_hat = _pair(x, x_hat)
    return (x - x_hat).abs().mean()


def spectrogram_loss(x, x_hat, scales=SPEC_SCALES, eps: float = EPS):
    x, x_hat = _pair(x, x_hat)
    total = x.new_zeros(())
    for win, hop in _feasible(x.shape[-1], scales):
        mx, my = stft_mag(x, win, hop), stft_mag(x_hat, win, hop)
        total = total + (torch.log(mx + eps) - torch.log(my + eps)).abs().mean()
    return total


def multiscale_stft_loss(x, x_hat, windows=MSTFT_WINDOWS, eps: float = EPS):
    x, x_hat = _pair(x, x_hat)
    total = x.new_zeros(())
    for win, hop in _feasible(x.shape[-1], [(w, w // 4) for w in windows]):
        mx, my = stft_mag(x, win, hop), stft_mag(x_hat, win, hop)
        total = total + (mx - my).abs().mean() + (torch.log(mx + eps) - torch.log(my + eps)).abs().mean()
    return total
