"""Multi-resolution STFT discriminator with least-squares GAN objectives."""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ContractError


class SpectralDiscriminator(nn.Module):
    """2-D conv stack over the log-magnitude STFT at one resolution."""

    def __init__(self, win: int, width: int = 16, n_layers: int = 3):
        super().__init__()
        self.win, self.hop = win, win // 4
        layers, c_in = [], 1
        for _ in range(n_layers):
            layers.append(nn.Conv2d(c_in, width, (3, 9), stride=(1, 2), padding=(1, 4)))
            c_in = width
        self.layers = nn.ModuleList(layers)
        self.post = nn.Conv2d(width, 1, (3, 3), padding=(1, 1))

    def forward(self, x):
        """x [B, N] -> (logit map, feature maps)."""
        window = torch.hann_window(self.win, dtype=x.dtype, device=x.device)
        spec = torch.stft(x, self.win, self.hop, window=window, center=False, return_complex=True)
        h = torch.log(spec.abs() + 1e-5).transpose(1, 2).unsqueeze(1)  # [B, 1, frames, bins]
        feats = []
        for layer in self.layers:
            h = F.leaky_relu(layer(h), 0.1)
            feats.append(h)
        return self.post(h), feats


class MultiResolutionDiscriminator(nn.Module):
    def __init__(self, windows=(2048, 1024, 512), width: int = 16, n_layers: int = 3):
        super().__init__()
        self.discs = nn.ModuleList(SpectralDiscriminator(w, width, n_layers) for w in windows)

    def forward(self, x):
        if x.dim() == 3:
            x = x.squeeze(1)
        return [d(x) for d in self.discs if x.shape[-1] >= d.win]


def adversarial_losses(x, x_hat, disc: MultiResolutionDiscriminator, phase: int = 1):
    """Returns (generator adversarial, feature matching, discriminator) losses.

    The discriminator loss sees x_hat detached; the generator terms see it
    live.  Feature matching compares against detached real features.
    """
    if phase != 1:
        raise ContractError("adversarial losses are only defined during phase 1")
    real = disc(x)
    fake_det = disc(x_hat.detach())
    fake = disc(x_hat)
    zero = x.new_zeros(())
    disc_loss, gen_adv, feat = zero, zero, zero
    for (lr, fr), (ld, _), (lf, ff) in zip(real, fake_det, fake):
        disc_loss = disc_loss + (1 - lr).pow(2).mean() + ld.pow(2).mean()
        gen_adv = gen_adv + (1 - lf).pow(2).mean()
        for a, b in zip(fr, ff):
            feat = feat + (a.detach() - b).abs().mean()
    return gen_adv, feat, disc_loss
