import numpy as np
import pytest
import torch

from eegcodec.discriminator import MultiResolutionDiscriminator, adversarial_losses
from eegcodec.errors import ContractError, ShapeError
from eegcodec.losses import multiscale_stft_loss, spectrogram_loss, waveform_loss

EPS = 1e-5


def _dft_mag(x, win, hop):
    """|STFT| by explicit DFT matrix: periodic Hann, frames from sample 0, no padding."""
    n = np.arange(win)
    window = 0.5 - 0.5 * np.cos(2 * np.pi * n / win)
    k = np.arange(win // 2 + 1)[:, None]
    basis = np.exp(-2j * np.pi * k * n[None] / win)
    frames = [x[s:s + win] * window for s in range(0, len(x) - win + 1, hop)]
    return np.abs(basis @ np.stack(frames).T)


def _numpy_mstft(x, y, windows):
    total = 0.0
    for w in windows:
        mx, my = _dft_mag(x, w, w // 4), _dft_mag(y, w, w // 4)
        total += np.abs(mx - my).mean() + np.abs(np.log(mx + EPS) - np.log(my + EPS)).mean()
    return total


def test_waveform_loss():
    x = np.random.default_rng(0).standard_normal(100)
    y = np.random.default_rng(1).standard_normal(100)
    assert float(waveform_loss(x, x)) == 0
    assert float(waveform_loss(np.zeros(10), np.full(10, 0.5))) == 0.5
    assert abs(float(waveform_loss(x, y)) - np.abs(x - y).mean()) < 1e-12
    with pytest.raises(ShapeError):
        waveform_loss(x, y[:-1])


def test_spectrogram_loss_tone_half_amplitude():
    fs, n = 512, 4096
    x = np.sin(2 * np.pi * 10 * np.arange(n) / fs)
    assert float(spectrogram_loss(x, x)) == 0
    got = float(spectrogram_loss(x, 0.5 * x))
    ref = sum(np.abs(np.log(_dft_mag(x, w, h) + EPS) - np.log(_dft_mag(0.5 * x, w, h) + EPS)).mean()
              for w, h in ((2048, 512), (512, 128)))
    # off-tone bins sit near the eps floor, where FFT and DFT-matrix rounding differ slightly
    assert abs(got - ref) < 1e-5 * ref
    # on the tone bin the log ratio is ln 2 up to the eps guard
    m = _dft_mag(x, 2048, 512)
    k = 40  # 10 Hz at 0.25 Hz bins
    tone = np.log(m[k] + EPS) - np.log(0.5 * m[k] + EPS)
    np.testing.assert_allclose(tone, np.log(2), rtol=1e-6)


def test_spectrogram_loss_feasible_scales():
    x = np.random.default_rng(0).standard_normal(1000)
    y = x + 0.1
    ref = np.abs(np.log(_dft_mag(x, 512, 128) + EPS) - np.log(_dft_mag(y, 512, 128) + EPS)).mean()
    assert abs(float(spectrogram_loss(x, y)) - ref) < 1e-9
    with pytest.raises(ShapeError):
        spectrogram_loss(np.zeros(100), np.zeros(100))


def test_multiscale_stft_matches_numpy():
    rng = np.random.default_rng(3)
    x, y = rng.standard_normal(4096), rng.standard_normal(4096)
    assert float(multiscale_stft_loss(x, x)) == 0
    got = float(multiscale_stft_loss(x, y))
    assert abs(got - _numpy_mstft(x, y, (2048, 1024, 512, 256, 128))) < 1e-6
    single = float(multiscale_stft_loss(x, y, windows=(256,)))
    assert abs(single - _numpy_mstft(x, y, (256,))) < 1e-6


def test_losses_batched_tensor():
    x = torch.randn(3, 2048, dtype=torch.float64)
    y = torch.randn(3, 2048, dtype=torch.float64)
    rows = [float(spectrogram_loss(x[i], y[i])) for i in range(3)]
    assert abs(float(spectrogram_loss(x, y)) - np.mean(rows)) < 1e-9


def test_adversarial_losses_contract():
    torch.manual_seed(0)
    disc = MultiResolutionDiscriminator(width=4)
    x = torch.randn(2, 4096)
    gen, feat, d = adversarial_losses(x, x, disc)
    assert float(feat.detach()) == 0
    gen, feat, d = adversarial_losses(x, torch.randn(2, 4096), disc)
    for v in (gen, feat, d):
        assert torch.isfinite(v) and float(v.detach()) >= 0
    with pytest.raises(ContractError):
        adversarial_losses(x, x, disc, phase=2)


def test_discriminator_gradient_finite_differences():
    torch.manual_seed(0)
    disc = MultiResolutionDiscriminator(windows=(512,), width=2, n_layers=1).double()
    x = torch.randn(1, 1024, dtype=torch.float64)
    y = torch.randn(1, 1024, dtype=torch.float64)
    w = disc.discs[0].layers[0].weight
    _, _, loss = adversarial_losses(x, y, disc)
    loss.backward()
    analytic = w.grad.clone()
    h = 1e-6
    flat = w.data.view(-1)
    for idx in range(0, flat.numel(), 5):
        old = flat[idx].item()
        flat[idx] = old + h
        up = float(adversarial_losses(x, y, disc)[2].detach())
        flat[idx] = old - h
        down = float(adversarial_losses(x, y, disc)[2].detach())
        flat[idx] = old
        fd = (up - down) / (2 * h)
        a = analytic.view(-1)[idx].item()
        assert abs(a - fd) <= 1e-2 * max(abs(fd), 1e-6), (idx, a, fd)
