import numpy as np
import pytest
import torch

from eegcodec.checkpoint import read_checkpoint, save_model
from eegcodec.codec import Codec
from eegcodec.data_io import synth_eeg
from eegcodec.errors import ConfigError, TrainingError
from eegcodec.multichannel import MultiChannelCodec
from eegcodec.preprocess import PreprocessConfig, preprocess_recording
from eegcodec.rvq import RVQConfig
from eegcodec.training import (LOSS_KEYS, LossWeights, TrainConfig, audio_windows, codebook_entropy,
                               parse_metrics_line, step_weights, train, waveform_weight)


@pytest.fixture(scope="module")
def windows():
    return preprocess_recording(synth_eeg(4, 45, 256, seed=0), PreprocessConfig(), "r0")


def _cfg(**kw):
    base = dict(lr=1e-3, total_steps=4, batch_size=2, crop_samples=2048, regime="scratch", seed=0, disc_width=4)
    base.update(kw)
    return TrainConfig(**base)


def _model(cfg, kind=Codec):
    torch.manual_seed(0)
    return kind(cfg, RVQConfig(n_books=3, vocab_sizes=16))


def test_annealing_endpoints_and_linearity():
    cfg, w = TrainConfig(total_steps=1000), LossWeights()
    assert waveform_weight(0, cfg, w) == 10.0
    assert waveform_weight(200, cfg, w) == 1.0 and waveform_weight(999, cfg, w) == 1.0
    assert waveform_weight(100, cfg, w) == pytest.approx(5.5)
    vals = [waveform_weight(s, cfg, w) for s in range(201)]
    assert np.allclose(np.diff(vals), -9 / 200)


def test_phase_two_weights_are_zero():
    w2 = step_weights(10, 2, TrainConfig(total_steps=100), LossWeights())
    assert w2["adv"] == 0.0 and w2["feat"] == 0.0
    w1 = step_weights(10, 1, TrainConfig(total_steps=100), LossWeights())
    assert (w1["adv"], w1["feat"], w1["commit"], w1["codebook"]) == (0.25, 2.0, 0.25, 1.0)


def test_config_validation():
    with pytest.raises(ConfigError):
        TrainConfig(lr=0)
    with pytest.raises(ConfigError):
        TrainConfig(phase1_fraction=1.5)
    with pytest.raises(ConfigError):
        TrainConfig(regime="pretrained")
    with pytest.raises(ConfigError):
        LossWeights(adv=-1)


def test_total_is_weighted_sum_and_log(tmp_path, windows, toy_codec_config):
    res = train(windows, _model(toy_codec_config), _cfg(), log_path=tmp_path / "m.log")
    lines = (tmp_path / "m.log").read_text().splitlines()
    assert len(lines) == 4
    for line, rec in zip(lines, res.metrics):
        parsed = parse_metrics_line(line)
        assert parsed == rec
        total = sum(parsed[f"w_{k}"] * parsed[k] for k in LOSS_KEYS)
        assert abs(total - parsed["total"]) <= 1e-6 * max(1.0, abs(total))
        assert 0 <= parsed["entropy"] <= 4


def test_phase_switch_and_purity(windows, toy_codec_config):
    res = train(windows, _model(toy_codec_config), _cfg(phase1_fraction=0.5))
    phases = [m["phase"] for m in res.metrics]
    assert phases == [1, 1, 2, 2]
    for m in res.metrics[2:]:
        assert m["adv"] == 0 and m["feat"] == 0 and m["w_adv"] == 0 and m["disc"] == 0


def test_frozen_regime_changes_nothing(tmp_path, windows, toy_codec_config):
    model = _model(toy_codec_config)
    save_model(model, tmp_path / "p.ckpt")
    before = {k: v.clone() for k, v in model.state_dict().items()}
    train(windows, model, _cfg(regime="frozen", init_checkpoint=str(tmp_path / "p.ckpt"), total_steps=3))
    for k, v in model.state_dict().items():
        assert torch.equal(v, before[k]), k


def test_finetune_needs_checkpoint(windows, toy_codec_config):
    with pytest.raises(ConfigError):
        train(windows, _model(toy_codec_config), _cfg(regime="finetune"))


def test_deterministic_metrics(tmp_path, windows, toy_codec_config):
    train(windows, _model(toy_codec_config), _cfg(), log_path=tmp_path / "a.log")
    train(windows, _model(toy_codec_config), _cfg(), log_path=tmp_path / "b.log")
    assert (tmp_path / "a.log").read_bytes() == (tmp_path / "b.log").read_bytes()


def test_multichannel_training_runs(windows, toy_codec_config):
    res = train(windows, _model(toy_codec_config, MultiChannelCodec), _cfg(total_steps=2))
    assert all(np.isfinite(m["total"]) for m in res.metrics)
    res = train(windows, _model(toy_codec_config, MultiChannelCodec), _cfg(total_steps=1, grouping="manual"))
    assert res.metrics


def test_non_finite_loss_aborts(windows, toy_codec_config):
    model = _model(toy_codec_config)
    with torch.no_grad():
        model.decoder.conv_in.weight.fill_(float("nan"))
    with pytest.raises(TrainingError, match="batch id 0"):
        train(windows, model, _cfg(total_steps=1))


def test_watchdog_forces_phase_two(windows, toy_codec_config):
    # factor 0 makes any positive adversarial loss count as divergent
    res = train(windows, _model(toy_codec_config), _cfg(total_steps=6, phase1_fraction=1.0,
                                                         watchdog_factor=0.0, watchdog_patience=2))
    assert any("divergence" in e for e in res.events)
    assert [m["phase"] for m in res.metrics] == [1, 1, 1, 2, 2, 2]


def test_checkpoints_carry_discriminator(tmp_path, windows, toy_codec_config):
    train(windows, _model(toy_codec_config), _cfg(total_steps=2, checkpoint_every=1),
          checkpoint_path=tmp_path / "final.ckpt", checkpoint_dir=tmp_path)
    tensors, cfg = read_checkpoint(tmp_path / "final.ckpt")
    assert any(k.startswith("disc.") for k in tensors) and cfg["kind"] == "sc"
    assert (tmp_path / "step_000001.ckpt").exists() and (tmp_path / "step_000002.ckpt").exists()


def test_dead_codes_reseeded(windows, toy_codec_config):
    model = _model(toy_codec_config)
    res = train(windows, model, _cfg(total_steps=3, dead_code_steps=1))
    assert res.metrics
    for book in model.quantizer.books:
        assert int(book.steps_unused.max()) <= 1


def test_codebook_entropy():
    codes = torch.tensor([[[0, 1, 2, 3]], [[0, 1, 2, 3]]])
    assert codebook_entropy(codes, [4]) == pytest.approx(2.0)
    assert codebook_entropy(torch.zeros(1, 1, 5, dtype=torch.long), [4]) == 0.0


def test_audio_windows():
    wins = audio_windows(2.0, seed=0)
    assert len(wins) == 2 and wins[0].data.shape == (1, 44100) and wins[0].channels[0].position is None
