import numpy as np
import pytest
import torch

from eegcodec.checkpoint import (LoadReport, load_model, load_pretrained, read_checkpoint, save_checkpoint,
                                 save_model)
from eegcodec.codec import Codec, CodecConfig, StyleVector, n_frames
from eegcodec.errors import ConfigError, FormatError, IncompatibleCheckpointError, ShapeError
from eegcodec.multichannel import MultiChannelCodec
from eegcodec.rvq import RVQConfig


@pytest.fixture
def model(toy_codec_config, toy_rvq_config):
    torch.manual_seed(0)
    return Codec(toy_codec_config, toy_rvq_config).eval()


def test_config_invariants():
    cfg = CodecConfig()
    assert cfg.stride_total == 512
    assert CodecConfig.full_scale().hidden_dim == 1024
    with pytest.raises(ConfigError):
        CodecConfig(hidden_dim=0)


@pytest.mark.parametrize("n,frames", [(15360, 30), (512, 1), (600, 2), (1025, 3)])
def test_frame_count_law(model, n, frames):
    lat = model.encode_signal(np.zeros(n, np.float32))
    assert lat.frames.shape == (frames, 32)
    assert n_frames(n, 512) == frames


def test_short_input_rejected(model):
    with pytest.raises(ShapeError):
        model.encode_signal(np.zeros(100, np.float32))


def test_decode_length_and_hidden_mismatch(model):
    x = np.random.default_rng(0).uniform(-0.5, 0.5, 600).astype(np.float32)
    y = model.decode_latents(model.encode_signal(x))
    assert y.shape == (1024,)
    with pytest.raises(ShapeError):
        model.decode_latents(np.zeros((2, 31), np.float32))


def test_identity_style_bitwise(model):
    z = torch.randn(2, 32, 3)
    with torch.no_grad():
        plain = model.decode(z)
        ident = model.decode(z, StyleVector.identity(model.config))
    assert torch.equal(plain, ident)


def test_scaled_style_changes_output(model):
    z = torch.randn(1, 32, 3)
    style = StyleVector.identity(model.config)
    style.scales[0] = style.scales[0] * 2
    with torch.no_grad():
        assert not torch.allclose(model.decode(z), model.decode(z, style))


def test_encode_deterministic(model):
    x = np.random.default_rng(1).uniform(-1, 1, 2048).astype(np.float32)
    np.testing.assert_array_equal(model.encode_signal(x).frames, model.encode_signal(x).frames)


def test_compress_decompress_length(model):
    x = np.random.default_rng(2).uniform(-1, 1, 15360).astype(np.float32)
    tokens = model.compress(x, channel="CZ")
    assert tokens.codes.shape == (9, 30)
    assert model.decompress(tokens).shape == (15360,)
    assert model.decompress(tokens.truncate(3)).shape == (15360,)


def test_elu_fallback_builds():
    m = Codec(CodecConfig(block_strides=[4, 4], hidden_dim=8, base_width=4, n_res_units=1, snake=False),
              RVQConfig(n_books=2, vocab_sizes=4, code_dim=2))
    assert m.reconstruct(np.zeros((1, 40), np.float32)).shape == (1, 40)


# ---- checkpoints

def test_checkpoint_self_round_trip(tmp_path, model):
    save_model(model, tmp_path / "m.ckpt")
    back = load_model(tmp_path / "m.ckpt")
    for (k, a), (_, b) in zip(model.state_dict().items(), back.state_dict().items()):
        assert torch.equal(a, b), k
    report = load_pretrained(tmp_path / "m.ckpt", Codec(model.config, model.rvq_config))
    assert not report.skipped and not report.initialized
    assert len(report.loaded) == len(model.state_dict())


def test_checkpoint_extra_tensors_skipped(tmp_path, model):
    save_model(model, tmp_path / "m.ckpt", extra={"disc.w": torch.ones(3)})
    report = load_pretrained(tmp_path / "m.ckpt", Codec(model.config, model.rvq_config))
    assert report.skipped == ["disc.w"]


def test_sc_checkpoint_into_mc_reports_adapters(tmp_path, model):
    save_model(model, tmp_path / "m.ckpt")
    mc = MultiChannelCodec(model.config, model.rvq_config)
    report = load_pretrained(tmp_path / "m.ckpt", mc)
    assert report.initialized and all(n.startswith(("fusion.", "style_")) for n in report.initialized)
    assert not report.skipped
    assert isinstance(report, LoadReport) and "loaded" in report.summary()


def test_incompatible_checkpoint(tmp_path, model):
    save_checkpoint(tmp_path / "x.ckpt", {"nothing.here": torch.zeros(2)}, {})
    with pytest.raises(IncompatibleCheckpointError):
        load_pretrained(tmp_path / "x.ckpt", model)


def test_checkpoint_manifest_and_corruption(tmp_path):
    t = {"a": torch.arange(6, dtype=torch.float32).view(2, 3), "b": torch.tensor([1, 2], dtype=torch.int64)}
    save_checkpoint(tmp_path / "c.ckpt", t, {"k": 1})
    back, cfg = read_checkpoint(tmp_path / "c.ckpt")
    assert cfg == {"k": 1} and torch.equal(back["a"], t["a"]) and torch.equal(back["b"], t["b"])
    raw = (tmp_path / "c.ckpt").read_bytes()
    (tmp_path / "d.ckpt").write_bytes(b"NOPE" + raw[4:])
    with pytest.raises(FormatError):
        read_checkpoint(tmp_path / "d.ckpt")


def test_untrained_decoder_depends_on_its_latent():
    torch.manual_seed(0)
    m = Codec(CodecConfig(hidden_dim=16, base_width=4, n_res_units=1), RVQConfig(vocab_sizes=8))
    z = torch.randn(4, 16, 3)
    with torch.no_grad():
        y, y_other = m.decode(z), m.decode(z.roll(1, 0))
    assert float((y - y_other).std()) > 0.1 * float(y.std())
