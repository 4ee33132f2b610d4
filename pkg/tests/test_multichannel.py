import numpy as np
import pytest
import torch

from eegcodec.errors import ConfigError, VocabularyError
from eegcodec.multichannel import McConfig, MultiChannelCodec
from eegcodec.rvq import RVQConfig


@pytest.fixture
def mc(toy_codec_config):
    torch.manual_seed(0)
    return MultiChannelCodec(toy_codec_config, RVQConfig(vocab_sizes=64)).eval()


@pytest.fixture
def group5():
    rng = np.random.default_rng(0)
    return {n: rng.uniform(-0.5, 0.5, 15360).astype(np.float32) for n in ["O1", "C3", "FP1", "CZ", "T4"]}


def _perturb_fusion(model, seed=1):
    """Open the zero-initialised residual branches so attention actually mixes frames."""
    g = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for p in model.fusion.parameters():
            p.add_(0.05 * torch.randn(p.shape, generator=g))
        model.style_scale.add_(0.1 * torch.randn(model.style_scale.shape, generator=g))


def test_group_stream_shape_and_order(mc, group5):
    tokens = mc.encode_group(group5)
    assert tokens.codes.shape == (9, 30)
    assert tokens.channels == ["FP1", "C3", "CZ", "T4", "O1"]


def test_single_channel_group_shape(mc, group5):
    tokens = mc.encode_group({"CZ": group5["CZ"]})
    assert tokens.codes.shape == (9, 30)
    out = mc.run_single_channel_mode(group5["CZ"], "CZ")
    np.testing.assert_array_equal(out, mc.decode_group(tokens)["CZ"])


def test_permutation_invariance(mc, group5):
    _perturb_fusion(mc)
    a = mc.encode_group(group5)
    b = mc.encode_group(dict(reversed(list(group5.items()))))
    assert np.array_equal(a.codes, b.codes) and a.channels == b.channels


def test_group_limits(mc, group5):
    big = dict(group5, F3=group5["CZ"])
    with pytest.raises(ConfigError):
        mc.encode_group(big)
    with pytest.raises(VocabularyError):
        mc.encode_group({"NOPE": group5["CZ"]})
    with pytest.raises(VocabularyError):
        mc.style_for("XYZ")


def test_dataset_labels_resolve(mc):
    assert mc.channel_index("EEG C3-REF") == mc.channel_index("C3")
    assert mc.channel_index("EEG 26-REF") == mc.channel_index("26")


def test_identity_styles_decode_identically(mc, group5):
    out = mc.decode_group(mc.encode_group(group5))
    ref = out["FP1"]
    assert all(np.array_equal(v, ref) for v in out.values())
    assert ref.shape == (15360,)


def test_equal_styles_equal_outputs(mc, group5):
    _perturb_fusion(mc)
    with torch.no_grad():
        mc.style_scale[mc.channel_index("C3")] = mc.style_scale[mc.channel_index("O1")]
        mc.style_bias[mc.channel_index("C3")] = mc.style_bias[mc.channel_index("O1")]
    out = mc.decode_group(mc.encode_group(group5))
    np.testing.assert_array_equal(out["C3"], out["O1"])
    assert not np.array_equal(out["C3"], out["CZ"])


def test_pad_slot_neutrality(mc, group5):
    _perturb_fusion(mc)
    batch = mc.make_batch([{k: group5[k] for k in ("C3", "CZ")}])
    ref = mc.forward_group(batch)
    garbage = batch.x.clone()
    garbage[0, 2:] = torch.randn(3, garbage.shape[-1])
    batch.x = garbage
    batch.ids[0, 2:] = torch.tensor([5, 9, 11])
    out = mc.forward_group(batch)
    assert (out.fused - ref.fused).abs().max() < 1e-5
    assert (out.recon[0, :2] - ref.recon[0, :2]).abs().max() < 1e-5
    assert out.recon[0, 2:].abs().max() == 0


def test_singleton_fusion_is_identity_at_init(mc, group5):
    x = torch.as_tensor(group5["CZ"]).view(1, 1, -1)
    batch = mc.make_batch([{"CZ": group5["CZ"]}])
    emb = mc.fusion.channel_embedding[mc.channel_index("CZ")].view(1, -1, 1)
    with torch.no_grad():
        assert torch.allclose(mc.encode_group_tensor(batch), mc.encode(x) + emb, atol=1e-5)


def test_compression_accounting(mc, group5):
    group_tokens = mc.encode_group(group5).codes.size
    single = sum(mc.encode_group({k: v}).codes.size for k, v in group5.items())
    assert single == 5 * group_tokens


def test_joint_gradient_reaches_every_part(mc, group5):
    mc.train()
    batch = mc.make_batch([{k: group5[k][:2048] for k in ("C3", "CZ", "O1")}])
    out = mc.forward_group(batch)
    (out.recon[:, :, :2048] - batch.x).pow(2).mean().backward()
    grads = {
        "style": mc.style_scale.grad,
        "embedding": mc.fusion.channel_embedding.grad,
        "attention": mc.fusion.layers[0].out.weight.grad,
        "projection": mc.fusion.proj.weight.grad,
        "encoder": mc.encoder.layers[0].weight.grad,
        "decoder": mc.decoder.conv_in.weight.grad,
    }
    for name, g in grads.items():
        assert g is not None and g.abs().sum() > 0, name


def test_reconstruct_groups_rows_follow_names(mc, group5):
    names = list(group5)
    data = np.stack([group5[n] for n in names])
    out = mc.reconstruct_groups(data, names, [["O1", "C3"], ["FP1", "CZ", "T4"]])
    assert out.shape == data.shape


def test_mc_config_validation():
    with pytest.raises(ConfigError):
        McConfig(max_group_size=6)
