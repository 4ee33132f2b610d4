import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings, strategies as st

from eegcodec.codec import Codec
from eegcodec.data_io import synth_eeg
from eegcodec.errors import ConfigError, DataError
from eegcodec.evaluation.plots import read_tsv, write_tsv
from eegcodec.evaluation import (FEATURE_NAMES, BitrateSpec, IdentityCodec, LabeledRecording, benchmark_downstream,
                                 bitrate, channel_features, emit_plots, eval_reconstruction, extract_features,
                                 pruning_sweep, subject_split)
from eegcodec.preprocess import PreprocessConfig, preprocess_recording
from eegcodec.rvq import RVQConfig


@pytest.fixture(scope="module")
def windows():
    return preprocess_recording(synth_eeg(3, 40, 256, seed=3), PreprocessConfig(), "e0")


def test_bitrate_table():
    assert bitrate(BitrateSpec()) == 90.0
    assert bitrate(BitrateSpec(vocab_sizes=512)) == 81.0
    assert bitrate(BitrateSpec().pruned(3)) == 30.0
    assert bitrate(BitrateSpec(), group_size=5) == 18.0
    # non power of two rounds bits up
    assert bitrate(BitrateSpec(1, [1000])) == 10.0
    with pytest.raises(ConfigError):
        BitrateSpec(2, [1024, 1024, 1024])
    with pytest.raises(ConfigError):
        BitrateSpec(1, [1])
    with pytest.raises(ConfigError):
        bitrate(BitrateSpec(), group_size=0)


@given(st.lists(st.integers(2, 4096), min_size=1, max_size=12), st.integers(1, 5))
def test_bitrate_monotone_in_depth(vocabs, g):
    spec = BitrateSpec(len(vocabs), vocabs)
    rates = [bitrate(spec.pruned(k), g) for k in range(1, len(vocabs) + 1)]
    assert all(b > a for a, b in zip(rates, rates[1:]))
    assert math.isclose(rates[-1] * g, bitrate(spec))


def test_identity_codec_scores_zero(windows):
    assert eval_reconstruction(IdentityCodec(), windows[:3]) == 0.0
    assert eval_reconstruction(IdentityCodec(), windows[:2], mode="manual-groups") == 0.0
    with pytest.raises(ConfigError):
        eval_reconstruction(IdentityCodec(), [])
    with pytest.raises(ConfigError):
        eval_reconstruction(IdentityCodec(), windows[:1], mode="bogus")


def test_alpha_tone_dominates_alpha_band():
    fs = 256
    t = np.arange(30 * fs) / fs
    f = channel_features(np.sin(2 * np.pi * 10 * t), fs)
    assert f[FEATURE_NAMES.index("rel_alpha")] > 0.9


def test_white_noise_entropy_near_maximum():
    fs = 256
    x = np.random.default_rng(0).standard_normal(600 * fs)
    f = channel_features(x, fs)
    n_bins = 4 * fs // 2 + 1
    assert abs(f[FEATURE_NAMES.index("spectral_entropy")] - np.log(n_bins)) < 0.05 * np.log(n_bins)


def test_constant_signal_features():
    f = channel_features(np.full(2048, 3.0), 256)
    assert f[FEATURE_NAMES.index("line_length")] == 0.0
    assert f[FEATURE_NAMES.index("variance")] == 0.0


def test_line_length_definition():
    x = np.array([0.0, 1.0, -1.0, 2.0])
    assert channel_features(np.tile(x, 300), 256)[FEATURE_NAMES.index("line_length")] == pytest.approx(
        np.abs(np.diff(np.tile(x, 300))).mean())


@settings(max_examples=20, deadline=None)
@given(st.permutations(range(4)))
def test_features_follow_channel_permutation(perm):
    data = np.random.default_rng(1).standard_normal((4, 1024))
    names = ["A", "B", "C", "D"]
    base = extract_features(data, names, 256)
    moved = extract_features(data[list(perm)], [names[i] for i in perm], 256)
    for n in names:
        np.testing.assert_array_equal(base[n], moved[n])


def test_feature_shape_mismatch():
    with pytest.raises(DataError):
        extract_features(np.zeros((2, 512)), ["A"], 256)


def _recs(windows, labels, subjects):
    return [LabeledRecording(f"r{i}", s, y, windows[:1]) for i, (y, s) in enumerate(zip(labels, subjects))]


def test_subject_split_is_disjoint_and_stratified(windows):
    labels = [0, 1] * 10
    subjects = [f"s{i // 2}" if i < 8 else f"t{i}" for i in range(20)]
    recs = _recs(windows, labels, subjects)
    train, test = subject_split(recs, 0.5, seed=4)
    by = {r.recording_id: r for r in recs}
    assert not {by[i].subject for i in train} & {by[i].subject for i in test}
    assert sorted(train + test) == sorted(by)
    assert {by[i].label for i in train} == {0, 1} == {by[i].label for i in test}


def test_single_class_rejected(windows):
    recs = _recs(windows, [1] * 6, [f"s{i}" for i in range(6)])
    with pytest.raises(ConfigError):
        benchmark_downstream(recs, {})


def test_tsv_round_trip(tmp_path):
    write_tsv(tmp_path / "a.tsv", ["k", "loss"], [(9, 0.1), (8, 0.2)])
    header, rows = read_tsv(tmp_path / "a.tsv")
    assert header == ["k", "loss"] and rows == [["9", "0.1"], ["8", "0.2"]]


def test_emit_plots(tmp_path):
    write_tsv(tmp_path / "depth_sweep.tsv", ["k", "loss"], [(k, 1.0 / k) for k in range(9, 2, -1)])
    x = np.random.default_rng(0).standard_normal((2, 512))
    np.savez(tmp_path / "overlay.npz", original=x, reconstruction=x, fs=256.0)
    written, missing = emit_plots(tmp_path)
    names = {p.name for p in written}
    assert {"depth_curve.png", "overlay.png", "summary.txt"} <= names
    assert set(missing) == {"vocab_sweep.tsv", "rate_sweep.tsv", "benchmark.tsv"}
    summary = (tmp_path / "summary.txt").read_text()
    rows = [ln.split("\t") for ln in summary.splitlines() if ln[:1].isdigit()]
    assert [int(r[0]) for r in rows] == list(range(9, 2, -1))
    assert [float(r[2]) for r in rows] == [10.0 * k for k in range(9, 2, -1)]
    assert "overlay_max_gap\t0" in summary
    for m in missing:
        assert m in summary


def test_emit_plots_with_nothing(tmp_path):
    written, missing = emit_plots(tmp_path)
    assert [p.name for p in written] == ["summary.txt"] and len(missing) == 5


def test_pruning_sweep(windows, toy_codec_config):
    torch.manual_seed(0)
    model = Codec(toy_codec_config, RVQConfig(n_books=4, vocab_sizes=16)).eval()
    curve = pruning_sweep(model, windows[:2], "post", min_depth=3)
    assert [k for k, _ in curve] == [4, 3]
    assert curve[0][1] == pytest.approx(eval_reconstruction(model, windows[:2]), abs=1e-9)
    with pytest.raises(ConfigError):
        pruning_sweep(model, windows[:2], "pre", checkpoints={})
