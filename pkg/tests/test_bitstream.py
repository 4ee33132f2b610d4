import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from eegcodec.bitstream import TokenFile, decode_token_file, encode_token_file, load_tokens, save_tokens
from eegcodec.errors import CorruptionError, FormatError
from eegcodec.rvq import TokenStream


def _stream(rng, depth, frames, vocab, channels=("CZ",)):
    codes = np.stack([rng.integers(0, vocab[i], frames) for i in range(depth)])
    return TokenStream(codes, vocab, 512, 512.0, list(channels), 8)


def _same(a: TokenFile, b: TokenFile):
    assert a.provenance == b.provenance and a.meta == b.meta and len(a.streams) == len(b.streams)
    for s, t in zip(a.streams, b.streams):
        assert np.array_equal(s.codes, t.codes) and s.codes.dtype == t.codes.dtype
        assert s.vocab_sizes == t.vocab_sizes and s.channels == t.channels
        assert (s.stride_total, s.sample_rate_hz, s.code_dim) == (t.stride_total, t.sample_rate_hz, t.code_dim)


def test_round_trip_file(tmp_path, rng):
    tf = TokenFile([_stream(rng, 9, 30, [1024] * 9, ["C3", "C4", "CZ"])], "random-groups", {"seed": "3"})
    save_tokens(tf, tmp_path / "t.eegt")
    _same(tf, load_tokens(tmp_path / "t.eegt"))


def test_packed_size(rng):
    tf = TokenFile([_stream(rng, 9, 30, [1024] * 9)])
    raw = encode_token_file(tf)
    # payload is exactly 9 * 30 * 10 bits rounded up to a byte
    header_len = int.from_bytes(raw[6:10], "little")
    assert len(raw) - 10 - header_len == (9 * 30 * 10 + 7) // 8


def test_bit_order_msb_first():
    tf = TokenFile([TokenStream(np.array([[1, 2]]), [4], 512, 512.0)])
    raw = encode_token_file(tf)
    assert raw[-1] == 0b01100000


def test_bad_magic_and_truncation(rng):
    raw = encode_token_file(TokenFile([_stream(rng, 2, 5, [8, 8])]))
    with pytest.raises(FormatError):
        decode_token_file(b"NOPE" + raw[4:])
    with pytest.raises(CorruptionError):
        decode_token_file(raw[:-1])


def test_out_of_range_codes_rejected():
    with pytest.raises(CorruptionError):
        encode_token_file(TokenFile([TokenStream(np.array([[9]]), [8], 512, 512.0)]))


def test_fuzz_10k_round_trips():
    rng = np.random.default_rng(99)
    for _ in range(10_000):
        depth = int(rng.integers(1, 10))
        vocab = [int(v) for v in rng.integers(2, 2049, depth)]
        streams = [_stream(rng, depth, int(rng.integers(0, 12)), vocab, [f"ch{j}" for j in range(rng.integers(0, 3))])
                   for _ in range(int(rng.integers(1, 4)))]
        tf = TokenFile(streams, "single")
        _same(tf, decode_token_file(encode_token_file(tf)))


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(0, 1023), min_size=1, max_size=64))
def test_round_trip_property(values):
    tf = TokenFile([TokenStream(np.array([values]), [1024], 512, 512.0, ["X"])])
    assert decode_token_file(encode_token_file(tf)).streams[0].codes.tolist() == [values]
