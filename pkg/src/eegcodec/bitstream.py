"""EEGT token files.

Layout::

    b"EEGT" | version u16 | header length u32 | UTF-8 key=value header | packed codes

Every stream's codes are written book-major, frame-minor, each code taking
ceil(log2 V) bits for its book's vocabulary V.  All streams share one
MSB-first bit sequence, zero-padded to a whole byte at the end.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CorruptionError, FormatError
from .rvq import TokenStream, bits_per_token

TOKEN_MAGIC = b"EEGT"
TOKEN_VERSION = 1
_PREAMBLE = struct.Struct("<4sHI")


@dataclass
class TokenFile:
    streams: list[TokenStream]
    provenance: str = "single"
    meta: dict[str, str] = field(default_factory=dict)

    @property
    def channels(self) -> list[str]:
        return [c for s in self.streams for c in s.channels]


def _pack(rows: list[tuple[np.ndarray, int]]) -> bytes:
    parts = []
    for codes, width in rows:
        if codes.size == 0:
            continue
        shifts = np.arange(width - 1, -1, -1, dtype=np.int64)
        parts.append(((codes.astype(np.int64)[:, None] >> shifts) & 1).astype(np.uint8).ravel())
    if not parts:
        return b""
    return np.packbits(np.concatenate(parts)).tobytes()


def encode_token_file(tf: TokenFile) -> bytes:
    if not tf.streams:
        raise FormatError("a token file needs at least one stream")
    first = tf.streams[0]
    for s in tf.streams:
        s.validate()
        if (s.vocab_sizes != first.vocab_sizes or s.stride_total != first.stride_total
                or s.sample_rate_hz != first.sample_rate_hz or s.code_dim != first.code_dim):
            raise FormatError("all streams in one file must share depth, vocabularies, stride and rate")
    lines = [
        f"depth={first.depth}",
        f"vocab_sizes={json.dumps(first.vocab_sizes)}",
        f"code_dim={first.code_dim}",
        f"stride_total={first.stride_total}",
        f"sample_rate_hz={first.sample_rate_hz!r}",
        f"provenance={json.dumps(tf.provenance)}",
        f"n_streams={len(tf.streams)}",
    ]
    for i, s in enumerate(tf.streams):
        lines.append(f"stream.{i}.channels={json.dumps(s.channels)}")
        lines.append(f"stream.{i}.frames={s.n_frames}")
    for k, v in sorted(tf.meta.items()):
        lines.append(f"meta.{k}={json.dumps(v)}")
    header = "\n".join(lines).encode("utf-8")
    widths = [bits_per_token(v) for v in first.vocab_sizes]
    payload = _pack([(row, widths[b]) for s in tf.streams for b, row in enumerate(s.codes)])
    return _PREAMBLE.pack(TOKEN_MAGIC, TOKEN_VERSION, len(header)) + header + payload


def decode_token_file(raw: bytes) -> TokenFile:
    if len(raw) < _PREAMBLE.size:
        raise FormatError("token file shorter than its preamble")
    magic, version, hlen = _PREAMBLE.unpack_from(raw)
    if magic != TOKEN_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {TOKEN_MAGIC!r}")
    if version != TOKEN_VERSION:
        raise FormatError(f"unsupported token file version {version}")
    try:
        text = raw[_PREAMBLE.size:_PREAMBLE.size + hlen].decode("utf-8")
        fields = dict(line.split("=", 1) for line in text.split("\n") if line)
        depth = int(fields["depth"])
        vocab = [int(v) for v in json.loads(fields["vocab_sizes"])]
        code_dim = int(fields["code_dim"])
        stride = int(fields["stride_total"])
        rate = float(fields["sample_rate_hz"])
        provenance = json.loads(fields["provenance"])
        n_streams = int(fields["n_streams"])
        layout = [(json.loads(fields[f"stream.{i}.channels"]), int(fields[f"stream.{i}.frames"]))
                  for i in range(n_streams)]
        meta = {k[5:]: json.loads(v) for k, v in fields.items() if k.startswith("meta.")}
    except (KeyError, ValueError, UnicodeDecodeError) as exc:
        raise FormatError(f"malformed token header ({exc})") from exc
    if len(vocab) != depth:
        raise FormatError(f"{len(vocab)} vocab sizes for depth {depth}")
    widths = [bits_per_token(v) for v in vocab]
    need = sum(frames * sum(widths) for _, frames in layout)
    bits = np.unpackbits(np.frombuffer(raw, dtype=np.uint8, offset=_PREAMBLE.size + hlen))
    if bits.size < need or bits.size - need >= 8:
        raise CorruptionError(f"payload holds {bits.size} bits, header implies {need}")
    streams, pos = [], 0
    for channels, frames in layout:
        codes = np.zeros((depth, frames), dtype=np.int64)
        for b, w in enumerate(widths):
            chunk = bits[pos:pos + frames * w].reshape(frames, w).astype(np.int64)
            codes[b] = chunk @ (1 << np.arange(w - 1, -1, -1, dtype=np.int64))
            pos += frames * w
        stream = TokenStream(codes, vocab, stride, rate, channels, code_dim)
        stream.validate()
        streams.append(stream)
    return TokenFile(streams, provenance, meta)


def save_tokens(tf: TokenFile, path) -> None:
    Path(path).write_bytes(encode_token_file(tf))


def load_tokens(path) -> TokenFile:
    return decode_token_file(Path(path).read_bytes())
