"""Bit-rate accounting for token streams."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from ..errors import ConfigError


@dataclass
class BitrateSpec:
    n_codebooks: int = 9
    vocab_sizes: list[int] = field(default_factory=lambda: [1024] * 9)
    stride_total: int = 512
    presented_rate_hz: float = 512.0
    native_rate_hz: float = 512.0

    def __post_init__(self):
        if isinstance(self.vocab_sizes, int):
            self.vocab_sizes = [self.vocab_sizes] * self.n_codebooks
        self.vocab_sizes = [int(v) for v in self.vocab_sizes]
        if len(self.vocab_sizes) == 1 and self.n_codebooks > 1:
            self.vocab_sizes = self.vocab_sizes * self.n_codebooks
        if len(self.vocab_sizes) != self.n_codebooks:
            raise ConfigError("vocab_sizes must list one size per codebook")
        if min(self.n_codebooks, self.stride_total) < 1 or min(self.presented_rate_hz, self.native_rate_hz) <= 0:
            raise ConfigError("bitrate fields must be positive")
        if min(self.vocab_sizes) < 2:
            raise ConfigError("vocabulary sizes must be at least 2")

    def pruned(self, depth: int) -> "BitrateSpec":
        return BitrateSpec(depth, self.vocab_sizes[:depth], self.stride_total,
                           self.presented_rate_hz, self.native_rate_hz)


def bitrate(spec: BitrateSpec, group_size: int = 1) -> float:
    """Bits per real second; ``group_size`` > 1 gives the per-channel share of a joint stream."""
    if group_size < 1:
        raise ConfigError("group_size must be >= 1")
    frames_per_s = spec.presented_rate_hz / spec.stride_total
    bits = sum(math.ceil(math.log2(v)) for v in spec.vocab_sizes)
    return frames_per_s * bits / group_size
