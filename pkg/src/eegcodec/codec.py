"""Single-channel convolutional encoder/decoder with stride-based framing.

One latent frame covers ``stride_total`` input samples (512 by default), so
a 30 s window at 512 Hz becomes 30 frames.  The decoder accepts an optional
per-block style (FiLM scale and bias on each block input) that the
multi-channel model uses for channel-specific decoding.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ConfigError, ShapeError
from .rvq import ResidualVQ, RVQConfig, RVQOutput, TokenStream


@dataclass
class CodecConfig:
    block_strides: list[int] = field(default_factory=lambda: [8, 8, 4, 2])
    hidden_dim: int = 64
    base_width: int = 16
    n_res_units: int = 3
    snake: bool = True

    def __post_init__(self):
        self.block_strides = [int(s) for s in self.block_strides]
        if not self.block_strides or any(s < 1 for s in self.block_strides):
            raise ConfigError("block_strides must be a non-empty list of positive integers")
        if self.hidden_dim <= 0 or self.base_width <= 0:
            raise ConfigError("hidden_dim and base_width must be positive")

    @property
    def stride_total(self) -> int:
        return math.prod(self.block_strides)

    @property
    def encoder_widths(self) -> list[int]:
        return [self.base_width * 2 ** i for i in range(len(self.block_strides) + 1)]

    @property
    def decoder_widths(self) -> list[int]:
        """Input width of every decoder block (the blocks FiLM modulates)."""
        return self.encoder_widths[::-1][:-1]

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def full_scale(cls) -> "CodecConfig":
        return cls(hidden_dim=1024, base_width=64)


@dataclass
class LatentSequence:
    frames: np.ndarray  # [T_frames, hidden_dim]
    stride_total: int
    sample_rate_hz: float
    n_samples: int  # unpadded input length

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]


@dataclass
class StyleVector:
    """Per decoder block (scale, bias); identity is scale 1, bias 0."""

    scales: list[torch.Tensor]
    biases: list[torch.Tensor]

    @classmethod
    def identity(cls, config: CodecConfig) -> "StyleVector":
        widths = config.decoder_widths
        return cls([torch.ones(w) for w in widths], [torch.zeros(w) for w in widths])

    @classmethod
    def from_flat(cls, scale: torch.Tensor, bias: torch.Tensor, config: CodecConfig) -> "StyleVector":
        """Split packed [..., sum(widths)] tensors into per-block pieces."""
        widths = config.decoder_widths
        return cls(list(torch.split(scale, widths, dim=-1)), list(torch.split(bias, widths, dim=-1)))


class Snake(nn.Module):
    """x + sin^2(alpha x) / alpha with a learned per-channel alpha."""

    def __init__(self, channels: int):
        super().__init__()
        self.alpha = nn.Parameter(torch.ones(1, channels, 1))

    def forward(self, x):
        return x + torch.sin(self.alpha * x).pow(2) / (self.alpha + 1e-9)


def _act(channels: int, snake: bool) -> nn.Module:
    return Snake(channels) if snake else nn.ELU()


class ResidualUnit(nn.Module):
    def __init__(self, width: int, dilation: int, snake: bool):
        super().__init__()
        self.block = nn.Sequential(
            _act(width, snake),
            nn.Conv1d(width, width, 7, dilation=dilation, padding=3 * dilation),
            _act(width, snake),
            nn.Conv1d(width, width, 1),
        )

    def forward(self, x):
        return x + self.block(x)


def _init_convs(module: nn.Module) -> None:
    """Zero biases and unit-gain weights.

    With torch's default init each layer shrinks the input-dependent part of
    the signal while its bias adds a constant, so an untrained decoder emits
    the same waveform for every latent and the encoder receives almost no
    gradient.  Keeping the signal's scale makes the latent matter from step 0.
    """
    for m in module.modules():
        if isinstance(m, nn.ConvTranspose1d):
            fan_in = m.in_channels * m.kernel_size[0] / m.stride[0]
        elif isinstance(m, nn.Conv1d):
            fan_in = m.in_channels * m.kernel_size[0]
        else:
            continue
        nn.init.normal_(m.weight, std=fan_in ** -0.5)
        nn.init.zeros_(m.bias)


def _res_stack(width: int, n_units: int, snake: bool) -> list[nn.Module]:
    return [ResidualUnit(width, 3 ** i, snake) for i in range(n_units)]


class EncoderBlock(nn.Module):
    def __init__(self, c_in: int, c_out: int, stride: int, n_units: int, snake: bool):
        super().__init__()
        self.block = nn.Sequential(
            *_res_stack(c_in, n_units, snake),
            _act(c_in, snake),
            nn.Conv1d(c_in, c_out, 2 * stride, stride=stride, padding=math.ceil(stride / 2)),
        )

    def forward(self, x):
        return self.block(x)


class DecoderBlock(nn.Module):
    def __init__(self, c_in: int, c_out: int, stride: int, n_units: int, snake: bool):
        super().__init__()
        pad = math.ceil(stride / 2)
        self.block = nn.Sequential(
            _act(c_in, snake),
            nn.ConvTranspose1d(c_in, c_out, 2 * stride, stride=stride, padding=pad,
                               output_padding=2 * pad - stride),
            *_res_stack(c_out, n_units, snake),
        )

    def forward(self, x):
        return self.block(x)


class Encoder(nn.Module):
    def __init__(self, config: CodecConfig):
        super().__init__()
        w = config.encoder_widths
        layers = [nn.Conv1d(1, w[0], 7, padding=3)]
        for i, s in enumerate(config.block_strides):
            layers.append(EncoderBlock(w[i], w[i + 1], s, config.n_res_units, config.snake))
        layers += [_act(w[-1], config.snake), nn.Conv1d(w[-1], config.hidden_dim, 3, padding=1)]
        self.layers = nn.Sequential(*layers)
        _init_convs(self)

    def forward(self, x):
        return self.layers(x)


class Decoder(nn.Module):
    def __init__(self, config: CodecConfig):
        super().__init__()
        w = config.encoder_widths[::-1]
        self.conv_in = nn.Conv1d(config.hidden_dim, w[0], 7, padding=3)
        self.blocks = nn.ModuleList(
            DecoderBlock(w[i], w[i + 1], s, config.n_res_units, config.snake)
            for i, s in enumerate(reversed(config.block_strides))
        )
        self.head = nn.Sequential(_act(w[-1], config.snake), nn.Conv1d(w[-1], 1, 7, padding=3), nn.Tanh())
        _init_convs(self)
        with torch.no_grad():
            self.head[1].weight.mul_(0.1)  # start near the scale of normalized EEG, away from tanh saturation

    def forward(self, z, style: StyleVector | None = None):
        x = self.conv_in(z)
        for i, block in enumerate(self.blocks):
            if style is not None:
                scale, bias = style.scales[i], style.biases[i]
                x = x * scale.unsqueeze(-1) + bias.unsqueeze(-1)
            x = block(x)
        return self.head(x)


def pad_to_stride(x: torch.Tensor, stride: int) -> torch.Tensor:
    """Right-pad the last axis with zeros up to a multiple of ``stride``."""
    n = x.shape[-1]
    if n < stride:
        raise ShapeError(f"input of {n} samples is shorter than one stride window ({stride})")
    extra = (-n) % stride
    return F.pad(x, (0, extra)) if extra else x


def n_frames(n_samples: int, stride: int) -> int:
    return math.ceil(n_samples / stride)


@dataclass
class CodecOutput:
    recon: torch.Tensor  # [B, 1, T * stride]
    latents: torch.Tensor  # [B, H, T], encoder output
    rvq: RVQOutput


class Codec(nn.Module):
    """Encoder, residual quantizer and decoder for one channel at a time."""

    kind = "sc"

    def __init__(self, config: CodecConfig | None = None, rvq_config: RVQConfig | None = None):
        super().__init__()
        self.config = config or CodecConfig()
        self.rvq_config = rvq_config or RVQConfig()
        self.encoder = Encoder(self.config)
        self.quantizer = ResidualVQ(self.config.hidden_dim, self.rvq_config)
        self.decoder = Decoder(self.config)

    @property
    def stride_total(self) -> int:
        return self.config.stride_total

    def model_config(self) -> dict:
        return {"kind": self.kind, "codec": self.config.to_dict(),
                "rvq": self.quantizer.config.to_dict(),
                "active_depth": self.quantizer.active_depth}

    def encode(self, x: torch.Tensor) -> torch.Tensor:
        """x [B, 1, N] -> latents [B, H, ceil(N / stride)]."""
        return self.encoder(pad_to_stride(x, self.stride_total))

    def decode(self, z: torch.Tensor, style: StyleVector | None = None) -> torch.Tensor:
        if z.shape[1] != self.config.hidden_dim:
            raise ShapeError(f"latent width {z.shape[1]} != hidden_dim {self.config.hidden_dim}")
        return self.decoder(z, style)

    def forward(self, x: torch.Tensor, depth: int | None = None, dropout: bool = False,
                generator: torch.Generator | None = None) -> CodecOutput:
        z = self.encode(x)
        q = self.quantizer(z, depth, dropout=dropout, generator=generator)
        return CodecOutput(self.decode(q.quantized), z, q)

    # ---- single-signal numpy API

    def _signal(self, x) -> torch.Tensor:
        x = torch.as_tensor(np.asarray(x, dtype=np.float32)).to(self.decoder.conv_in.weight.dtype)
        if x.ndim != 1:
            raise ShapeError(f"expected a single channel, got shape {tuple(x.shape)}")
        return x.view(1, 1, -1)

    @torch.no_grad()
    def encode_signal(self, x, sample_rate_hz: float = 512.0) -> LatentSequence:
        z = self.encode(self._signal(x))
        return LatentSequence(z[0].T.cpu().numpy(), self.stride_total, sample_rate_hz, int(np.shape(x)[-1]))

    @torch.no_grad()
    def decode_latents(self, latents, style: StyleVector | None = None) -> np.ndarray:
        frames = latents.frames if isinstance(latents, LatentSequence) else latents
        z = torch.as_tensor(np.asarray(frames, dtype=np.float32)).to(self.decoder.conv_in.weight.dtype)
        if z.ndim != 2 or z.shape[1] != self.config.hidden_dim:
            raise ShapeError(f"latents must be [frames x {self.config.hidden_dim}], got {tuple(z.shape)}")
        return self.decode(z.T.unsqueeze(0), style)[0, 0].cpu().numpy()

    @torch.no_grad()
    def compress(self, x, depth: int | None = None, sample_rate_hz: float = 512.0,
                 channel: str = "") -> TokenStream:
        out = self.quantizer(self.encode(self._signal(x)), depth)
        d = out.codes.shape[1]
        return TokenStream(out.codes[0].cpu().numpy(), self.quantizer.vocab_sizes[:d], self.stride_total,
                           sample_rate_hz, [channel] if channel else [], self.quantizer.config.code_dim)

    @torch.no_grad()
    def decompress(self, tokens: TokenStream, style: StyleVector | None = None) -> np.ndarray:
        tokens.validate()
        z = self.quantizer.dequantize_codes(torch.as_tensor(tokens.codes).unsqueeze(0))
        return self.decode(z, style)[0, 0].cpu().numpy()

    @torch.no_grad()
    def reconstruct(self, data, depth: int | None = None) -> np.ndarray:
        """Round-trip every row of data [C, N] independently; output is trimmed to N."""
        x = torch.as_tensor(np.asarray(data, dtype=np.float32)).to(self.decoder.conv_in.weight.dtype)
        n = x.shape[-1]
        out = self(x.view(-1, 1, n), depth)
        return out.recon[:, 0, :n].cpu().numpy()
