"""Joint coding of a channel group with channel-specific decoding.

Each member channel goes through the shared single-channel encoder, gets
its channel embedding added, and is placed in a fixed slot (canonical
order).  Slots are concatenated along the feature axis into frame tokens of
width ``hidden_dim * max_group_size``; empty slots are zero and masked out
of every normalisation.  Self-attention runs over frames, a projection
maps back to ``hidden_dim`` and the result is quantized into one token
stream for the whole group.  Decoding runs the shared decoder once per
member, modulated by that member's style (per-block scale and bias).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .codec import Codec, CodecConfig, CodecOutput, StyleVector
from .errors import ConfigError, ShapeError, VocabularyError
from .grouping import MAX_GROUP_SIZE
from .montage import STANDARD_19, canonical_label
from .rvq import RVQConfig, RVQOutput, TokenStream

DEFAULT_CHANNEL_VOCAB = STANDARD_19 + [
    "A1", "A2", "FPZ", "OZ", "T1", "T2", "C3P", "C4P", "PG1", "PG2", "SP1", "SP2",
    "EKG1", "LOC", "ROC", "26", "27", "28", "29", "30", "31", "32",
]


@dataclass
class McConfig:
    channel_vocab: list[str] = field(default_factory=lambda: list(DEFAULT_CHANNEL_VOCAB))
    max_group_size: int = MAX_GROUP_SIZE
    n_layers: int = 2
    n_heads: int = 4
    ff_mult: int = 2

    def __post_init__(self):
        if not 1 <= self.max_group_size <= MAX_GROUP_SIZE:
            raise ConfigError(f"max_group_size must lie in [1, {MAX_GROUP_SIZE}]")
        if len(set(self.channel_vocab)) != len(self.channel_vocab):
            raise ConfigError("channel vocabulary has duplicates")

    def to_dict(self) -> dict:
        return asdict(self)


class MaskedLayerNorm(nn.Module):
    """LayerNorm over the features of real slots only; empty slots stay zero."""

    def __init__(self, n_slots: int, width: int, eps: float = 1e-5):
        super().__init__()
        self.weight = nn.Parameter(torch.ones(n_slots, width))
        self.bias = nn.Parameter(torch.zeros(n_slots, width))
        self.eps = eps

    def forward(self, x, mask):
        # x [B, T, S, H], mask [B, S]
        m = mask[:, None, :, None].to(x.dtype)
        count = m.sum(dim=(2, 3), keepdim=True) * x.shape[-1]
        mean = (x * m).sum(dim=(2, 3), keepdim=True) / count
        var = ((x - mean).pow(2) * m).sum(dim=(2, 3), keepdim=True) / count
        return ((x - mean) / torch.sqrt(var + self.eps) * self.weight + self.bias) * m


class FusionLayer(nn.Module):
    def __init__(self, n_slots: int, width: int, n_heads: int, ff_mult: int):
        super().__init__()
        d = n_slots * width
        if d % n_heads:
            raise ConfigError(f"attention width {d} not divisible by {n_heads} heads")
        self.n_heads = n_heads
        self.norm1 = MaskedLayerNorm(n_slots, width)
        self.qkv = nn.Linear(d, 3 * d)
        self.out = nn.Linear(d, d)
        self.norm2 = MaskedLayerNorm(n_slots, width)
        self.ff = nn.Sequential(nn.Linear(d, ff_mult * d), nn.GELU(), nn.Linear(ff_mult * d, d))
        # residual branches start closed so the layer is the identity at init
        for lin in (self.out, self.ff[2]):
            nn.init.zeros_(lin.weight)
            nn.init.zeros_(lin.bias)

    def forward(self, x, mask):
        B, T, S, H = x.shape
        m = mask[:, None, :, None].to(x.dtype)
        h = self.norm1(x, mask).reshape(B, T, S * H)
        q, k, v = self.qkv(h).view(B, T, 3, self.n_heads, -1).permute(2, 0, 3, 1, 4)
        att = torch.softmax(q @ k.transpose(-1, -2) / math.sqrt(q.shape[-1]), dim=-1)
        a = (att @ v).transpose(1, 2).reshape(B, T, S * H)
        x = x + self.out(a).view(B, T, S, H) * m
        h = self.norm2(x, mask).reshape(B, T, S * H)
        return x + self.ff(h).view(B, T, S, H) * m


class GroupFusion(nn.Module):
    def __init__(self, hidden_dim: int, config: McConfig):
        super().__init__()
        S = config.max_group_size
        self.n_slots = S
        self.channel_embedding = nn.Parameter(0.02 * torch.randn(len(config.channel_vocab), hidden_dim))
        self.layers = nn.ModuleList(
            FusionLayer(S, hidden_dim, config.n_heads, config.ff_mult) for _ in range(config.n_layers))
        self.proj = nn.Linear(S * hidden_dim, hidden_dim)
        with torch.no_grad():
            self.proj.weight.copy_(torch.eye(hidden_dim).repeat(1, S))
            self.proj.bias.zero_()

    def concat(self, lat, ids, mask):
        """lat [B, S, H, T] -> slot tokens [B, T, S, H] with embeddings added and empty slots zeroed."""
        m = mask[:, None, :, None].to(lat.dtype)
        x = lat.permute(0, 3, 1, 2) + self.channel_embedding[ids].unsqueeze(1)
        return x * m

    def forward(self, lat, ids, mask):
        x = self.concat(lat, ids, mask)
        for layer in self.layers:
            x = layer(x, mask)
        B, T, S, H = x.shape
        # rescale so the initial projection is the mean over real slots
        n_real = mask.sum(dim=1).clamp_min(1).to(x.dtype).view(B, 1, 1)
        fused = self.proj(x.reshape(B, T, S * H)) * (1.0 / n_real)
        return fused.transpose(1, 2)


@dataclass
class GroupBatch:
    x: torch.Tensor  # [B, S, N]
    ids: torch.Tensor  # [B, S] channel-vocabulary index (0 for empty slots)
    mask: torch.Tensor  # [B, S] bool


@dataclass
class McOutput:
    recon: torch.Tensor  # [B, S, T * stride], empty slots zero
    fused: torch.Tensor  # [B, H, T]
    rvq: RVQOutput


class MultiChannelCodec(Codec):
    kind = "mc"

    def __init__(self, config: CodecConfig | None = None, rvq_config: RVQConfig | None = None,
                 mc_config: McConfig | None = None):
        super().__init__(config, rvq_config)
        self.mc_config = mc_config or McConfig()
        self.fusion = GroupFusion(self.config.hidden_dim, self.mc_config)
        n_style = sum(self.config.decoder_widths)
        n_vocab = len(self.mc_config.channel_vocab)
        self.style_scale = nn.Parameter(torch.ones(n_vocab, n_style))
        self.style_bias = nn.Parameter(torch.zeros(n_vocab, n_style))
        self._index = {name: i for i, name in enumerate(self.mc_config.channel_vocab)}
        self._label_index = {}
        for i, name in enumerate(self.mc_config.channel_vocab):
            self._label_index.setdefault(canonical_label(name), i)

    def model_config(self) -> dict:
        cfg = super().model_config()
        cfg["mc"] = self.mc_config.to_dict()
        return cfg

    @property
    def max_group_size(self) -> int:
        return self.mc_config.max_group_size

    def channel_index(self, name: str) -> int:
        if name in self._index:
            return self._index[name]
        idx = self._label_index.get(canonical_label(name))
        if idx is None:
            raise VocabularyError(f"channel {name!r} is not in the model's channel vocabulary")
        return idx

    def canonical_order(self, names: list[str]) -> list[str]:
        return sorted(names, key=lambda n: (self.channel_index(n), n))

    def style_for(self, name: str) -> StyleVector:
        i = self.channel_index(name)
        return StyleVector.from_flat(self.style_scale[i], self.style_bias[i], self.config)

    # ---- batched tensor path

    def make_batch(self, groups: list[dict[str, np.ndarray]]) -> GroupBatch:
        """Pack groups (channel name -> 1-D signal) into slot tensors in canonical order."""
        S = self.max_group_size
        n = {len(next(iter(g.values()))) for g in groups}
        if len(n) != 1:
            raise ShapeError("all groups in a batch must share one length")
        n = n.pop()
        dtype = self.decoder.conv_in.weight.dtype
        x = torch.zeros(len(groups), S, n, dtype=dtype)
        ids = torch.zeros(len(groups), S, dtype=torch.long)
        mask = torch.zeros(len(groups), S, dtype=torch.bool)
        for b, g in enumerate(groups):
            if len(g) > S:
                raise ConfigError(f"group of {len(g)} channels exceeds the maximum of {S}")
            for s, name in enumerate(self.canonical_order(list(g))):
                sig = np.asarray(g[name], dtype=np.float32)
                if sig.shape != (n,):
                    raise ShapeError(f"channel {name!r} has shape {sig.shape}, expected ({n},)")
                x[b, s] = torch.as_tensor(sig)
                ids[b, s] = self.channel_index(name)
                mask[b, s] = True
        return GroupBatch(x, ids, mask)

    def encode_group_tensor(self, batch: GroupBatch) -> torch.Tensor:
        B, S, N = batch.x.shape
        flat = batch.mask.reshape(-1)
        real = self.encode(batch.x.reshape(B * S, 1, N)[flat])
        lat = real.new_zeros(B * S, *real.shape[1:])
        lat[flat] = real
        return self.fusion(lat.view(B, S, *real.shape[1:]), batch.ids, batch.mask)

    def decode_group_tensor(self, z: torch.Tensor, batch: GroupBatch) -> torch.Tensor:
        B, S = batch.ids.shape
        flat = batch.mask.reshape(-1)
        z_rep = z.unsqueeze(1).expand(B, S, *z.shape[1:]).reshape(B * S, *z.shape[1:])[flat]
        ids = batch.ids.reshape(-1)[flat]
        style = StyleVector.from_flat(self.style_scale[ids], self.style_bias[ids], self.config)
        dec = self.decode(z_rep, style)[:, 0]
        recon = dec.new_zeros(B * S, dec.shape[-1])
        recon[flat] = dec
        return recon.view(B, S, -1)

    def forward_group(self, batch: GroupBatch, depth: int | None = None, dropout: bool = False,
                      generator: torch.Generator | None = None) -> McOutput:
        fused = self.encode_group_tensor(batch)
        q = self.quantizer(fused, depth, dropout=dropout, generator=generator)
        return McOutput(self.decode_group_tensor(q.quantized, batch), fused, q)

    # ---- numpy API

    @torch.no_grad()
    def encode_group(self, windows_by_channel: dict[str, np.ndarray], depth: int | None = None,
                     sample_rate_hz: float = 512.0) -> TokenStream:
        batch = self.make_batch([windows_by_channel])
        q = self.quantizer(self.encode_group_tensor(batch), depth)
        d = q.codes.shape[1]
        return TokenStream(q.codes[0].cpu().numpy(), self.quantizer.vocab_sizes[:d], self.stride_total,
                           sample_rate_hz, self.canonical_order(list(windows_by_channel)),
                           self.quantizer.config.code_dim)

    @torch.no_grad()
    def decode_group(self, tokens: TokenStream, member_channels: list[str] | None = None) -> dict[str, np.ndarray]:
        members = list(member_channels or tokens.channels)
        if not members:
            raise VocabularyError("token stream names no channels to decode")
        tokens.validate()
        z = self.quantizer.dequantize_codes(torch.as_tensor(tokens.codes).unsqueeze(0))
        return {name: self.decode(z, self.style_for(name))[0, 0].cpu().numpy() for name in members}

    def run_single_channel_mode(self, window: np.ndarray, channel_name: str,
                                depth: int | None = None) -> np.ndarray:
        tokens = self.encode_group({channel_name: window}, depth)
        return self.decode_group(tokens)[channel_name]

    @torch.no_grad()
    def reconstruct_groups(self, data: np.ndarray, names: list[str], groups: list[list[str]],
                           depth: int | None = None) -> np.ndarray:
        """Round-trip data [C, N] group by group; output rows follow ``names``."""
        row = {n: i for i, n in enumerate(names)}
        n = data.shape[-1]
        batch = self.make_batch([{c: data[row[c]] for c in g} for g in groups])
        out = self.forward_group(batch, depth)
        recon = np.zeros((len(names), n), dtype=np.float32)
        for b, g in enumerate(groups):
            for s, c in enumerate(self.canonical_order(g)):
                recon[row[c]] = out.recon[b, s, :n].cpu().numpy()
        return recon

    def reconstruct(self, data, depth: int | None = None, names: list[str] | None = None) -> np.ndarray:
        """Single-channel mode: every row is its own group of one."""
        if names is None:
            raise VocabularyError("the multi-channel model needs channel names to reconstruct")
        return self.reconstruct_groups(np.asarray(data, dtype=np.float32), names, [[n] for n in names], depth)
