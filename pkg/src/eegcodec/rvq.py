"""Residual vector quantization.

Stage i looks up the nearest code (Euclidean) for the current residual,
subtracts its contribution, and hands the remainder to stage i+1.  Codes
may be factorized: each book projects the hidden-space residual to a small
code space for the lookup and projects the chosen code back.

Gradient contract: the quantizer output carries the *value* of the summed
codes but the *gradient* of the identity with respect to the input
latents.  Codebook vectors and output projections still receive gradients
from downstream losses through the summed codes; input projections and the
encoder are pulled toward the codes by the commitment term.
"""

from __future__ import annotations

import copy
import math
from dataclasses import asdict, dataclass, field

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ConfigError, CorruptionError, ShapeError


@dataclass
class RVQConfig:
    n_books: int = 9
    vocab_sizes: list[int] = field(default_factory=lambda: [1024] * 9)
    code_dim: int = 8
    factorized: bool = True
    quantizer_dropout: float = 0.5

    def __post_init__(self):
        if isinstance(self.vocab_sizes, int):
            self.vocab_sizes = [self.vocab_sizes] * self.n_books
        self.vocab_sizes = [int(v) for v in self.vocab_sizes]
        if len(self.vocab_sizes) == 1 and self.n_books > 1:
            self.vocab_sizes = self.vocab_sizes * self.n_books
        if len(self.vocab_sizes) != self.n_books:
            raise ConfigError(f"{len(self.vocab_sizes)} vocab sizes for {self.n_books} books")
        if self.n_books < 1 or any(v < 2 for v in self.vocab_sizes):
            raise ConfigError("need at least one book and vocabularies of size >= 2")
        if not 0.0 <= self.quantizer_dropout <= 1.0:
            raise ConfigError("quantizer_dropout must lie in [0, 1]")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TokenStream:
    """Integer codes [depth x frames] plus what is needed to decode them."""

    codes: np.ndarray
    vocab_sizes: list[int]
    stride_total: int
    sample_rate_hz: float
    channels: list[str] = field(default_factory=list)
    code_dim: int = 8

    def __post_init__(self):
        self.codes = np.asarray(self.codes, dtype=np.int64)
        if self.codes.ndim != 2:
            raise ShapeError(f"codes must be [depth x frames], got {self.codes.shape}")
        self.vocab_sizes = [int(v) for v in self.vocab_sizes]

    @property
    def depth(self) -> int:
        return self.codes.shape[0]

    @property
    def n_frames(self) -> int:
        return self.codes.shape[1]

    def truncate(self, k: int) -> "TokenStream":
        return TokenStream(self.codes[:k].copy(), self.vocab_sizes[:k], self.stride_total,
                           self.sample_rate_hz, list(self.channels), self.code_dim)

    def validate(self) -> None:
        for i, row in enumerate(self.codes):
            v = self.vocab_sizes[i]
            if row.size and (row.min() < 0 or row.max() >= v):
                raise CorruptionError(f"book {i}: code outside [0, {v})")


@dataclass
class RVQOutput:
    codes: torch.Tensor  # [B, depth, T]
    quantized: torch.Tensor  # [B, H, T]
    commit_loss: torch.Tensor
    codebook_loss: torch.Tensor
    residual: torch.Tensor  # [B, H, T], input minus the summed codes
    chosen: list[torch.Tensor]  # per stage [B, H, T]


class Codebook(nn.Module):
    def __init__(self, hidden_dim: int, vocab_size: int, code_dim: int, factorized: bool = True):
        super().__init__()
        if not factorized:
            code_dim = hidden_dim
        if code_dim > hidden_dim:
            raise ConfigError("code_dim may not exceed hidden_dim")
        self.hidden_dim, self.code_dim, self.factorized = hidden_dim, code_dim, factorized
        self.vectors = nn.Parameter(torch.randn(vocab_size, code_dim))
        if factorized:
            self.in_proj = nn.Linear(hidden_dim, code_dim)
            self.out_proj = nn.Linear(code_dim, hidden_dim)
            # out_proj starts as the transpose of an orthonormal in_proj, so each
            # book begins by quantizing a projection of its residual rather
            # than adding an unrelated vector to it
            with torch.no_grad():
                nn.init.orthogonal_(self.in_proj.weight)
                self.out_proj.weight.copy_(self.in_proj.weight.T)
                self.in_proj.bias.zero_()
                self.out_proj.bias.zero_()
        else:
            self.in_proj = self.out_proj = nn.Identity()
        self.register_buffer("usage_counts", torch.zeros(vocab_size, dtype=torch.long))
        self.register_buffer("steps_unused", torch.zeros(vocab_size, dtype=torch.long))

    @property
    def vocab_size(self) -> int:
        return self.vectors.shape[0]

    def nearest(self, e: torch.Tensor) -> torch.Tensor:
        """Index of the closest vector for every row of e [N, code_dim]; ties go to the lowest index."""
        out = torch.empty(e.shape[0], dtype=torch.long, device=e.device)
        vec = self.vectors.detach()
        for s in range(0, e.shape[0], 2048):
            d = (e[s:s + 2048, None, :] - vec[None]).pow(2).sum(-1)
            out[s:s + 2048] = d.argmin(dim=1)
        return out

    def lookup(self, idx: torch.Tensor) -> torch.Tensor:
        """Hidden-space contribution of codes idx [...] -> [..., hidden_dim]."""
        return self.out_proj(F.embedding(idx, self.vectors))

    def record_usage(self, idx: torch.Tensor) -> None:
        hits = torch.bincount(idx.reshape(-1), minlength=self.vocab_size)
        self.usage_counts += hits
        self.steps_unused = torch.where(hits > 0, torch.zeros_like(self.steps_unused), self.steps_unused + 1)


class ResidualVQ(nn.Module):
    def __init__(self, hidden_dim: int, config: RVQConfig | None = None):
        super().__init__()
        self.config = config or RVQConfig()
        self.hidden_dim = hidden_dim
        self.books = nn.ModuleList(
            Codebook(hidden_dim, v, self.config.code_dim, self.config.factorized)
            for v in self.config.vocab_sizes
        )
        self.active_depth = len(self.books)

    @property
    def depth(self) -> int:
        return len(self.books)

    @property
    def vocab_sizes(self) -> list[int]:
        return [b.vocab_size for b in self.books]

    def _check_depth(self, depth: int | None) -> int:
        depth = self.active_depth if depth is None else depth
        if not 1 <= depth <= len(self.books):
            raise ConfigError(f"depth {depth} outside [1, {len(self.books)}]")
        return depth

    def forward(self, z: torch.Tensor, depth: int | None = None, dropout: bool = False,
                generator: torch.Generator | None = None) -> RVQOutput:
        """Quantize latents z [B, H, T].

        With ``dropout`` each batch item keeps only a random prefix of the
        stages with probability ``quantizer_dropout``, so every prefix of the
        stack learns to decode on its own.

        Gradients pass straight through each hard assignment in code space
        and then through the output projection, so the encoder learns what
        the decoder actually receives.
        """
        depth = self._check_depth(depth)
        zt = z.transpose(1, 2)
        B, T, _ = zt.shape
        keep = torch.full((B,), depth, dtype=torch.long)
        if dropout and self.config.quantizer_dropout > 0:
            use = torch.rand(B, generator=generator) < self.config.quantizer_dropout
            short = torch.randint(1, depth + 1, (B,), generator=generator)
            keep = torch.where(use, short, keep)
        keep = keep.to(z.device)

        r_live = zt
        quantized = torch.zeros_like(zt)
        commit = zt.new_zeros(())
        codebook = zt.new_zeros(())
        codes, chosen_all = [], []
        for i in range(depth):
            book = self.books[i]
            e = book.in_proj(r_live)
            idx = book.nearest(e.detach().reshape(-1, e.shape[-1])).view(B, T)
            code_vec = F.embedding(idx, book.vectors)
            chosen = book.out_proj(e + (code_vec - e).detach())
            mask = (keep > i).to(zt.dtype).view(B, 1, 1)
            denom = mask.sum().clamp_min(1.0) * T * e.shape[-1]
            commit = commit + ((e - code_vec.detach()).pow(2) * mask).sum() / denom
            codebook = codebook + ((code_vec - e.detach()).pow(2) * mask).sum() / denom
            chosen = chosen * mask if dropout else chosen
            quantized = quantized + chosen
            r_live = r_live - chosen
            codes.append(idx)
            chosen_all.append(chosen.transpose(1, 2))
        return RVQOutput(
            codes=torch.stack(codes, dim=1),
            quantized=quantized.transpose(1, 2),
            commit_loss=commit,
            codebook_loss=codebook,
            residual=r_live.detach().transpose(1, 2),
            chosen=chosen_all,
        )

    def dequantize_codes(self, codes: torch.Tensor) -> torch.Tensor:
        """codes [B, depth, T] -> latents [B, H, T] using the first ``depth`` books."""
        if codes.shape[1] > len(self.books):
            raise ShapeError(f"{codes.shape[1]} code rows for a {len(self.books)}-book stack")
        B, D, T = codes.shape
        out = torch.zeros(B, T, self.hidden_dim, dtype=self.books[0].vectors.dtype, device=codes.device)
        for i in range(D):
            book = self.books[i]
            if codes[:, i].numel() and (codes[:, i].min() < 0 or codes[:, i].max() >= book.vocab_size):
                raise CorruptionError(f"book {i}: code outside [0, {book.vocab_size})")
            out = out + book.lookup(codes[:, i])
        return out.transpose(1, 2)

    @torch.no_grad()
    def init_from_latents(self, z: torch.Tensor, generator: torch.Generator | None = None) -> None:
        """Seed every book with random projected residuals drawn from z [B, H, T]."""
        r = z.transpose(1, 2).reshape(-1, self.hidden_dim)
        for book in self.books:
            e = book.in_proj(r)
            pick = torch.randint(0, e.shape[0], (book.vocab_size,), generator=generator)
            book.vectors.copy_(e[pick])
            r = r - book.lookup(book.nearest(e))


# ------------------------------------------------------------ numpy-level API

def _as_batch(latents) -> torch.Tensor:
    frames = latents.frames if hasattr(latents, "frames") else latents
    arr = torch.as_tensor(np.asarray(frames, dtype=np.float32))
    if arr.ndim != 2:
        raise ShapeError(f"latents must be [frames x hidden], got {tuple(arr.shape)}")
    return arr.T.unsqueeze(0)


@torch.no_grad()
def quantize(latents, stack: ResidualVQ, depth: int | None = None, *, stride_total: int = 512,
             sample_rate_hz: float = 512.0, channels: list[str] | None = None):
    """Quantize one latent sequence [frames x hidden].

    Returns (TokenStream, quantized [frames x hidden], commit_loss, codebook_loss).
    """
    if hasattr(latents, "stride_total"):
        stride_total, sample_rate_hz = latents.stride_total, latents.sample_rate_hz
    z = _as_batch(latents).to(stack.books[0].vectors.dtype)
    out = stack(z, depth)
    depth = out.codes.shape[1]
    tokens = TokenStream(out.codes[0].numpy(), stack.vocab_sizes[:depth], stride_total,
                         sample_rate_hz, list(channels or []), stack.config.code_dim)
    # recompute through the decode path so dequantize(tokens) matches bit for bit
    q = stack.dequantize_codes(out.codes)
    return tokens, q[0].T.numpy(), float(out.commit_loss), float(out.codebook_loss)


@torch.no_grad()
def dequantize(tokens: TokenStream, stack: ResidualVQ) -> np.ndarray:
    if tokens.depth > stack.depth:
        raise ShapeError(f"token depth {tokens.depth} exceeds stack depth {stack.depth}")
    for i in range(tokens.depth):
        if tokens.vocab_sizes[i] != stack.books[i].vocab_size:
            raise CorruptionError(f"book {i}: stream vocab {tokens.vocab_sizes[i]} "
                                  f"!= stack vocab {stack.books[i].vocab_size}")
    tokens.validate()
    codes = torch.as_tensor(tokens.codes).unsqueeze(0)
    return stack.dequantize_codes(codes)[0].T.numpy()


def prune_depth(stack: ResidualVQ, k: int, mode: str = "post") -> ResidualVQ:
    """``post``: keep every trained book but decode with the first k.
    ``pre``: a fresh k-book stack (copied from the first k books) to fine-tune."""
    if not 1 <= k <= stack.depth:
        raise ConfigError(f"k={k} outside [1, {stack.depth}]")
    if mode == "post":
        out = copy.deepcopy(stack)
        out.active_depth = k
        return out
    if mode == "pre":
        cfg = RVQConfig(k, stack.vocab_sizes[:k], stack.config.code_dim, stack.config.factorized,
                        stack.config.quantizer_dropout)
        out = ResidualVQ(stack.hidden_dim, cfg)
        for dst, src in zip(out.books, stack.books):
            dst.load_state_dict(src.state_dict())
        return out
    raise ConfigError(f"unknown pruning mode {mode!r}")


def merge_vectors(vectors: np.ndarray, usage: np.ndarray, target: int):
    """Greedy closest-pair merging into usage-weighted centroids.

    Returns (new_vectors, new_usage, remap) where remap[old] = new index.
    Survivors are numbered by their lowest original index; exact distance
    ties resolve to the lexicographically lowest pair.
    """
    vectors = np.asarray(vectors, dtype=np.float64)
    usage = np.asarray(usage, dtype=np.int64)
    V = vectors.shape[0]
    if not 2 <= target < V:
        raise ConfigError(f"target vocabulary {target} must satisfy 2 <= target < {V}")
    vec = vectors.copy()
    use = usage.copy()
    alive = np.ones(V, dtype=bool)
    owner = np.arange(V)  # representative index of each original entry
    dist = ((vec[:, None, :] - vec[None, :, :]) ** 2).sum(-1)
    dist[np.tril_indices(V)] = np.inf
    for _ in range(V - target):
        flat = int(np.argmin(dist))
        i, j = divmod(flat, V)
        total = use[i] + use[j]
        if total > 0:
            vec[i] = (use[i] * vec[i] + use[j] * vec[j]) / total
        else:
            vec[i] = 0.5 * (vec[i] + vec[j])
        use[i] = total
        alive[j] = False
        owner[owner == j] = i
        dist[j, :] = np.inf
        dist[:, j] = np.inf
        d_i = ((vec - vec[i]) ** 2).sum(-1)
        d_i[~alive] = np.inf
        dist[i, i + 1:] = d_i[i + 1:]
        dist[:i, i] = d_i[:i]
    survivors = np.flatnonzero(alive)
    new_index = -np.ones(V, dtype=np.int64)
    new_index[survivors] = np.arange(survivors.size)
    return vec[survivors], use[survivors], new_index[owner]


def merge_vocabulary(codebook: Codebook, target: int):
    """Shrink a codebook to ``target`` entries; returns (codebook', remap)."""
    vec, use, remap = merge_vectors(codebook.vectors.detach().cpu().double().numpy(),
                                     codebook.usage_counts.cpu().numpy(), target)
    out = Codebook(codebook.hidden_dim, target, codebook.code_dim, codebook.factorized)
    if codebook.factorized:
        out.in_proj.load_state_dict(codebook.in_proj.state_dict())
        out.out_proj.load_state_dict(codebook.out_proj.state_dict())
    dtype = codebook.vectors.dtype
    with torch.no_grad():
        out.vectors.copy_(torch.as_tensor(vec, dtype=dtype))
        out.usage_counts.copy_(torch.as_tensor(use))
    return out, remap


def merge_stack_vocabulary(stack: ResidualVQ, target: int):
    """Merge every book of a stack to ``target`` entries; returns (stack', remaps)."""
    out = copy.deepcopy(stack)
    remaps = []
    for i, book in enumerate(stack.books):
        if book.vocab_size <= target:
            remaps.append(np.arange(book.vocab_size))
            continue
        out.books[i], remap = merge_vocabulary(book, target)
        remaps.append(remap)
    out.config = RVQConfig(out.depth, out.vocab_sizes, stack.config.code_dim,
                           stack.config.factorized, stack.config.quantizer_dropout)
    return out, remaps


def bits_per_token(vocab_size: int) -> int:
    return math.ceil(math.log2(vocab_size))
