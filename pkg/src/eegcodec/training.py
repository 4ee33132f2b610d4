"""Composite-loss training for the single- and multi-channel codecs.

total = w_wave * waveform + w_mstft * multiscale_stft + w_spec * spectrogram
        + w_adv * gen_adv + w_feat * feature_match
        + w_commit * commitment + w_codebook * codebook

The waveform weight falls linearly from ``waveform_start`` to
``waveform_end`` over the first ``anneal_fraction`` of the steps.
Adversarial terms are active in phase 1 only; phase 2 starts after
``phase1_fraction`` of the steps, or earlier if the generator adversarial
loss stays above ``watchdog_factor`` times its trailing median for
``watchdog_patience`` consecutive steps.
"""

from __future__ import annotations

import copy
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from .checkpoint import load_pretrained, save_model
from .codec import Codec
from .data_io import ChannelMeta, synth_audio
from .discriminator import MultiResolutionDiscriminator, adversarial_losses
from .errors import ConfigError, TrainingError
from .grouping import (SamplerParams, apply_layout, manual_layout, sample_random_layout,
                       singleton_layout)
from .losses import multiscale_stft_loss, spectrogram_loss, waveform_loss
from .multichannel import MultiChannelCodec
from .preprocess import Window

log = logging.getLogger(__name__)

REGIMES = ("scratch", "finetune", "frozen")
LOSS_KEYS = ("waveform", "mstft", "spec", "adv", "feat", "commit", "codebook")


@dataclass
class LossWeights:
    waveform_start: float = 10.0
    waveform_end: float = 1.0
    mstft: float = 1.0
    spec: float = 1.0
    adv: float = 0.25
    feat: float = 2.0
    commit: float = 0.25
    codebook: float = 1.0

    def __post_init__(self):
        if any(v < 0 for v in asdict(self).values()):
            raise ConfigError("loss weights must be non-negative")


@dataclass
class TrainConfig:
    lr: float = 1e-5
    betas: tuple[float, float] = (0.8, 0.999)
    batch_size: int = 8
    total_steps: int = 1000
    crop_samples: int = 4096
    phase1_fraction: float = 0.5
    anneal_fraction: float = 0.2
    regime: str = "finetune"
    init_checkpoint: str = ""
    seed: int = 0
    grouping: str = "random"  # multi-channel only: random | manual | single
    task: str = "epilepsy"  # manual layout table for grouping=manual
    checkpoint_every: int = 0
    dead_code_steps: int = 200
    watchdog_factor: float = 100.0
    watchdog_patience: int = 50
    watchdog_window: int = 100
    disc_width: int = 16

    def __post_init__(self):
        self.betas = tuple(float(b) for b in self.betas)
        if not self.lr > 0:
            raise ConfigError("lr must be positive")
        if not 0.0 <= self.phase1_fraction <= 1.0 or not 0.0 <= self.anneal_fraction <= 1.0:
            raise ConfigError("phase1_fraction and anneal_fraction must lie in [0, 1]")
        if self.regime not in REGIMES:
            raise ConfigError(f"regime must be one of {REGIMES}")
        if self.grouping not in ("random", "manual", "single"):
            raise ConfigError("grouping must be random, manual or single")
        if self.batch_size < 1 or self.total_steps < 0 or self.crop_samples < 1:
            raise ConfigError("batch_size, total_steps and crop_samples must be positive")


def waveform_weight(step: int, cfg: TrainConfig, weights: LossWeights) -> float:
    end = cfg.anneal_fraction * cfg.total_steps
    if end <= 0 or step >= end:
        return weights.waveform_end
    frac = step / end
    return weights.waveform_start + (weights.waveform_end - weights.waveform_start) * frac


def step_weights(step: int, phase: int, cfg: TrainConfig, weights: LossWeights) -> dict[str, float]:
    return {
        "waveform": waveform_weight(step, cfg, weights),
        "mstft": weights.mstft,
        "spec": weights.spec,
        "adv": weights.adv if phase == 1 else 0.0,
        "feat": weights.feat if phase == 1 else 0.0,
        "commit": weights.commit,
        "codebook": weights.codebook,
    }


def codebook_entropy(codes: torch.Tensor, vocab_sizes: list[int]) -> float:
    """Mean over books of the entropy (bits) of the batch code histogram."""
    ent = []
    for i in range(codes.shape[1]):
        counts = torch.bincount(codes[:, i].reshape(-1), minlength=vocab_sizes[i]).double()
        p = counts[counts > 0] / counts.sum()
        ent.append(float(-(p * torch.log2(p)).sum()))
    return float(np.mean(ent))


# ------------------------------------------------------------------ batches

class BatchSampler:
    """Deterministic random crops from a list of windows.

    Single-channel batches are [B, 1, crop]; multi-channel batches are one
    channel group per item, re-drawn from a fresh layout every step.
    """

    def __init__(self, windows: list[Window], cfg: TrainConfig, model: Codec):
        if not windows:
            raise ConfigError("training needs at least one window")
        self.windows = windows
        self.cfg = cfg
        self.model = model
        self.rng = np.random.default_rng(cfg.seed)
        self.crop = min(cfg.crop_samples, min(w.data.shape[1] for w in windows))
        self.crop -= self.crop % model.stride_total
        if self.crop < model.stride_total:
            raise ConfigError("windows are shorter than one stride window")
        self.count = 0

    def _crop(self, w: Window):
        start = int(self.rng.integers(0, w.data.shape[1] - self.crop + 1))
        return w.data[:, start:start + self.crop]

    def next(self):
        self.count += 1
        B = self.cfg.batch_size
        if not isinstance(self.model, MultiChannelCodec):
            rows = []
            for _ in range(B):
                w = self.windows[int(self.rng.integers(len(self.windows)))]
                seg = self._crop(w)
                rows.append(seg[int(self.rng.integers(seg.shape[0]))])
            return torch.as_tensor(np.stack(rows)).unsqueeze(1)
        groups = []
        for _ in range(B):
            w = self.windows[int(self.rng.integers(len(self.windows)))]
            seg = self._crop(w)
            names = w.source_channels
            if self.cfg.grouping == "random":
                layout = sample_random_layout(w.channels, SamplerParams(seed=None), rng=self.rng)
            elif self.cfg.grouping == "manual":
                layout = apply_layout(manual_layout(self.cfg.task), names)
            else:
                layout = singleton_layout(names)
            group = layout.groups[int(self.rng.integers(len(layout.groups)))]
            groups.append({c: seg[names.index(c)] for c in group})
        return self.model.make_batch(groups)


# ------------------------------------------------------------------ training

@dataclass
class TrainResult:
    model: Codec
    metrics: list[dict] = field(default_factory=list)
    events: list[str] = field(default_factory=list)
    checkpoint: str | None = None
    load_report: object = None


def _forward(model: Codec, batch, dropout: bool, gen: torch.Generator):
    """Run one batch; returns (target rows, reconstruction rows, rvq output)."""
    if isinstance(model, MultiChannelCodec):
        out = model.forward_group(batch, dropout=dropout, generator=gen)
        flat = batch.mask.reshape(-1)
        n = batch.x.shape[-1]
        x = batch.x.reshape(-1, n)[flat]
        y = out.recon.reshape(-1, out.recon.shape[-1])[flat][:, :n]
        return x, y, out.rvq, out.fused
    out = model(batch, dropout=dropout, generator=gen)
    n = batch.shape[-1]
    return batch[:, 0], out.recon[:, 0, :n], out.rvq, out.latents


def _reseed_dead_codes(model: Codec, latents: torch.Tensor, rvq_out, patience: int, rng) -> int:
    quant = model.quantizer
    r = latents.detach().transpose(1, 2).reshape(-1, quant.hidden_dim)
    n_reseeded = 0
    with torch.no_grad():
        for i, book in enumerate(quant.books[:len(rvq_out.chosen)]):
            book.record_usage(rvq_out.codes[:, i])
            dead = torch.nonzero(book.steps_unused >= patience).flatten()
            if dead.numel():
                e = book.in_proj(r)
                pick = torch.as_tensor(rng.integers(0, e.shape[0], dead.numel()))
                book.vectors[dead] = e[pick]
                book.steps_unused[dead] = 0
                n_reseeded += dead.numel()
            r = r - rvq_out.chosen[i].detach().transpose(1, 2).reshape(-1, quant.hidden_dim)
    return n_reseeded


def format_metrics(m: dict) -> str:
    parts = []
    for k, v in m.items():
        parts.append(f"{k}={v!r}" if isinstance(v, float) else f"{k}={v}")
    return "\t".join(parts)


def parse_metrics_line(line: str) -> dict:
    out = {}
    for part in line.rstrip("\n").split("\t"):
        k, _, v = part.partition("=")
        try:
            out[k] = int(v)
        except ValueError:
            try:
                out[k] = float(v)
            except ValueError:
                out[k] = v
    return out


def train(dataset: list[Window], model: Codec, cfg: TrainConfig, weights: LossWeights | None = None,
          log_path=None, checkpoint_path=None, checkpoint_dir=None) -> TrainResult:
    weights = weights or LossWeights()
    torch.manual_seed(cfg.seed)
    gen = torch.Generator().manual_seed(cfg.seed)
    rng = np.random.default_rng(cfg.seed + 1)
    result = TrainResult(model)

    if cfg.regime in ("finetune", "frozen") and cfg.init_checkpoint:
        result.load_report = load_pretrained(cfg.init_checkpoint, model)
    elif cfg.regime == "finetune":
        raise ConfigError("regime 'finetune' needs train.init_checkpoint")

    sampler = BatchSampler(dataset, cfg, model)
    frozen = cfg.regime == "frozen"
    disc = MultiResolutionDiscriminator(width=cfg.disc_width).to(next(model.parameters()).dtype)
    opt = torch.optim.Adam([p for p in model.parameters() if p.requires_grad], lr=cfg.lr, betas=cfg.betas)
    disc_opt = torch.optim.Adam(disc.parameters(), lr=cfg.lr, betas=cfg.betas)

    phase = 1 if cfg.phase1_fraction > 0 else 2
    phase1_end = cfg.phase1_fraction * cfg.total_steps
    adv_history: list[float] = []
    over = 0
    log_fh = open(log_path, "a") if log_path else None
    try:
        for step in range(cfg.total_steps):
            batch = sampler.next()
            if step == 0 and cfg.regime == "scratch":
                with torch.no_grad():
                    x0 = batch.x if isinstance(model, MultiChannelCodec) else batch
                    z0 = (model.encode_group_tensor(batch) if isinstance(model, MultiChannelCodec)
                          else model.encode(x0))
                    model.quantizer.init_from_latents(z0, generator=gen)
            if phase == 1 and step >= phase1_end:
                phase = 2
                result.events.append(f"step {step}: phase 2 (scheduled)")
            w = step_weights(step, phase, cfg, weights)

            model.train(not frozen)
            with torch.set_grad_enabled(not frozen):
                x, y, q, latents = _forward(model, batch, dropout=not frozen, gen=gen)
                comp = {
                    "waveform": waveform_loss(x, y),
                    "mstft": multiscale_stft_loss(x, y),
                    "spec": spectrogram_loss(x, y),
                    "commit": q.commit_loss,
                    "codebook": q.codebook_loss,
                }
                if phase == 1:
                    comp["adv"], comp["feat"], disc_loss = adversarial_losses(x, y, disc, phase)
                else:
                    comp["adv"] = comp["feat"] = x.new_zeros(())
                    disc_loss = None
                total = sum(w[k] * comp[k] for k in LOSS_KEYS)
            if not torch.isfinite(total):
                raise TrainingError(
                    f"non-finite loss at step {step} (batch id {sampler.count - 1}): "
                    + ", ".join(f"{k}={float(v.detach()):.4g}" for k, v in comp.items()))
            if not frozen:
                opt.zero_grad(set_to_none=True)
                total.backward()
                if disc_loss is not None:
                    disc_opt.zero_grad(set_to_none=True)
                    disc_loss.backward()
                    disc_opt.step()
                opt.step()
                _reseed_dead_codes(model, latents, q, cfg.dead_code_steps, rng)

            vals = {k: float(comp[k].detach()) for k in LOSS_KEYS}
            rec = {"step": step, "phase": phase, "total": float(total.detach())}
            rec.update(vals)
            rec.update({f"w_{k}": float(w[k]) for k in LOSS_KEYS})
            rec["disc"] = float(disc_loss.detach()) if disc_loss is not None else 0.0
            rec["entropy"] = codebook_entropy(q.codes, model.quantizer.vocab_sizes)
            result.metrics.append(rec)
            if log_fh:
                log_fh.write(format_metrics(rec) + "\n")

            if phase == 1:
                med = float(np.median(adv_history[-cfg.watchdog_window:])) if adv_history else math.inf
                over = over + 1 if vals["adv"] > cfg.watchdog_factor * med else 0
                adv_history.append(vals["adv"])
                if over >= cfg.watchdog_patience:
                    phase = 2
                    result.events.append(f"step {step}: phase 2 (adversarial divergence)")
                    log.warning("adversarial loss diverged at step %d; dropping GAN terms", step)
            if checkpoint_dir and cfg.checkpoint_every and (step + 1) % cfg.checkpoint_every == 0:
                save_model(model, Path(checkpoint_dir) / f"step_{step + 1:06d}.ckpt",
                           extra=_prefixed(disc), info={"step": step + 1})
    finally:
        if log_fh:
            log_fh.close()
    model.eval()
    if checkpoint_path:
        save_model(model, checkpoint_path, extra=_prefixed(disc), info={"steps": cfg.total_steps,
                                                                          "regime": cfg.regime})
        result.checkpoint = str(checkpoint_path)
    return result


def audio_windows(duration_s: float, seed: int, window_s: float = 1.0,
                  sample_rate_hz: float = 44100.0) -> list[Window]:
    """Surrogate audio corpus cut into single-channel windows for pretraining."""
    x = synth_audio(duration_s, seed, sample_rate_hz).astype(np.float32)
    n = int(window_s * sample_rate_hz)
    return [Window(x[None, i:i + n], [ChannelMeta("AUDIO", None)], sample_rate_hz,
                   (f"audio{seed}", i), meta={"source": "synth_audio"})
            for i in range(0, x.size - n + 1, n)]


def _prefixed(disc) -> dict[str, torch.Tensor]:
    return {f"disc.{k}": v for k, v in disc.state_dict().items()}


def clone_model(model: Codec) -> Codec:
    return copy.deepcopy(model)
