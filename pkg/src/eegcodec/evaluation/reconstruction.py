"""Held-out reconstruction loss and configuration sweeps."""

from __future__ import annotations

import copy
from pathlib import Path

import numpy as np
import torch

from ..checkpoint import load_model
from ..errors import ConfigError
from ..grouping import SamplerParams, apply_layout, manual_layout, sample_random_layout
from ..losses import spectrogram_loss
from ..multichannel import MultiChannelCodec
from ..preprocess import Window, resample
from ..rvq import merge_stack_vocabulary, prune_depth
from .bitrate import BitrateSpec, bitrate

MODES = ("sc", "sc-mc", "random-groups", "manual-groups")


class IdentityCodec:
    """Stand-in codec that returns its input; useful for harness checks."""

    def reconstruct(self, data, depth=None, names=None):
        return np.array(data, dtype=np.float32, copy=True)

    def reconstruct_groups(self, data, names, groups, depth=None):
        return np.array(data, dtype=np.float32, copy=True)


def reconstruct_window(model, window: Window, mode: str = "sc", depth: int | None = None,
                       task: str = "epilepsy", seed: int = 0) -> np.ndarray:
    """Reconstruct every channel of a window under one evaluation mode."""
    if mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}")
    names = window.source_channels
    if mode == "sc":
        if isinstance(model, MultiChannelCodec):
            raise ConfigError("mode 'sc' needs a single-channel model; use 'sc-mc' for a multi-channel one")
        return model.reconstruct(window.data, depth)
    if mode == "sc-mc":
        groups = [[n] for n in names]
    elif mode == "random-groups":
        rng = np.random.default_rng(seed)
        groups = sample_random_layout(window.channels, SamplerParams(seed=seed), rng).groups
    else:
        groups = apply_layout(manual_layout(task), names).groups
    if not hasattr(model, "reconstruct_groups"):
        raise ConfigError(f"mode {mode!r} needs a multi-channel model")
    return model.reconstruct_groups(window.data, names, groups, depth)


@torch.no_grad()
def eval_reconstruction(model, windows: list[Window], mode: str = "sc", depth: int | None = None,
                        task: str = "epilepsy", seed: int = 0) -> float:
    """Mean spectrogram loss over held-out windows, averaged per channel first."""
    if not windows:
        raise ConfigError("evaluation set is empty")
    per_window = []
    for i, w in enumerate(windows):
        recon = reconstruct_window(model, w, mode, depth, task, seed + i)
        per_window.append(np.mean([float(spectrogram_loss(w.data[c], recon[c]))
                                   for c in range(w.data.shape[0])]))
    return float(np.mean(per_window))


def pruning_sweep(model, windows: list[Window], mode: str = "post", min_depth: int = 3,
                  checkpoints: dict[int, str] | None = None, eval_mode: str = "sc",
                  task: str = "epilepsy") -> list[tuple[int, float]]:
    """Loss for k = depth .. min_depth codebooks.

    ``post`` truncates the trained stack at inference; ``pre`` loads a model
    trained with k codebooks from ``checkpoints[k]``.
    """
    depth = model.quantizer.active_depth
    if depth < min_depth:
        raise ConfigError(f"model depth {depth} is below the sweep floor {min_depth}")
    curve = []
    for k in range(depth, min_depth - 1, -1):
        if mode == "post":
            m = copy.deepcopy(model)
            m.quantizer = prune_depth(m.quantizer, k, "post")
        elif mode == "pre":
            path = (checkpoints or {}).get(k)
            if path is None or not Path(path).exists():
                raise ConfigError(f"no checkpoint trained with {k} codebooks (needed for pre-pruning sweep)")
            m = load_model(path)
        else:
            raise ConfigError("pruning mode must be 'pre' or 'post'")
        curve.append((k, eval_reconstruction(m, windows, eval_mode, task=task)))
    return curve


def vocab_sweep(model, windows: list[Window], targets: list[int], eval_mode: str = "sc",
                finetune=None, task: str = "epilepsy") -> list[tuple[int, float, float]]:
    """(vocab, loss, bits/s) after merging every codebook to each target size.

    ``finetune``, if given, is called on the merged model before evaluation.
    """
    rows = []
    for v in targets:
        m = copy.deepcopy(model)
        m.quantizer, _ = merge_stack_vocabulary(m.quantizer, v)
        if finetune is not None:
            finetune(m)
        d = m.quantizer.active_depth
        spec = BitrateSpec(d, m.quantizer.vocab_sizes[:d], m.stride_total)
        rows.append((v, eval_reconstruction(m, windows, eval_mode, task=task), bitrate(spec)))
    return rows


def rate_sweep(model, windows: list[Window], rates: list[float], eval_mode: str = "sc",
               task: str = "epilepsy") -> list[tuple[float, float, float]]:
    """(presented rate, loss, bits/s) with the windows resampled to each rate."""
    rows = []
    for r in rates:
        moved = [Window(resample(w.data, w.sample_rate_hz, r).astype(np.float32), w.channels, r, w.origin,
                        w.label, w.meta) for w in windows]
        d = model.quantizer.active_depth
        spec = BitrateSpec(d, model.quantizer.vocab_sizes[:d], model.stride_total, r,
                           windows[0].sample_rate_hz)
        rows.append((float(r), eval_reconstruction(model, moved, eval_mode, task=task), bitrate(spec)))
    return rows
