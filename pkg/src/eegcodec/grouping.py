"""Channel partitions for joint multi-channel coding.

Random layouts grow each group around a uniformly chosen pivot: the group
size is a clipped, rounded-up exponential draw and the remaining members
are drawn without replacement with probability proportional to
exp(-chord_distance / tau).  Manual layouts are fixed anatomical tables.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .montage import canonical_label

log = logging.getLogger(__name__)

MAX_GROUP_SIZE = 5

MANUAL_LAYOUTS = {
    "epilepsy": [
        ["F3", "F4", "F7", "F8"],
        ["FP1", "FP2", "P3", "P4"],
        ["T3", "T4", "T5", "T6"],
        ["C3", "C4", "CZ"],
        ["O1", "O2"],
    ],
    "tuab": [
        ["EEG 26-REF", "EEG 27-REF", "EEG 28-REF", "EEG 29-REF"],
        ["EEG 30-REF", "EEG 31-REF", "EEG 32-REF"],
        ["EEG C3-REF", "EEG C3P-REF", "EEG C4-REF", "EEG C4P-REF", "EEG CZ-REF"],
        ["EEG FP1-REF", "EEG F3-REF", "EEG F7-REF", "EEG FZ-REF"],
        ["EEG F4-REF", "EEG FP2-REF", "EEG F8-REF"],
        ["EEG T1-REF", "EEG T2-REF", "EEG T3-REF", "EEG T4-REF", "EEG T5-REF"],
        ["EEG O1-REF", "EEG O2-REF", "EEG OZ-REF", "EEG T6-REF"],
        ["EEG P3-REF", "EEG P4-REF", "EEG PG1-REF", "EEG PG2-REF", "EEG PZ-REF"],
        ["EEG EKG1-REF", "EEG LOC-REF", "EEG ROC-REF"],
        ["EEG A1-REF", "EEG A2-REF", "EEG SP1-REF", "EEG SP2-REF"],
    ],
}
# the abnormal-detection benchmark runs on TUAB recordings
MANUAL_LAYOUTS["abnormal"] = MANUAL_LAYOUTS["tuab"]


@dataclass
class SamplerParams:
    lam: float = 3.0
    tau: float = 1.0
    seed: int | None = None

    def __post_init__(self):
        if not (self.lam > 0 and self.tau > 0):
            raise ConfigError("lambda and tau must be positive")


@dataclass
class GroupLayout:
    groups: list[list[str]]
    provenance: str = "manual"
    max_size: int = MAX_GROUP_SIZE

    def __post_init__(self):
        seen = set()
        for g in self.groups:
            if not 1 <= len(g) <= self.max_size:
                raise ConfigError(f"group {g} has size outside [1, {self.max_size}]")
            for name in g:
                if name in seen:
                    raise ConfigError(f"channel {name!r} appears in more than one group")
                seen.add(name)

    @property
    def channels(self) -> list[str]:
        return [c for g in self.groups for c in g]

    def to_text(self) -> str:
        return "\n".join(",".join(g) for g in self.groups) + "\n"

    @classmethod
    def from_text(cls, text: str, provenance: str = "manual") -> "GroupLayout":
        groups = [[n.strip() for n in line.split(",")] for line in text.splitlines() if line.strip()]
        return cls(groups, provenance)

    def save(self, path) -> None:
        Path(path).write_text(self.to_text())


def sample_group_size(params: SamplerParams, remaining: int, rng) -> int:
    """min(5, max(1, ceil(X))) with X ~ Exp(lam), capped at ``remaining``."""
    if remaining < 1:
        raise ConfigError("no channels remain to group")
    x = rng.exponential(1.0 / params.lam)
    s = min(MAX_GROUP_SIZE, max(1, math.ceil(x)))
    return min(s, remaining)


def chord_distances(pivot: np.ndarray, candidates: np.ndarray) -> np.ndarray:
    return np.linalg.norm(np.asarray(candidates, dtype=np.float64) - np.asarray(pivot, dtype=np.float64), axis=-1)


def neighbor_distribution(pivot: np.ndarray, candidates, tau: float = 1.0) -> np.ndarray:
    """pi(c | p) proportional to exp(-||x_p - x_c|| / tau) over the candidate positions."""
    cand = np.asarray(candidates, dtype=np.float64).reshape(-1, 3)
    if cand.shape[0] == 0:
        return np.zeros(0)
    d = chord_distances(pivot, cand)
    logits = -d / tau
    w = np.exp(logits - logits.max())
    return w / w.sum()


def _draw(probs: np.ndarray, rng) -> int:
    """Inverse-CDF draw from a categorical distribution using one uniform."""
    cdf = np.cumsum(probs)
    u = rng.random() * cdf[-1]
    return min(int(np.searchsorted(cdf, u, side="right")), probs.size - 1)


def sample_neighbors(pivot: np.ndarray, candidates: np.ndarray, k: int, tau: float, rng) -> list[int]:
    """k distinct candidate indices, drawn sequentially with renormalised proximity weights."""
    cand = np.asarray(candidates, dtype=np.float64).reshape(-1, 3)
    k = min(k, cand.shape[0])
    left = list(range(cand.shape[0]))
    picked = []
    for _ in range(k):
        probs = neighbor_distribution(pivot, cand[left], tau)
        picked.append(left.pop(_draw(probs, rng)))
    return picked


def sample_random_layout(channels, params: SamplerParams | None = None, rng=None) -> GroupLayout:
    """Random proximity groups over ``channels`` (ChannelMeta-like: name, position).

    Channels without a scalp position cannot take part in distance sampling;
    they are appended as trailing groups of up to five in recording order.
    """
    params = params or SamplerParams()
    if rng is None:
        rng = np.random.default_rng(params.seed)
    channels = list(channels)
    if not channels:
        raise ConfigError("cannot group an empty channel list")
    placed = [c for c in channels if c.position is not None]
    loose = [c.name for c in channels if c.position is None]
    if loose:
        log.debug("channels without positions grouped by order: %s", loose)
    pool = list(range(len(placed)))
    groups = []
    while pool:
        s = sample_group_size(params, len(pool), rng)
        pivot = pool.pop(int(rng.integers(len(pool))))
        group = [pivot]
        if s > 1:
            cand = np.stack([placed[i].position for i in pool])
            picks = sample_neighbors(placed[pivot].position, cand, s - 1, params.tau, rng)
            chosen = [pool[j] for j in picks]
            group += chosen
            pool = [i for i in pool if i not in chosen]
        groups.append([placed[i].name for i in group])
    for i in range(0, len(loose), MAX_GROUP_SIZE):
        groups.append(loose[i:i + MAX_GROUP_SIZE])
    return GroupLayout(groups, provenance=f"random(seed={params.seed})")


def manual_layout(task: str) -> GroupLayout:
    if task not in MANUAL_LAYOUTS:
        raise ConfigError(f"no manual layout for task {task!r}; choose from {sorted(MANUAL_LAYOUTS)}")
    return GroupLayout([list(g) for g in MANUAL_LAYOUTS[task]], provenance=f"manual({task})")


def apply_layout(layout: GroupLayout, channel_names: list[str]) -> GroupLayout:
    """Restrict a layout to the channels a recording actually has.

    Names match exactly or through their canonical 10-20 label.  Recording
    channels the layout does not mention form trailing groups of up to five.
    """
    by_label = {}
    for name in channel_names:
        by_label.setdefault(canonical_label(name), name)
    used, groups = set(), []
    for g in layout.groups:
        members = []
        for name in g:
            hit = name if name in channel_names else by_label.get(canonical_label(name))
            if hit is not None and hit not in used:
                members.append(hit)
                used.add(hit)
        if members:
            groups.append(members)
    rest = [n for n in channel_names if n not in used]
    for i in range(0, len(rest), MAX_GROUP_SIZE):
        groups.append(rest[i:i + MAX_GROUP_SIZE])
    return GroupLayout(groups, layout.provenance)


def singleton_layout(channel_names: list[str]) -> GroupLayout:
    return GroupLayout([[n] for n in channel_names], provenance="single")
