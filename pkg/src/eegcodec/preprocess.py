"""Signal conditioning from a raw recording to model-ready windows.

Order is fixed: initial drop, empty-channel removal, resampling, high-pass,
clip/normalise, segmentation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy import signal as sps

from .data_io import ChannelMeta, Recording
from .errors import ConfigError, DataError


@dataclass
class PreprocessConfig:
    target_rate_hz: float = 512.0
    highpass_hz: float = 0.1
    clip_uv: float = 200.0
    window_s: float = 30.0
    drop_initial_s: float = 10.0
    empty_channel_std_uv: float = 0.5

    def __post_init__(self):
        for name in ("target_rate_hz", "highpass_hz", "clip_uv", "window_s", "empty_channel_std_uv"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"preprocess.{name} must be positive")
        if self.drop_initial_s < 0:
            raise ConfigError("preprocess.drop_initial_s must be non-negative")


@dataclass
class Window:
    """A normalised multi-channel segment; values lie in [-1, 1]."""

    data: np.ndarray
    channels: list[ChannelMeta]
    sample_rate_hz: float
    origin: tuple[str, int] = ("", 0)
    label: str | None = None
    meta: dict[str, str] = field(default_factory=dict)

    @property
    def source_channels(self) -> list[str]:
        return [c.name for c in self.channels]

    def to_recording(self) -> Recording:
        meta = dict(self.meta)
        meta.update({"origin_id": self.origin[0], "origin_offset": str(self.origin[1])})
        return Recording(self.channels, self.data, self.sample_rate_hz, self.label, meta)

    @classmethod
    def from_recording(cls, rec: Recording) -> "Window":
        meta = dict(rec.meta)
        origin = (meta.pop("origin_id", meta.get("source", "")), int(meta.pop("origin_offset", 0)))
        return cls(rec.data, list(rec.channels), rec.sample_rate_hz, origin, rec.annotations, meta)


def _rational(f_in: float, f_out: float) -> tuple[int, int]:
    ratio = Fraction(repr(float(f_out))) / Fraction(repr(float(f_in)))
    ratio = ratio.limit_denominator(10_000)
    return ratio.numerator, ratio.denominator


def resample(x: np.ndarray, f_in: float, f_out: float) -> np.ndarray:
    """Band-limited (Kaiser-windowed sinc, polyphase) resampling along the last axis."""
    if not (f_in > 0 and f_out > 0):
        raise ConfigError("sample rates must be positive")
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise DataError("resample input contains non-finite samples")
    if f_in == f_out:
        return x.copy()
    up, down = _rational(f_in, f_out)
    n_out = int(round(x.shape[-1] * f_out / f_in))
    # long Kaiser window keeps passband ripple well under 1e-3
    half_len = 20 * max(up, down)
    taps = sps.firwin(2 * half_len + 1, 1.0 / max(up, down), window=("kaiser", 10.0))
    y = sps.resample_poly(x, up, down, axis=-1, window=taps)
    if y.shape[-1] >= n_out:
        return y[..., :n_out]
    pad = [(0, 0)] * (y.ndim - 1) + [(0, n_out - y.shape[-1])]
    return np.pad(y, pad)


def highpass(x: np.ndarray, cutoff_hz: float, fs: float, order: int = 4) -> np.ndarray:
    """Zero-phase Butterworth high-pass (forward-backward)."""
    if not 0 < cutoff_hz < fs / 2:
        raise ConfigError(f"cutoff {cutoff_hz} Hz must lie in (0, {fs / 2})")
    sos = sps.butter(order, cutoff_hz, btype="highpass", fs=fs, output="sos")
    x = np.asarray(x, dtype=np.float64)
    # long mirror padding (3 cutoff periods) keeps the edge transient out of the interior
    padlen = min(x.shape[-1] - 1, int(3 * fs / cutoff_hz))
    return sps.sosfiltfilt(sos, x, axis=-1, padtype="even", padlen=padlen)


def clip_normalize(x_uv, clip_uv: float = 200.0):
    if not clip_uv > 0:
        raise ConfigError("clip_uv must be positive")
    return np.clip(x_uv, -clip_uv, clip_uv) / clip_uv


def window_count(duration_s: float, cfg: PreprocessConfig) -> int:
    usable = duration_s - cfg.drop_initial_s
    return max(0, int(np.floor(usable / cfg.window_s + 1e-9)))


def preprocess_recording(rec: Recording, cfg: PreprocessConfig | None = None,
                         recording_id: str | None = None) -> list[Window]:
    cfg = cfg or PreprocessConfig()
    if not rec.channels:
        raise DataError("recording has no channels")
    rid = recording_id or rec.meta.get("recording_id") or rec.meta.get("source", "recording")
    start = int(round(cfg.drop_initial_s * rec.sample_rate_hz))
    data = rec.data[:, start:].astype(np.float64)
    if data.shape[1] == 0:
        return []
    keep = [i for i in range(data.shape[0]) if data[i].std() >= cfg.empty_channel_std_uv]
    if not keep:
        return []
    channels = [rec.channels[i] for i in keep]
    data = resample(data[keep], rec.sample_rate_hz, cfg.target_rate_hz)
    fs = cfg.target_rate_hz
    if data.shape[1] > 1:
        data = highpass(data, cfg.highpass_hz, fs)
    data = clip_normalize(data, cfg.clip_uv)

    win = int(round(cfg.window_s * fs))
    n_win = min(window_count(rec.duration_s, cfg), data.shape[1] // win)
    meta = {k: v for k, v in rec.meta.items() if k in ("subject", "recording_id", "source")}
    meta.setdefault("recording_id", rid)
    windows = []
    for k in range(n_win):
        seg = data[:, k * win:(k + 1) * win]
        windows.append(Window(seg.astype(np.float32), list(channels), fs,
                              origin=(rid, start + int(round(k * win * rec.sample_rate_hz / fs))),
                              label=rec.annotations, meta=dict(meta)))
    return windows
