"""Frequency-domain window features for downstream classifiers.

Per channel, in this order:

    rel_delta, rel_theta, rel_alpha, rel_beta, rel_gamma,
    spectral_entropy, line_length, variance

Relative powers are band power over the summed power of the five bands
(Welch PSD, 4 s Hann segments, 50% overlap).  Spectral entropy is the
Shannon entropy (nats) of the normalised PSD over all Welch bins.  Line
length is the mean absolute first difference.

A recording's vector concatenates, for each channel in sorted-name order,
the per-feature mean over its windows followed by the per-feature std.
"""

from __future__ import annotations

import numpy as np
from scipy.signal import welch

from ..errors import DataError

BANDS = {
    "delta": (0.5, 4.0),
    "theta": (4.0, 8.0),
    "alpha": (8.0, 13.0),
    "beta": (13.0, 30.0),
    "gamma": (30.0, 70.0),
}
FEATURE_NAMES = [f"rel_{b}" for b in BANDS] + ["spectral_entropy", "line_length", "variance"]


def welch_psd(x: np.ndarray, fs: float):
    nper = min(int(round(4 * fs)), x.shape[-1])
    return welch(x, fs=fs, window="hann", nperseg=nper, noverlap=nper // 2, axis=-1)


def channel_features(x: np.ndarray, fs: float) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    f, psd = welch_psd(x, fs)
    band = np.array([psd[(f >= lo) & (f < hi)].sum() for lo, hi in BANDS.values()])
    rel = band / band.sum() if band.sum() > 0 else np.zeros(len(BANDS))
    total = psd.sum()
    if total > 0:
        p = psd / total
        p = p[p > 0]
        entropy = float(-(p * np.log(p)).sum())
    else:
        entropy = 0.0
    line_length = float(np.abs(np.diff(x)).mean()) if x.size > 1 else 0.0
    return np.concatenate([rel, [entropy, line_length, float(x.var())]])


def extract_features(data: np.ndarray, names: list[str], fs: float) -> dict[str, np.ndarray]:
    """Features of one window [C, N], keyed by channel name."""
    data = np.asarray(data)
    if data.ndim != 2 or data.shape[0] != len(names):
        raise DataError(f"window of shape {data.shape} does not match {len(names)} channel names")
    return {name: channel_features(data[i], fs) for i, name in enumerate(names)}


def recording_vector(windows) -> np.ndarray:
    """Mean and std over a recording's windows (``Window``-like objects)."""
    if not windows:
        raise DataError("recording has no windows")
    names = sorted(windows[0].source_channels)
    per = []
    for w in windows:
        if sorted(w.source_channels) != names:
            raise DataError("channel set differs between windows of one recording")
        feats = extract_features(w.data, w.source_channels, w.sample_rate_hz)
        per.append(np.stack([feats[n] for n in names]))
    per = np.stack(per)  # [W, C, F]
    return np.concatenate([per.mean(0), per.std(0)], axis=1).reshape(-1)
