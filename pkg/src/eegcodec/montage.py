"""Scalp positions of the 10-20 system on the unit sphere."""

from __future__ import annotations

import re

import numpy as np

# (theta, phi) in degrees, BESA spherical convention: theta is the angle from
# the vertex (negative on the left hemisphere), phi the azimuth from the T4 axis.
_SPHERICAL_1020 = {
    "FP1": (-92, -72), "FPZ": (92, 90), "FP2": (92, 72),
    "F7": (-92, -36), "F3": (-60, -51), "FZ": (45, 90), "F4": (60, 51), "F8": (92, 36),
    "T3": (-92, 0), "C3": (-46, 0), "CZ": (0, 0), "C4": (46, 0), "T4": (92, 0),
    "T5": (-92, 36), "P3": (-60, 51), "PZ": (45, -90), "P4": (60, -51), "T6": (92, -36),
    "O1": (-92, 72), "OZ": (92, -90), "O2": (92, -72),
    "A1": (-120, 0), "A2": (120, 0),
}

# modern (10-10) names for the same four temporal sites
ALIASES = {"T7": "T3", "T8": "T4", "P7": "T5", "P8": "T6"}

# the 19 scalp sites of the classic montage, in conventional order
STANDARD_19 = [
    "FP1", "FP2", "F7", "F3", "FZ", "F4", "F8", "T3", "C3", "CZ",
    "C4", "T4", "T5", "P3", "PZ", "P4", "T6", "O1", "O2",
]


def _to_cartesian(theta_deg: float, phi_deg: float) -> np.ndarray:
    theta, phi = np.deg2rad(theta_deg), np.deg2rad(phi_deg)
    v = np.array([np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)])
    return v / np.linalg.norm(v)


POSITIONS_1020 = {name: _to_cartesian(*tp) for name, tp in _SPHERICAL_1020.items()}

_PREFIX = re.compile(r"^(EEG|EKG|ECG|EOG)\s+", re.IGNORECASE)
_SUFFIX = re.compile(r"-(REF|LE|AR|AVG)$", re.IGNORECASE)


def canonical_label(name: str) -> str:
    """Reduce a dataset label such as ``"EEG FP1-REF"`` to ``"FP1"``."""
    label = _SUFFIX.sub("", _PREFIX.sub("", name.strip())).strip().upper()
    return ALIASES.get(label, label)


def position_for(name: str) -> np.ndarray | None:
    """Unit-sphere position for a channel label, or None for non-scalp channels."""
    if re.match(r"^(EKG|ECG)", name.strip(), re.IGNORECASE):
        return None
    pos = POSITIONS_1020.get(canonical_label(name))
    return None if pos is None else pos.copy()
