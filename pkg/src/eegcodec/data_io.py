"""Signal containers, EDF ingestion and synthetic signal generators.

The EEGC container is a small self-describing binary format::

    b"EEGC" | version u16 | header length u32 | UTF-8 key=value header | float32 LE samples

Samples are stored channel-major.  Round trips are bit-exact because the
in-memory payload is float32 as well.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CorruptionError, FormatError, IngestionError
from .montage import STANDARD_19, position_for

log = logging.getLogger(__name__)

CONTAINER_MAGIC = b"EEGC"
CONTAINER_VERSION = 1
_PREAMBLE = struct.Struct("<4sHI")


@dataclass
class ChannelMeta:
    name: str
    position: np.ndarray | None = None

    def __post_init__(self):
        if self.position is not None:
            self.position = np.asarray(self.position, dtype=np.float64).reshape(3)

    def __eq__(self, other):
        if not isinstance(other, ChannelMeta) or self.name != other.name:
            return False
        if self.position is None or other.position is None:
            return self.position is None and other.position is None
        return bool(np.array_equal(self.position, other.position))


@dataclass
class Recording:
    channels: list[ChannelMeta]
    data: np.ndarray
    sample_rate_hz: float
    annotations: str | None = None
    meta: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        self.data = np.ascontiguousarray(np.asarray(self.data, dtype=np.float32))
        if self.data.ndim != 2:
            raise ValueError(f"data must be 2-D [channels x samples], got shape {self.data.shape}")
        if self.data.shape[0] != len(self.channels):
            raise ValueError(f"{len(self.channels)} channel entries for {self.data.shape[0]} data rows")
        if not self.sample_rate_hz > 0:
            raise ValueError("sample_rate_hz must be positive")
        names = [c.name for c in self.channels]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate channel names: {names}")

    @property
    def channel_names(self) -> list[str]:
        return [c.name for c in self.channels]

    @property
    def n_samples(self) -> int:
        return self.data.shape[1]

    @property
    def duration_s(self) -> float:
        return self.n_samples / self.sample_rate_hz


# ---------------------------------------------------------------- container

def _check_value(text: str, what: str) -> str:
    if "\n" in text or "\r" in text:
        raise FormatError(f"{what} may not contain line breaks: {text!r}")
    return text


def save_container(rec: Recording, path) -> None:
    lines = [
        f"sample_rate_hz={rec.sample_rate_hz!r}",
        f"n_channels={len(rec.channels)}",
        f"n_samples={rec.n_samples}",
    ]
    if rec.annotations is not None:
        lines.append(f"label={_check_value(rec.annotations, 'label')}")
    for i, ch in enumerate(rec.channels):
        lines.append(f"channel.{i}.name={_check_value(ch.name, 'channel name')}")
        pos = "none" if ch.position is None else ",".join(repr(float(v)) for v in ch.position)
        lines.append(f"channel.{i}.position={pos}")
    for key, value in sorted(rec.meta.items()):
        lines.append(f"meta.{_check_value(key, 'meta key')}={_check_value(str(value), 'meta value')}")
    header = "\n".join(lines).encode("utf-8")
    payload = rec.data.astype("<f4", copy=False).tobytes(order="C")
    with open(path, "wb") as fh:
        fh.write(_PREAMBLE.pack(CONTAINER_MAGIC, CONTAINER_VERSION, len(header)))
        fh.write(header)
        fh.write(payload)


def _parse_header(text: str) -> dict[str, str]:
    fields = {}
    for n, line in enumerate(text.split("\n")):
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key:
            raise FormatError(f"malformed header line {n}: {line!r}")
        fields[key] = value
    return fields


def load_container(path) -> Recording:
    raw = Path(path).read_bytes()
    if len(raw) < _PREAMBLE.size:
        raise FormatError(f"{path}: file too short for an EEGC preamble")
    magic, version, hlen = _PREAMBLE.unpack_from(raw)
    if magic != CONTAINER_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {CONTAINER_MAGIC!r}")
    if version != CONTAINER_VERSION:
        raise FormatError(f"{path}: unsupported container version {version}")
    if _PREAMBLE.size + hlen > len(raw):
        raise FormatError(f"{path}: header length {hlen} exceeds file size")
    try:
        fields = _parse_header(raw[_PREAMBLE.size:_PREAMBLE.size + hlen].decode("utf-8"))
        rate = float(fields["sample_rate_hz"])
        n_ch = int(fields["n_channels"])
        n_samp = int(fields["n_samples"])
        channels = []
        for i in range(n_ch):
            pos = fields[f"channel.{i}.position"]
            channels.append(ChannelMeta(
                fields[f"channel.{i}.name"],
                None if pos == "none" else np.array([float(v) for v in pos.split(",")]),
            ))
    except (KeyError, ValueError, UnicodeDecodeError) as exc:
        raise FormatError(f"{path}: malformed header ({exc})") from exc
    payload = raw[_PREAMBLE.size + hlen:]
    if len(payload) != n_ch * n_samp * 4:
        raise CorruptionError(
            f"{path}: payload holds {len(payload)} bytes, header promises "
            f"{n_ch} channels x {n_samp} samples x 4 bytes")
    data = np.frombuffer(payload, dtype="<f4").reshape(n_ch, n_samp).astype(np.float32)
    meta = {k[5:]: v for k, v in fields.items() if k.startswith("meta.")}
    return Recording(channels, data, rate, fields.get("label"), meta)


# ---------------------------------------------------------------------- EDF

_EDF_MAIN = [("version", 8), ("patient", 80), ("recording", 80), ("startdate", 8),
             ("starttime", 8), ("header_bytes", 8), ("reserved", 44),
             ("n_records", 8), ("record_duration", 8), ("n_signals", 4)]
_EDF_SIGNAL = [("label", 16), ("transducer", 80), ("physical_dimension", 8),
               ("physical_min", 8), ("physical_max", 8), ("digital_min", 8),
               ("digital_max", 8), ("prefiltering", 80), ("samples_per_record", 8),
               ("reserved", 32)]
_UNIT_TO_UV = {"uv": 1.0, "µv": 1.0, "μv": 1.0, "mv": 1e3, "v": 1e6, "nv": 1e-3}


def _edf_number(text: str, field_name: str, kind=float):
    try:
        return kind(text.strip())
    except ValueError:
        raise IngestionError(f"invalid EDF header field '{field_name}': {text.strip()!r}") from None


def ingest_edf(path) -> Recording:
    """Read an EDF/EDF+ file into a Recording in microvolts.

    Labels are kept verbatim; 10-20 positions are attached when the label
    reduces to a known scalp site.  Signals sampled at a different rate than
    the majority are resampled onto it.  EDF+ annotation signals are dropped.
    """
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise IngestionError(f"cannot read {path}: {exc}") from exc
    if len(raw) < 256:
        raise IngestionError("invalid EDF header field 'version': file shorter than 256 bytes")
    head, off = {}, 0
    for name, width in _EDF_MAIN:
        head[name] = raw[off:off + width].decode("ascii", errors="replace")
        off += width
    if head["version"].strip() != "0":
        raise IngestionError(f"invalid EDF header field 'version': {head['version'].strip()!r}")
    ns = _edf_number(head["n_signals"], "n_signals", int)
    header_bytes = _edf_number(head["header_bytes"], "header_bytes", int)
    duration = _edf_number(head["record_duration"], "record_duration")
    n_records = _edf_number(head["n_records"], "n_records", int)
    if ns <= 0:
        raise IngestionError(f"invalid EDF header field 'n_signals': {ns}")
    if header_bytes != 256 * (ns + 1) or len(raw) < header_bytes:
        raise IngestionError(f"invalid EDF header field 'header_bytes': {header_bytes}")
    if duration <= 0:
        raise IngestionError(f"invalid EDF header field 'record_duration': {duration}")

    sig = {name: [] for name, _ in _EDF_SIGNAL}
    for name, width in _EDF_SIGNAL:
        for _ in range(ns):
            sig[name].append(raw[off:off + width].decode("ascii", errors="replace"))
            off += width
    spr = [_edf_number(s, "samples_per_record", int) for s in sig["samples_per_record"]]
    record_len = sum(spr)
    body = np.frombuffer(raw, dtype="<i2", offset=header_bytes,
                         count=(len(raw) - header_bytes) // 2)
    if n_records < 0:
        n_records = body.size // record_len
    if body.size < n_records * record_len:
        raise IngestionError(
            f"invalid EDF header field 'n_records': {n_records} records need "
            f"{n_records * record_len * 2} data bytes, file has {body.size * 2}")
    records = body[:n_records * record_len].reshape(n_records, record_len)

    names, rows, rates = [], [], []
    start = 0
    for i in range(ns):
        label = sig["label"][i].strip()
        cols = slice(start, start + spr[i])
        start += spr[i]
        if label.upper().startswith("EDF ANNOTATIONS"):
            continue
        pmin = _edf_number(sig["physical_min"][i], "physical_min")
        pmax = _edf_number(sig["physical_max"][i], "physical_max")
        dmin = _edf_number(sig["digital_min"][i], "digital_min")
        dmax = _edf_number(sig["digital_max"][i], "digital_max")
        if dmax == dmin:
            raise IngestionError(f"invalid EDF header field 'digital_max': equals digital_min for {label!r}")
        unit = sig["physical_dimension"][i].strip().lower()
        scale_uv = _UNIT_TO_UV.get(unit, 1.0)
        if unit not in _UNIT_TO_UV:
            log.warning("channel %r has unknown unit %r, keeping raw physical values", label, unit)
        digital = records[:, cols].reshape(-1).astype(np.float64)
        gain = (pmax - pmin) / (dmax - dmin)
        rows.append(((digital - dmin) * gain + pmin) * scale_uv)
        names.append(label)
        rates.append(spr[i] / duration)
    if not rows:
        raise IngestionError("invalid EDF header field 'label': no data signals in file")

    rates_arr = np.array(rates)
    values, counts = np.unique(rates_arr, return_counts=True)
    target = float(values[np.argmax(counts)])
    if np.any(rates_arr != target):
        from .preprocess import resample
        rows = [r if rate == target else resample(r, rate, target) for r, rate in zip(rows, rates)]
        n = min(len(r) for r in rows)
        rows = [r[:n] for r in rows]
    channels = [ChannelMeta(n, position_for(n)) for n in names]
    return Recording(channels, np.stack(rows), target, meta={"source": Path(path).name})


# --------------------------------------------------------------- synthetic

EEG_BANDS = {"delta": (0.5, 4.0), "theta": (4.0, 8.0), "alpha": (8.0, 13.0), "beta": (13.0, 30.0)}
_BAND_GAIN = {"delta": 1.0, "theta": 0.6, "alpha": 0.8, "beta": 0.25}


def synthetic_channel_names(n_channels: int) -> list[str]:
    pool = STANDARD_19 + ["A1", "A2"]
    return [pool[i] if i < len(pool) else f"SYN{i}" for i in range(n_channels)]


def _pink_noise(rng: np.random.Generator, n: int) -> np.ndarray:
    spec = rng.standard_normal(n // 2 + 1) + 1j * rng.standard_normal(n // 2 + 1)
    f = np.arange(n // 2 + 1, dtype=np.float64)
    f[0] = 1.0
    spec /= np.sqrt(f)
    spec[0] = 0.0
    x = np.fft.irfft(spec, n)
    return x / (x.std() + 1e-12)


def _rhythms(rng: np.random.Generator, t: np.ndarray, fs: float, per_band: int = 2) -> np.ndarray:
    x = np.zeros_like(t)
    for band, (lo, hi) in EEG_BANDS.items():
        hi = min(hi, 0.45 * fs)
        if lo >= hi:
            continue
        for _ in range(per_band):
            f = rng.uniform(lo, hi)
            am = 1.0 + 0.5 * np.sin(2 * np.pi * rng.uniform(0.05, 0.5) * t + rng.uniform(0, 2 * np.pi))
            x += _BAND_GAIN[band] * rng.uniform(0.5, 1.0) * am * np.sin(
                2 * np.pi * f * t + rng.uniform(0, 2 * np.pi))
    return x / (x.std() + 1e-12)


def _component(rng, t, fs) -> np.ndarray:
    x = 0.85 * _rhythms(rng, t, fs) + 0.5 * _pink_noise(rng, t.size)
    return x / x.std()


def synth_eeg(n_channels: int, duration_s: float, sample_rate_hz: float, seed: int,
              peak_uv: float = 190.0) -> Recording:
    """Deterministic EEG-like recording in microvolts.

    Every channel mixes a shared component with its own rhythms and 1/f
    noise, so channel pairs are correlated but not redundant.
    """
    if n_channels <= 0 or duration_s <= 0 or sample_rate_hz <= 0:
        raise ValueError("n_channels, duration_s and sample_rate_hz must be positive")
    rng = np.random.default_rng(seed)
    n = int(round(duration_s * sample_rate_hz))
    t = np.arange(n) / sample_rate_hz
    common = _component(rng, t, sample_rate_hz)
    rows = []
    for _ in range(n_channels):
        share = rng.uniform(0.35, 0.65)
        x = np.sqrt(share) * common + np.sqrt(1 - share) * _component(rng, t, sample_rate_hz)
        x *= rng.uniform(20.0, 40.0) / x.std()
        peak = np.abs(x).max()
        if peak > peak_uv:
            x *= peak_uv / peak
        rows.append(x)
    names = synthetic_channel_names(n_channels)
    return Recording([ChannelMeta(nm, position_for(nm)) for nm in names], np.stack(rows),
                     float(sample_rate_hz), meta={"source": f"synth_eeg(seed={seed})"})


def synth_audio(duration_s: float, seed: int, sample_rate_hz: float = 44100.0) -> np.ndarray:
    """Audio-like mono signal in [-1, 1]: harmonic notes, chirps and noise bursts."""
    rng = np.random.default_rng(seed)
    n = int(round(duration_s * sample_rate_hz))
    out = np.zeros(n)
    pos = 0
    while pos < n:
        seg = int(rng.uniform(0.05, 0.3) * sample_rate_hz)
        t = np.arange(seg) / sample_rate_hz
        kind = rng.integers(3)
        if kind == 0:
            f0 = np.exp(rng.uniform(np.log(60), np.log(2000)))
            x = sum(rng.uniform(0.2, 1.0) / h * np.sin(2 * np.pi * f0 * h * t + rng.uniform(0, 6.3))
                    for h in range(1, 6) if f0 * h < 0.45 * sample_rate_hz)
        elif kind == 1:
            f_a, f_b = np.exp(rng.uniform(np.log(50), np.log(3000), size=2))
            x = np.sin(2 * np.pi * (f_a * t + 0.5 * (f_b - f_a) / t[-1] * t ** 2))
        else:
            x = _pink_noise(rng, seg) * 0.3
        env = np.minimum(1.0, np.minimum(t, t[-1] - t) * 50.0)
        x = np.asarray(x, dtype=np.float64) * env * rng.uniform(0.2, 1.0)
        end = min(n, pos + seg)
        out[pos:end] += x[:end - pos]
        pos = end
    peak = np.abs(out).max()
    return out * (0.95 / peak) if peak > 0 else out
