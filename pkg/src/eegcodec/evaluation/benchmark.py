"""Downstream classification on original versus reconstructed recordings."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from sklearn.ensemble import RandomForestClassifier
from sklearn.tree import DecisionTreeClassifier

from ..data_io import Recording, synth_eeg
from ..errors import ConfigError
from ..preprocess import PreprocessConfig, Window, preprocess_recording
from .features import recording_vector
from .reconstruction import reconstruct_window

TASKS = ("epilepsy", "abnormal")
BENCH_MODES = ("baseline", "sc", "sc-mc", "random-groups", "manual-groups")


@dataclass
class LabeledRecording:
    recording_id: str
    subject: str
    label: int
    windows: list[Window]


@dataclass
class BenchmarkResult:
    task: str
    mode: str
    classifier: str
    accuracy: float
    n_train: int
    n_test: int
    seed: int

    def __post_init__(self):
        if not 0.0 <= self.accuracy <= 1.0:
            raise ValueError("accuracy must lie in [0, 1]")


def classifiers(seed: int) -> dict:
    return {
        "random_forest": RandomForestClassifier(n_estimators=200, random_state=seed, n_jobs=1),
        "decision_tree": DecisionTreeClassifier(max_depth=8, random_state=seed),
    }


def subject_split(recordings: list[LabeledRecording], test_fraction: float, seed: int):
    """Split recording ids so that no subject lands on both sides.

    Subjects are shuffled within their majority label, so both sides keep
    both classes whenever each class has at least two subjects.
    """
    rng = np.random.default_rng(seed)
    by_subject: dict[str, list[LabeledRecording]] = {}
    for r in recordings:
        by_subject.setdefault(r.subject, []).append(r)
    strata: dict[int, list[str]] = {}
    for s in sorted(by_subject):
        labels = [r.label for r in by_subject[s]]
        strata.setdefault(max(set(labels), key=labels.count), []).append(s)
    test_subjects = set()
    for label in sorted(strata):
        subj = strata[label]
        order = rng.permutation(len(subj))
        n_test = max(1, math.ceil(test_fraction * len(subj))) if len(subj) > 1 else 0
        test_subjects.update(subj[i] for i in order[:n_test])
    train = [r.recording_id for r in recordings if r.subject not in test_subjects]
    test = [r.recording_id for r in recordings if r.subject in test_subjects]
    return train, test


def _check_classes(labels, side):
    if len(set(labels)) < 2:
        raise ConfigError(f"{side} split holds a single class; cannot benchmark")


def benchmark_downstream(original: list[LabeledRecording], reconstructed: dict[str, list[LabeledRecording]],
                         task: str = "epilepsy", seed: int = 0, test_fraction: float = 0.5,
                         permute_labels: bool = False) -> list[BenchmarkResult]:
    """Accuracy per (mode, classifier); the baseline runs on ``original``."""
    if task not in TASKS:
        raise ConfigError(f"task must be one of {TASKS}")
    labels = {r.recording_id: r.label for r in original}
    if permute_labels:
        ids = list(labels)
        shuffled = np.random.default_rng(seed + 1).permutation([labels[i] for i in ids])
        labels = dict(zip(ids, (int(v) for v in shuffled)))
    train_ids, test_ids = subject_split(original, test_fraction, seed)
    y_train = np.array([labels[i] for i in train_ids])
    y_test = np.array([labels[i] for i in test_ids])
    _check_classes(y_train, "train")
    _check_classes(y_test, "test")

    sets = {"baseline": original, **reconstructed}
    results = []
    for mode, recs in sets.items():
        feats = {r.recording_id: recording_vector(r.windows) for r in recs}
        missing = [i for i in train_ids + test_ids if i not in feats]
        if missing:
            raise ConfigError(f"mode {mode!r} lacks recordings {missing[:3]}")
        X_train = np.stack([feats[i] for i in train_ids])
        X_test = np.stack([feats[i] for i in test_ids])
        for name, clf in classifiers(seed).items():
            clf.fit(X_train, y_train)
            acc = float((clf.predict(X_test) == y_test).mean())
            results.append(BenchmarkResult(task, mode, name, acc, len(train_ids), len(test_ids), seed))
    return results


def reconstruct_recordings(model, recordings: list[LabeledRecording], mode: str, task: str = "epilepsy",
                           seed: int = 0) -> list[LabeledRecording]:
    out = []
    for i, r in enumerate(recordings):
        wins = []
        for j, w in enumerate(r.windows):
            data = reconstruct_window(model, w, mode, task=task, seed=seed + 1000 * i + j)
            wins.append(Window(data.astype(np.float32), w.channels, w.sample_rate_hz, w.origin, w.label, w.meta))
        out.append(LabeledRecording(r.recording_id, r.subject, r.label, wins))
    return out


def synth_tone_benchmark(n_recordings: int = 200, n_channels: int = 4, duration_s: float = 40.0,
                         seed: int = 0, tone_hz: float = 6.0, tone_uv: float = 20.0,
                         native_rate_hz: float = 256.0,
                         prep: PreprocessConfig | None = None) -> list[LabeledRecording]:
    """Balanced binary set: label 1 recordings carry an added sinusoid on every channel."""
    prep = prep or PreprocessConfig()
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n_recordings):
        label = i % 2
        rec = synth_eeg(n_channels, duration_s, native_rate_hz, seed=int(rng.integers(2**31)))
        data = rec.data.astype(np.float64)
        if label:
            t = np.arange(data.shape[1]) / native_rate_hz
            phase = rng.uniform(0, 2 * np.pi, size=(n_channels, 1))
            data = data + tone_uv * np.sin(2 * np.pi * tone_hz * t + phase)
        rid = f"rec{i:04d}"
        rec = Recording(rec.channels, data.astype(np.float32), native_rate_hz, str(label),
                        {"subject": f"s{i:04d}"})
        out.append(LabeledRecording(rid, f"s{i:04d}", label, preprocess_recording(rec, prep, rid)))
    return out


def results_table(results: list[BenchmarkResult]) -> str:
    """Rows per mode, one accuracy column per classifier (tab-separated)."""
    clfs = sorted({r.classifier for r in results})
    modes = [m for m in BENCH_MODES if any(r.mode == m for r in results)]
    modes += sorted({r.mode for r in results} - set(modes))
    lines = ["\t".join(["task", "mode", *clfs])]
    for task in sorted({r.task for r in results}):
        for m in modes:
            acc = {r.classifier: r.accuracy for r in results if r.mode == m and r.task == task}
            if acc:
                lines.append("\t".join([task, m, *(f"{acc[c]:.4f}" if c in acc else "-" for c in clfs)]))
    return "\n".join(lines) + "\n"


def results_records(results: list[BenchmarkResult]) -> str:
    keys = list(asdict(results[0])) if results else []
    rows = ["\t".join(keys)]
    rows += ["\t".join(str(v) for v in asdict(r).values()) for r in results]
    return "\n".join(rows) + "\n"
