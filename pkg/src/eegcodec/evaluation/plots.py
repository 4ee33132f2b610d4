"""Figures and a text summary from sweep and benchmark result files.

Expected inputs in ``results_dir`` (all optional, tab-separated with a
header line unless noted):

    depth_sweep.tsv   k, loss[, bits_per_s]
    vocab_sweep.tsv   vocab, loss, bits_per_s
    rate_sweep.tsv    rate_hz, loss, bits_per_s
    overlay.npz       arrays ``original`` and ``reconstruction`` [C, N], scalar ``fs``
    benchmark.tsv     table from :func:`results_table`
"""

from __future__ import annotations

import logging
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .bitrate import BitrateSpec, bitrate  # noqa: E402

log = logging.getLogger(__name__)

INPUTS = ("depth_sweep.tsv", "vocab_sweep.tsv", "rate_sweep.tsv", "overlay.npz", "benchmark.tsv")


def write_tsv(path, header: list[str], rows) -> None:
    lines = ["\t".join(header)] + ["\t".join(repr(v) if isinstance(v, float) else str(v) for v in r)
                                   for r in rows]
    Path(path).write_text("\n".join(lines) + "\n")


def read_tsv(path) -> tuple[list[str], list[list[str]]]:
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
    return lines[0].split("\t"), [ln.split("\t") for ln in lines[1:]]


def overlay_plot(original: np.ndarray, recon: np.ndarray, fs: float, path, channels=None) -> float:
    """Overlay traces per channel; returns (and annotates) the max pointwise gap."""
    original, recon = np.atleast_2d(original), np.atleast_2d(recon)
    n = min(original.shape[-1], recon.shape[-1])
    gap = float(np.abs(original[:, :n] - recon[:, :n]).max()) if n else 0.0
    c = original.shape[0]
    fig, axes = plt.subplots(c, 1, figsize=(9, 1.8 * c + 0.6), squeeze=False, sharex=True)
    t = np.arange(n) / fs
    for i, ax in enumerate(axes[:, 0]):
        ax.plot(t, original[i, :n], lw=0.7, label="original")
        ax.plot(t, recon[i, :n], lw=0.7, alpha=0.8, label="reconstruction")
        ax.set_ylabel(channels[i] if channels else f"ch{i}")
    axes[0, 0].legend(loc="upper right", fontsize=7)
    axes[0, 0].set_title(f"max |gap| = {gap:.4g}")
    axes[-1, 0].set_xlabel("time (s)")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return gap


def _curve(path_in, path_out):
    _, rows = read_tsv(path_in)
    k = [int(r[0]) for r in rows]
    loss = [float(r[1]) for r in rows]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(k, loss, "o-")
    ax.set_xlabel("codebooks kept")
    ax.set_ylabel("spectrogram loss")
    ax.invert_xaxis()
    fig.tight_layout()
    fig.savefig(path_out)
    plt.close(fig)
    return rows


def _bars(vocab_rows, rate_rows, path_out):
    panels = [(t, rows) for t, rows in (("vocabulary", vocab_rows), ("rate (Hz)", rate_rows)) if rows]
    fig, axes = plt.subplots(1, len(panels), figsize=(5 * len(panels), 3.5), squeeze=False)
    for ax, (title, rows) in zip(axes[0], panels):
        labels = [r[0] for r in rows]
        ax.bar(labels, [float(r[1]) for r in rows])
        for i, r in enumerate(rows):
            ax.annotate(f"{float(r[2]):g} b/s", (i, float(r[1])), ha="center", va="bottom", fontsize=7)
        ax.set_xlabel(title)
        ax.set_ylabel("spectrogram loss")
    fig.tight_layout()
    fig.savefig(path_out)
    plt.close(fig)


def emit_plots(results_dir, spec: BitrateSpec | None = None) -> tuple[list[Path], list[str]]:
    """Render whatever inputs exist; returns (files written, absent inputs)."""
    d = Path(results_dir)
    spec = spec or BitrateSpec()
    missing = [name for name in INPUTS if not (d / name).exists()]
    written: list[Path] = []
    summary = ["# reconstruction summary"]

    if (d / "depth_sweep.tsv").exists():
        rows = _curve(d / "depth_sweep.tsv", d / "depth_curve.png")
        written.append(d / "depth_curve.png")
        summary.append("k\tloss\tbits_per_s")
        for r in rows:
            k = int(r[0])
            bits = float(r[2]) if len(r) > 2 else bitrate(spec.pruned(k))
            summary.append(f"{k}\t{float(r[1]):.6f}\t{bits:g}")
    vocab_rows = read_tsv(d / "vocab_sweep.tsv")[1] if (d / "vocab_sweep.tsv").exists() else []
    rate_rows = read_tsv(d / "rate_sweep.tsv")[1] if (d / "rate_sweep.tsv").exists() else []
    if vocab_rows or rate_rows:
        _bars(vocab_rows, rate_rows, d / "rate_vocab.png")
        written.append(d / "rate_vocab.png")
        for title, rows in (("vocab", vocab_rows), ("rate_hz", rate_rows)):
            if rows:
                summary.append(f"{title}\tloss\tbits_per_s")
                summary += [f"{r[0]}\t{float(r[1]):.6f}\t{float(r[2]):g}" for r in rows]
    if (d / "overlay.npz").exists():
        z = np.load(d / "overlay.npz", allow_pickle=False)
        chans = [str(c) for c in z["channels"]] if "channels" in z.files else None
        gap = overlay_plot(z["original"], z["reconstruction"], float(z["fs"]), d / "overlay.png", chans)
        written.append(d / "overlay.png")
        summary.append(f"overlay_max_gap\t{gap:.6g}")
    if (d / "benchmark.tsv").exists():
        summary.append("")
        summary.append((d / "benchmark.tsv").read_text().rstrip("\n"))
    if missing:
        summary.append("")
        summary.append("absent inputs: " + ", ".join(missing))
        log.warning("absent plot inputs: %s", ", ".join(missing))
    (d / "summary.txt").write_text("\n".join(summary) + "\n")
    written.append(d / "summary.txt")
    return written, missing
