"""``eegcodec`` command-line entry point.

Exit codes: 0 success, 1 runtime failure, 2 usage error, 3 validation
failure (bad config, malformed or missing inputs).  Failures print one line to stderr: ``error: <category>: <message>``.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np
import torch

from . import __version__
from .bitstream import TokenFile, load_tokens, save_tokens
from .checkpoint import load_model
from .codec import Codec
from .config import RunConfig, load_run_config
from .data_io import Recording, ChannelMeta, ingest_edf, load_container, save_container, synth_eeg
from .errors import EEGCodecError
from .evaluation import (MODES, BitrateSpec, benchmark_downstream, bitrate, eval_reconstruction, emit_plots,
                         pruning_sweep, rate_sweep, reconstruct_recordings, reconstruct_window,
                         results_records, results_table, synth_tone_benchmark, vocab_sweep)
from .evaluation.plots import write_tsv
from .grouping import SamplerParams, apply_layout, manual_layout, sample_random_layout
from .montage import position_for
from .multichannel import MultiChannelCodec
from .preprocess import Window, preprocess_recording
from .training import audio_windows, train

log = logging.getLogger("eegcodec")

VALIDATION = {"format", "corruption", "ingestion", "data", "shape", "config", "vocabulary", "checkpoint"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# ---------------------------------------------------------------- helpers

def _windows(paths: list[str]) -> list[Window]:
    files = []
    for p in paths:
        p = Path(p)
        files += sorted(p.glob("*.eegc")) if p.is_dir() else [p]
    if not files:
        raise UsageError("no window files given")
    return [Window.from_recording(load_container(f)) for f in files]


def _new_model(cfg: RunConfig, seed: int):
    # initial weights must depend only on the resolved config
    torch.manual_seed(seed)
    kind = cfg.section("run").model_kind
    codec, rvq = cfg.section("codec"), cfg.section("rvq")
    if kind == "mc":
        return MultiChannelCodec(codec, rvq, cfg.section("mc"))
    if kind != "sc":
        raise UsageError("run.model_kind must be sc or mc")
    return Codec(codec, rvq)


def _model(args, cfg: RunConfig):
    path = args.model or cfg.section("paths").model
    if not path:
        raise UsageError("a model checkpoint is required (--model)")
    return load_model(path)


def _out(args, cfg: RunConfig) -> Path:
    out = Path(args.out or cfg.section("paths").out)
    out.mkdir(parents=True, exist_ok=True)
    cfg.write_beside(out)
    return out


def _mode(args, cfg):
    mode = args.mode or cfg.section("run").mode
    if mode not in MODES:
        raise UsageError(f"mode must be one of {MODES}")
    return mode


def _groups(model, window: Window, mode: str, task: str, seed: int) -> list[list[str]]:
    names = window.source_channels
    if mode in ("sc", "sc-mc"):
        return [[n] for n in names]
    if mode == "random-groups":
        return sample_random_layout(window.channels, SamplerParams(seed=seed), np.random.default_rng(seed)).groups
    return apply_layout(manual_layout(task), names).groups


# ---------------------------------------------------------------- commands

def cmd_synth(args, cfg):
    out = _out(args, cfg)
    seed = cfg.seed if args.seed is None else args.seed
    for i in range(args.count):
        rec = synth_eeg(args.channels, args.seconds, args.rate, seed=seed + i)
        rec.meta["subject"] = f"synth{seed + i}"
        save_container(rec, out / f"rec{i:03d}.eegc")
    print(f"wrote {args.count} recording(s) to {out}")


def cmd_ingest(args, cfg):
    if args.out and args.out.endswith(".eegc"):
        if len(args.inputs) != 1:
            raise UsageError("a single .eegc output needs exactly one input")
        target = Path(args.out)
        target.parent.mkdir(parents=True, exist_ok=True)
        cfg.write_beside(target.parent)
        save_container(ingest_edf(args.inputs[0]), target)
        print(f"ingested {args.inputs[0]} into {target}")
        return
    out = _out(args, cfg)
    for p in args.inputs:
        save_container(ingest_edf(p), out / (Path(p).stem + ".eegc"))
    print(f"ingested {len(args.inputs)} file(s) into {out}")


def cmd_prep(args, cfg):
    for flag, key in (("rate", "target_rate_hz"), ("hp", "highpass_hz"), ("clip", "clip_uv"),
                      ("window", "window_s")):
        if getattr(args, flag) is not None:
            cfg.set("prep", key, repr(getattr(args, flag)))
    out = _out(args, cfg)
    prep = cfg.section("prep")
    rows, k = [], 0
    for p in args.inputs:
        rec = load_container(p)
        rid = Path(p).stem
        for w in preprocess_recording(rec, prep, rid):
            name = f"w{k}.eegc"
            save_container(w.to_recording(), out / name)
            rows.append([name, rid, w.origin[1], w.meta.get("subject", ""), w.label or "",
                         ",".join(w.source_channels)])
            k += 1
    write_tsv(out / "manifest.tsv", ["file", "recording_id", "offset", "subject", "label", "channels"], rows)
    print(f"wrote {k} window(s) and manifest.tsv to {out}")


def cmd_train(args, cfg):
    if args.regime:
        cfg.set("train", "regime", args.regime)
    if args.init:
        cfg.set("train", "init_checkpoint", args.init)
    out = _out(args, cfg)
    tcfg = cfg.train_config()
    data = audio_windows(args.audio_seconds, tcfg.seed) if args.audio_seconds else _windows(args.inputs)
    model = _new_model(cfg, tcfg.seed)
    result = train(data, model, tcfg, cfg.section("loss"), log_path=out / "metrics.log",
                   checkpoint_path=out / "model.ckpt", checkpoint_dir=out)
    for e in result.events:
        print(e)
    if result.load_report is not None:
        print(result.load_report.summary())
    print(f"checkpoint: {result.checkpoint}")


def cmd_encode(args, cfg):
    model = _model(args, cfg)
    mode = _mode(args, cfg)
    task = cfg.section("run").task
    streams = []
    for w in _windows(args.inputs):
        if isinstance(model, MultiChannelCodec):
            if mode == "sc":
                raise UsageError("mode 'sc' needs a single-channel model")
            for g in _groups(model, w, mode, task, cfg.seed):
                idx = [w.source_channels.index(c) for c in g]
                streams.append(model.encode_group({c: w.data[i] for c, i in zip(g, idx)}, args.depth,
                                                  w.sample_rate_hz))
        else:
            for i, c in enumerate(w.source_channels):
                streams.append(model.compress(w.data[i], args.depth, w.sample_rate_hz, c))
    tf = TokenFile(streams, provenance=mode if isinstance(model, MultiChannelCodec) else "single")
    save_tokens(tf, args.output)
    print(f"wrote {len(streams)} stream(s) to {args.output}")


def cmd_decode(args, cfg):
    model = _model(args, cfg)
    tf = load_tokens(args.input)
    names, rows = [], []
    for s in tf.streams:
        if isinstance(model, MultiChannelCodec):
            dec = model.decode_group(s)
            for c in s.channels:
                names.append(c)
                rows.append(dec[c])
        else:
            names.append(s.channels[0] if s.channels else f"ch{len(names)}")
            rows.append(model.decompress(s))
    rate = tf.streams[0].sample_rate_hz if tf.streams else 512.0
    rec = Recording([ChannelMeta(n, position_for(n)) for n in names], np.stack(rows), rate,
                    meta={"source": Path(args.input).name})
    save_container(rec, args.output)
    print(f"wrote {rec.data.shape[0]} channel(s) x {rec.n_samples} samples to {args.output}")


def cmd_eval(args, cfg):
    model = _model(args, cfg)
    out = _out(args, cfg)
    mode, task = _mode(args, cfg), cfg.section("run").task
    wins = _windows(args.inputs)
    loss = eval_reconstruction(model, wins, mode, args.depth, task, cfg.seed)
    write_tsv(out / "eval.tsv", ["mode", "depth", "n_windows", "spectrogram_loss"],
              [[mode, args.depth or model.quantizer.active_depth, len(wins), loss]])
    w = wins[0]
    recon = reconstruct_window(model, w, mode, args.depth, task, cfg.seed)
    np.savez(out / "overlay.npz", original=w.data, reconstruction=recon, fs=w.sample_rate_hz,
             channels=np.array(w.source_channels))
    print(f"spectrogram_loss={loss!r}")


def cmd_bench(args, cfg):
    out = _out(args, cfg)
    task = args.task or cfg.section("run").task
    recs = synth_tone_benchmark(args.n_recordings, args.channels, seed=cfg.seed, prep=cfg.section("prep"))
    recon = {}
    modes = [m for m in (args.mode or []) if m != "baseline"]
    if modes:
        model = _model(args, cfg)
        for m in modes:
            recon[m] = reconstruct_recordings(model, recs, m, task, cfg.seed)
    results = benchmark_downstream(recs, recon, task, cfg.seed)
    (out / "benchmark.tsv").write_text(results_table(results))
    (out / "benchmark_records.tsv").write_text(results_records(results))
    print(results_table(results), end="")


def cmd_sweep(args, cfg):
    model = _model(args, cfg)
    out = _out(args, cfg)
    mode, task = _mode(args, cfg), cfg.section("run").task
    wins = _windows(args.inputs)
    if args.what == "depth":
        ckpts = {}
        for item in args.pre or []:
            k, _, path = item.partition("=")
            ckpts[int(k)] = path
        curve = pruning_sweep(model, wins, "pre" if ckpts else "post", args.min_depth, ckpts, mode, task)
        spec = BitrateSpec(model.quantizer.active_depth, model.quantizer.vocab_sizes[:model.quantizer.active_depth],
                           model.stride_total)
        write_tsv(out / "depth_sweep.tsv", ["k", "loss", "bits_per_s"],
                  [[k, loss, bitrate(spec.pruned(k))] for k, loss in curve])
    elif args.what == "vocab":
        rows = vocab_sweep(model, wins, args.values or [512, 256, 128], mode, task=task)
        write_tsv(out / "vocab_sweep.tsv", ["vocab", "loss", "bits_per_s"], rows)
    else:
        rows = rate_sweep(model, wins, args.values or [256, 512], mode, task=task)
        write_tsv(out / "rate_sweep.tsv", ["rate_hz", "loss", "bits_per_s"], rows)
    print(f"wrote {args.what}_sweep.tsv to {out}")


def cmd_plot(args, cfg):
    written, missing = emit_plots(args.results, cfg.section("bitrate"))
    for p in written:
        print(p)
    if missing:
        print("absent inputs: " + ", ".join(missing), file=sys.stderr)


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="eegcodec", description="EEG residual-quantization codec toolkit")
    p.add_argument("--version", action="version", version=__version__)
    common = _Parser(add_help=False)
    common.add_argument("--config", help="INI run configuration")
    common.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE")
    common.add_argument("-o", "--out", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", parents=[common], help="write synthetic EEG recordings")
    s.add_argument("--channels", type=int, default=4)
    s.add_argument("--seconds", type=float, default=60.0)
    s.add_argument("--rate", type=float, default=256.0)
    s.add_argument("--count", type=int, default=1)
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("ingest", parents=[common], help="convert EDF files to containers")
    s.add_argument("inputs", nargs="+")
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("prep", parents=[common], help="preprocess recordings into windows")
    s.add_argument("inputs", nargs="+")
    s.add_argument("--rate", type=float, help="target sample rate (Hz)")
    s.add_argument("--hp", type=float, help="high-pass cutoff (Hz)")
    s.add_argument("--clip", type=float, help="clip level (uV)")
    s.add_argument("--window", type=float, help="window length (s)")
    s.set_defaults(func=cmd_prep)

    s = sub.add_parser("train", parents=[common], help="train a codec")
    s.add_argument("inputs", nargs="*")
    s.add_argument("--regime", choices=["scratch", "finetune", "frozen"])
    s.add_argument("--init", help="checkpoint to start from")
    s.add_argument("--audio-seconds", type=float, default=0.0,
                   help="train on this many seconds of surrogate audio instead of windows")
    s.set_defaults(func=cmd_train)

    for name, func, helptext in (("encode", cmd_encode, "windows to a token file"),
                                 ("eval", cmd_eval, "held-out spectrogram loss")):
        s = sub.add_parser(name, parents=[common], help=helptext)
        s.add_argument("inputs", nargs="+")
        s.add_argument("--model")
        s.add_argument("--mode", choices=MODES)
        s.add_argument("--depth", type=int)
        if name == "encode":
            s.add_argument("-t", "--output", required=True, help="token file to write")
        s.set_defaults(func=func)

    s = sub.add_parser("decode", parents=[common], help="token file to a waveform container")
    s.add_argument("input")
    s.add_argument("--model")
    s.add_argument("-w", "--output", required=True, help="container file to write")
    s.set_defaults(func=cmd_decode)

    s = sub.add_parser("bench", parents=[common], help="downstream benchmark on synthetic recordings")
    s.add_argument("--task", choices=["epilepsy", "abnormal"])
    s.add_argument("--mode", action="append", choices=["baseline", *MODES])
    s.add_argument("--model")
    s.add_argument("--n-recordings", type=int, default=200)
    s.add_argument("--channels", type=int, default=4)
    s.set_defaults(func=cmd_bench)

    s = sub.add_parser("sweep", parents=[common], help="depth, vocabulary or rate sweep")
    s.add_argument("inputs", nargs="+")
    s.add_argument("--what", choices=["depth", "vocab", "rate"], required=True)
    s.add_argument("--model")
    s.add_argument("--mode", choices=MODES)
    s.add_argument("--min-depth", type=int, default=3)
    s.add_argument("--values", type=float, nargs="*")
    s.add_argument("--pre", action="append", metavar="K=CHECKPOINT",
                   help="checkpoint trained with K codebooks (pre-pruning sweep)")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("plot", parents=[common], help="render figures from a results directory")
    s.add_argument("results")
    s.set_defaults(func=cmd_plot)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
        torch.set_num_threads(1)
        cfg = load_run_config(args.config, overrides=args.set)
        if getattr(args, "values", None):
            args.values = [int(v) if args.what == "vocab" else v for v in args.values]
        args.func(args, cfg)
        return 0
    except UsageError as exc:
        print(f"error: usage: {exc}", file=sys.stderr)
        return 2
    except EEGCodecError as exc:
        print(f"error: {exc.category}: {exc}", file=sys.stderr)
        return 3 if exc.category in VALIDATION else 1
    except FileNotFoundError as exc:
        print(f"error: io: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:  # noqa: BLE001 - top-level boundary
        print(f"error: runtime: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
