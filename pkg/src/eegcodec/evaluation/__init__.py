from .benchmark import (BenchmarkResult, LabeledRecording, benchmark_downstream, reconstruct_recordings,
                        results_records, results_table, subject_split, synth_tone_benchmark)
from .bitrate import BitrateSpec, bitrate
from .features import FEATURE_NAMES, channel_features, extract_features, recording_vector
from .plots import emit_plots, overlay_plot
from .reconstruction import (MODES, IdentityCodec, eval_reconstruction, pruning_sweep, rate_sweep,
                             reconstruct_window, vocab_sweep)

__all__ = [
    "BenchmarkResult", "BitrateSpec", "FEATURE_NAMES", "IdentityCodec", "LabeledRecording", "MODES",
    "benchmark_downstream", "bitrate", "channel_features", "emit_plots", "eval_reconstruction",
    "extract_features", "overlay_plot", "pruning_sweep", "rate_sweep", "reconstruct_recordings",
    "reconstruct_window", "recording_vector", "results_records", "results_table", "subject_split",
    "synth_tone_benchmark", "vocab_sweep",
]
