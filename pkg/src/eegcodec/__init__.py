"""Neural residual-quantization codec for EEG: data plumbing, models, training and evaluation."""

__version__ = "0.1.0"
