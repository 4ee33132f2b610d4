"""Exception hierarchy shared by every eegcodec module.

Each class carries a short ``category`` string; the CLI prints it as the
machine-parseable prefix of its one-line error message.
"""


class EEGCodecError(Exception):
    category = "error"


class FormatError(EEGCodecError):
    category = "format"


class CorruptionError(EEGCodecError):
    category = "corruption"


class IngestionError(EEGCodecError):
    category = "ingestion"


class DataError(EEGCodecError):
    category = "data"


class ShapeError(EEGCodecError, ValueError):
    category = "shape"


class ConfigError(EEGCodecError, ValueError):
    category = "config"


class VocabularyError(EEGCodecError, KeyError):
    category = "vocabulary"

    def __str__(self):  # KeyError would otherwise repr() the message
        return str(self.args[0]) if self.args else ""


class IncompatibleCheckpointError(EEGCodecError):
    category = "checkpoint"


class ContractError(EEGCodecError, RuntimeError):
    category = "contract"


class TrainingError(EEGCodecError, RuntimeError):
    category = "training"
