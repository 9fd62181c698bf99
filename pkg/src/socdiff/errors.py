class ConfigError(ValueError):
    """Invalid configuration or input file."""


class UsageError(RuntimeError):
    """An object was used out of order, e.g. stepping a finished episode."""


class TrainingDiverged(RuntimeError):
    """A non-finite loss appeared during training."""

    def __init__(self, message: str, dump_path=None):
        super().__init__(message)
        self.dump_path = dump_path


class ChecksumMismatch(RuntimeError):
    """A snapshot file no longer matches its manifest checksum."""
