"""Exception hierarchy shared by all pivotnmt modules.

Each class maps to a distinct CLI exit code (see cli.EXIT_CODES) so that
shell pipelines can dispatch on the failure class.
"""


class PivotNmtError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(PivotNmtError):
    """Invalid configuration: bad bounds, unknown keys, inconsistent sizes."""


class InputError(PivotNmtError):
    """Malformed runtime input: mismatched files, out-of-range ids."""


class ShapeError(PivotNmtError):
    """Tensor arguments with incompatible shapes."""


class VocabError(PivotNmtError):
    """Subword vocabulary learning or loading failed."""


class DecodingError(PivotNmtError):
    """Id sequence cannot be decoded against the given vocabulary."""


class TrainingError(PivotNmtError):
    """Training aborted (divergence, non-finite loss, empty corpus)."""


class CascadeStageError(PivotNmtError):
    """Failure inside one stage of a cascade; carries the stage identity."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
