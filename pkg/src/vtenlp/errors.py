"""Exception types shared across the package."""


class VtenlpError(Exception):
    """Base class for all package errors."""


class CorpusParseError(VtenlpError):
    """A corpus file line could not be parsed."""

    def __init__(self, line_number, message):
        self.line_number = line_number
        super().__init__(f"line {line_number}: {message}")


class ValidationError(VtenlpError):
    """An input value violates a documented invariant."""


class StratificationError(VtenlpError):
    """A class is too small to split stratified."""


class AugmentationError(VtenlpError):
    """Augmentation cannot proceed (e.g. empty minority class)."""


class EmbeddingLookupError(VtenlpError):
    """A precomputed embedding entry is missing for a report id."""


class EmbeddingFormatError(VtenlpError):
    """An embedding file is malformed or has inconsistent dimensions."""


class RulesetLoadError(VtenlpError):
    """A ruleset file could not be parsed or compiled."""


class ShapeError(VtenlpError):
    """Tensor shapes do not match the model specification."""


class TrainingError(VtenlpError):
    """Training diverged or could not complete."""

    def __init__(self, epoch, message):
        self.epoch = epoch
        super().__init__(f"epoch {epoch}: {message}")


class SelectionError(VtenlpError):
    """No candidate survived the selection sweep."""


class RocUndefinedError(VtenlpError):
    """ROC is undefined because the truths contain a single class."""


class ConfigError(VtenlpError):
    """A run configuration is invalid."""


class PipelineError(VtenlpError):
    """A pipeline stage failed; carries the stage name."""

    def __init__(self, stage, message):
        self.stage = stage
        super().__init__(f"stage '{stage}': {message}")
