"""Exception types shared across the package."""


class EmobodyError(Exception):
    """Base class for all package errors."""


class ConfigError(EmobodyError):
    """Invalid run configuration or CLI arguments (exit code 1)."""


class NoFaceError(EmobodyError):
    """No usable face landmarks for the requested operation."""


class NoBodyError(EmobodyError):
    """No body/hand keypoint survived the confidence filter."""


class DegenerateFaceError(EmobodyError):
    """Face landmarks exist but cannot form a usable mask polygon."""


class ParseError(EmobodyError):
    """Malformed manifest or landmark file."""

    def __init__(self, path, line_number, message):
        super().__init__(f"{path}:{line_number}: {message}")
        self.path = str(path)
        self.line_number = line_number


class MissingVideoError(EmobodyError):
    """Manifest entry points at a video path that does not exist."""


class InvalidFractionError(EmobodyError):
    """Channel count is not evenly divisible for the requested shift."""


class ShapeMismatchError(EmobodyError):
    """Input tensor shape does not match the model configuration."""


class EmptyListError(EmobodyError):
    """An aggregation was called with no inputs."""


class KindMismatchError(EmobodyError):
    """Logits and probabilities were mixed in one computation."""


class NonFiniteLossError(EmobodyError):
    """Training produced a NaN or infinite loss."""


class DegenerateLabelsError(EmobodyError):
    """A label column contains only one class, so ROC AUC is undefined."""


class InvalidLabelError(EmobodyError):
    """Emotion label index outside the valid 0..7 range."""
