"""Exception hierarchy shared across the package."""


class TaonetError(Exception):
    """Base class for all package-specific errors."""


# --- ingest ---------------------------------------------------------------

class MalformedCapture(TaonetError):
    """PCAP file has a bad magic number or a truncated global header."""


class SchemaViolation(TaonetError):
    """A dataset line is missing fields or carries out-of-range values."""

    def __init__(self, message, line_number=None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


class InvalidSpec(TaonetError):
    """Synthetic generator spec is empty or degenerate."""


class InsufficientSamples(TaonetError):
    """A class has fewer samples than the splits it must populate."""


# --- neural core ----------------------------------------------------------

class DimensionMismatch(TaonetError):
    """Operand shapes disagree."""


class EmptyTrainingSet(TaonetError):
    """Training requested on an empty train split."""


class VersionMismatch(TaonetError):
    """Checkpoint format version is not supported."""


class CorruptPayload(TaonetError):
    """Checkpoint payload disagrees with its shapes manifest."""


# --- detector -------------------------------------------------------------

class TooFewSamples(TaonetError):
    """Not enough samples to fit statistics or calibrate."""


class DecompositionFailure(TaonetError):
    """Eigendecomposition did not converge on pathological input."""


class NotFitted(TaonetError):
    """A component is used before fitting or calibration."""


# --- prompts / gateway ----------------------------------------------------

class MissingLabels(TaonetError):
    """The label space lacks the candidates a prompt mode requires."""


class AuthMissing(TaonetError):
    """Remote backend has no credential configured."""


class RateLimited(TaonetError):
    """Remote backend kept rate-limiting after all retries."""


class BackendUnreachable(TaonetError):
    """Remote backend stayed unreachable after all retries."""


class MalformedResponse(TaonetError):
    """Remote backend returned a response we cannot interpret."""


# --- evaluation / pipeline -------------------------------------------------

class LengthMismatch(TaonetError):
    """Gold and predicted label sequences differ in length."""


class EmptyMatrix(TaonetError):
    """Metrics requested on an empty confusion matrix."""


class SingleClassInput(TaonetError):
    """AUROC requested with only one of the two classes present."""


class IoFailure(TaonetError):
    """Report files could not be written."""


class PipelineStageError(TaonetError):
    """A pipeline stage failed; carries the stage name for attribution."""

    def __init__(self, stage, cause):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
