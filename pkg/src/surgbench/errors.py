"""Exception hierarchy shared across the harness."""


class SurgbenchError(Exception):
    """Base class for all harness errors."""


class DomainError(SurgbenchError):
    """Input violates a domain invariant (bad dimensions, empty pools, ...)."""


class MaskFormatError(SurgbenchError):
    """Bytes could not be decoded as the expected image/mask format."""


class CorruptRleError(SurgbenchError):
    """RLE counts are inconsistent with the declared mask size."""


class DimensionMismatchError(DomainError):
    """Two masks (or a mask and its image) disagree in size."""


class ManifestError(SurgbenchError):
    """Manifest file failed to parse or violates its invariants."""


class InfeasibleSplitError(SurgbenchError):
    """Fewer patients than nonzero split buckets."""


class EmptyPoolError(DomainError):
    """Prompt sampling was asked to draw from an empty mask."""


class PredictionFailure(SurgbenchError):
    """A single example could not be predicted; recorded, not fatal."""

    def __init__(self, reason: str, message: str = ""):
        self.reason = reason
        super().__init__(message or reason)


class ProtocolViolationError(SurgbenchError):
    """Predictor response broke the wire contract."""


class TransportError(SurgbenchError):
    """Request could not be completed after bounded retries."""


class EmptyAggregateError(SurgbenchError):
    """No classes left to aggregate after filtering."""


class InvalidRunError(SurgbenchError):
    """Run exceeded the failure-rate threshold and must not be reported."""


class ConfigError(SurgbenchError):
    """Run configuration file is missing or malformed."""
