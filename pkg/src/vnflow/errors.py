"""Exception hierarchy for the block-model operator toolkit."""


class VnFlowError(Exception):
    """Base class for every error raised by this package."""


class ModelError(VnFlowError):
    """Structural mismatch between operands and the block model."""


class SchemaError(VnFlowError):
    """Malformed input document in the serialization layer."""


class PreconditionError(VnFlowError):
    """A mathematical precondition of an operation is violated."""


class NotInIdealError(PreconditionError):
    """A would-be K-class representative has support outside the ideal blocks."""


class SpectralGapError(PreconditionError):
    """No usable spectral gap around the snapping threshold."""


class PathError(PreconditionError):
    """An operator path fails Fredholm certification."""


class PartitionError(PathError):
    """No partition certifying the quotient projection bound was found."""


class NumericsError(VnFlowError):
    """A numerical procedure did not reach its certified tolerance."""


class ConsistencyError(VnFlowError):
    """Two independent routes to the same quantity disagreed."""
