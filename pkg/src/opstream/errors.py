"""Exception hierarchy shared across the package."""


class OpstreamError(Exception):
    """Base class for all opstream errors."""


class ParseError(OpstreamError):
    """Raw trace input could not be decoded or tokenized."""


class EmptyCorpusError(OpstreamError):
    """An operation requiring at least one sequence received none."""


class EmptySequenceError(OpstreamError):
    """A scoring operation received a zero-length observation sequence."""


class DimensionError(OpstreamError):
    """Model dimensions must be at least 1 in every axis."""


class OracleSizeError(OpstreamError):
    """Brute-force enumeration was requested beyond its size limits."""


class SymbolRangeError(OpstreamError):
    """An observation symbol falls outside the model alphabet."""


class SubsetExhaustedError(OpstreamError):
    """Not enough sequences to fill the requested disjoint subsets."""


class CapViolationError(OpstreamError):
    """A training subset exceeds the 30% per-member share of the family."""


class UnknownFamilyError(OpstreamError):
    """A family name was referenced that the registry does not contain."""


class StateError(OpstreamError):
    """A streaming operation was called in the wrong state."""


class StratificationError(OpstreamError):
    """A class has too few samples to split into train/validation/test."""


class CorpusLayoutError(OpstreamError):
    """A corpus directory does not follow the family-per-subdirectory layout."""


class RegistryFormatError(OpstreamError):
    """A persisted registry document is malformed or fails validation."""
