"""Exception hierarchy shared by every stage of the pipeline."""


class RctCbirError(Exception):
    """Base class for all package errors."""


class ImageFormatError(RctCbirError):
    """Unsupported image format or bit depth."""


class DimensionError(RctCbirError):
    """Image or matrix dimensions incompatible with the requested operation."""


class ManifestError(RctCbirError):
    """Malformed dataset manifest or dataset that violates class constraints."""


class ConfigError(RctCbirError):
    """Invalid configuration value."""


class DegenerateSamplesError(RctCbirError):
    """Samples carry no spread (all zero or constant); no GGD can be fitted."""


class IndexFormatError(RctCbirError):
    """Index or model file cannot be parsed."""


class InvariantError(RctCbirError):
    """An object violates a structural invariant (e.g. mixed feature methods)."""


class IncompatibleFeaturesError(RctCbirError):
    """Feature vectors with different methods or layouts were combined."""


class MetricError(RctCbirError):
    """Distance metric not applicable to the feature method."""


class ComparisonError(RctCbirError):
    """Evaluation reports that cannot be compared."""


class UndefinedMeasureError(RctCbirError):
    """A measure was requested over an empty set of predictions."""
