"""Exception types shared across the package."""


class ProtomilError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(ProtomilError):
    """Tensor shapes are inconsistent with each other or with the corpus."""


class ConfigError(ProtomilError):
    """A configuration value violates its contract."""


class ManifestError(ProtomilError):
    """Corpus manifest is malformed, inconsistent, or has duplicate ids."""


class BagFormatError(ProtomilError):
    """A bag file has a bad magic/header, is truncated, or holds non-finite values."""


class DegeneratePrototypeError(ProtomilError):
    """Prototype vector has zero norm; cosine similarities are undefined."""


class InsufficientInstancesError(ProtomilError):
    """A bag has fewer instances than the requested partition needs."""


class TrainingDivergenceError(ProtomilError):
    """A training step produced a non-finite loss."""


class UndefinedMetricError(ProtomilError):
    """Metric is undefined for the given inputs (e.g. single-class AUC)."""


class TooFewBagsError(ProtomilError):
    """Corpus is too small to build the requested cross-validation splits."""
