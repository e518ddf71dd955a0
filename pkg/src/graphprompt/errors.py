"""Exception hierarchy shared across the toolkit."""


class GraphPromptError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(GraphPromptError):
    """An input violates a documented precondition or invariant."""


class SchemaError(GraphPromptError):
    """A dataset file disagrees with its declared metadata."""


class CheckpointError(GraphPromptError):
    """A checkpoint file is corrupt or carries wrong magic/checksum."""


class UnsupportedVersionError(CheckpointError):
    """A checkpoint was written by an incompatible format version."""


class NumericError(GraphPromptError):
    """A computation produced NaN/Inf or cannot be evaluated numerically."""


class ContractError(GraphPromptError):
    """An operation was called in a state its contract forbids."""


class ConfigError(GraphPromptError):
    """An experiment configuration is malformed or inconsistent."""


class UndefinedMetricError(GraphPromptError):
    """A metric is undefined for the given inputs (e.g. single-class AUC)."""


class DomainTransferError(GraphPromptError):
    """Source and target domains are incompatible (e.g. feature widths)."""
