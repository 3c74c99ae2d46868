"""Exception types shared across the package."""


class TreeAttribError(Exception):
    """Base class for all errors raised by this library."""


class DatasetError(TreeAttribError):
    """A dataset file cannot be parsed or violates the dataset contract."""


class ModelValidationError(TreeAttribError):
    """A model document or in-memory ensemble is structurally invalid."""


class TrainingError(TreeAttribError):
    """Training preconditions are violated."""


class SplitError(TrainingError):
    """A stratified train/test split cannot be formed."""


class UnsupportedModelError(TreeAttribError):
    """An operation needs training metadata that the model does not carry."""


class OracleSizeError(TreeAttribError):
    """The exact Shapley oracle would enumerate too many subsets."""


class StudyError(TreeAttribError):
    """A benchmark study cannot produce a trustworthy result."""
