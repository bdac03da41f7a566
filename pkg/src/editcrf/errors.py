"""Exception types shared across the package."""


class EditCrfError(Exception):
    """Base class for all errors raised by this package."""


class ModelFormatError(EditCrfError):
    """A model document failed to parse or validate."""


class DataFormatError(EditCrfError):
    """A records, pairs, or scores file failed to parse."""


class DegenerateInputError(EditCrfError):
    """Both strings of a pair are empty; no non-empty alignment exists."""


class NoPathError(EditCrfError):
    """No complete alignment reaches an accepting node (e.g. under a
    narrow beam, or with an operation set that cannot consume the input)."""


class NumericalError(EditCrfError):
    """A non-finite objective or gradient was encountered during training."""
