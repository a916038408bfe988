"""Exception types distinguishing data, model and usage failures."""


class DataFormatError(Exception):
    """A dataset file could not be parsed (names the offending row/column)."""


class ModelFormatError(Exception):
    """A model file is not in the expected container format or version."""


class CorruptModelError(ModelFormatError):
    """A model file is truncated or fails its integrity check."""
