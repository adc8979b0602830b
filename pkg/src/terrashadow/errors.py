"""Exception hierarchy shared by every terrashadow module."""


class TerrashadowError(Exception):
    """Base class for all library errors."""


class InvalidInputError(TerrashadowError, ValueError):
    """An argument violates an operation's precondition."""


class DatumMismatchError(InvalidInputError):
    """Positions with different vertical datums were combined."""


class OutOfRegionError(TerrashadowError, LookupError):
    """A point query fell outside the terrain grid's region."""


class GridTooLargeError(InvalidInputError):
    """Requested grid would exceed the cell-count limit."""

    def __init__(self, count: int, limit: int):
        super().__init__(f"grid would have {count} cells (limit {limit})")
        self.count = count
        self.limit = limit


class GridFormatError(TerrashadowError, ValueError):
    """A grid file could not be parsed."""


class UnsupportedVersionError(GridFormatError):
    """A file declares a format version this library does not read."""


class ValidationError(TerrashadowError, ValueError):
    """A parsed object violates a structural invariant."""


class ScenarioValidationError(ValidationError):
    """A scenario definition is inconsistent (unknown agent, bad event)."""
