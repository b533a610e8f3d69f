"""Exception types raised by the engine.

Every error that stems from invalid input derives from ``ValidationError``
so the CLI can map it to exit code 1; file-system failures surface as the
built-in ``OSError`` and map to exit code 2.
"""


class KCoverError(Exception):
    pass


class ValidationError(KCoverError, ValueError):
    pass


class LengthMismatch(ValidationError):
    pass


class HeightOutOfRange(ValidationError):
    def __init__(self, cell, value):
        self.cell = cell
        self.value = value
        super().__init__(f"height {value!r} at cell {cell} outside [0, z_max]")


class NoFreeCells(ValidationError):
    pass


class OutOfBounds(ValidationError):
    pass


class GridMismatch(ValidationError):
    pass


class OrderExceedsCount(ValidationError):
    pass


class WeightCountMismatch(ValidationError):
    pass


class NonMonotoneWeights(ValidationError):
    pass


class EmptyCandidateSet(ValidationError):
    pass


class DegenerateFreeSpace(ValidationError):
    pass


class EnumerationTooLarge(ValidationError):
    pass


class TooFewRecords(ValidationError):
    pass


class TheoremViolation(KCoverError):
    """A greedy prefix fell below the approximation bound (implementation bug)."""


class ParseError(ValidationError):
    def __init__(self, message, line=None, offset=None):
        self.line = line
        self.offset = offset
        where = ""
        if line is not None:
            where = f" (line {line}" + (f", offset {offset}" if offset is not None else "") + ")"
        super().__init__(message + where)
