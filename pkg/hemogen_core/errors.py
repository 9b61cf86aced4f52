# coding=utf-8
"""
Exceptions raised by hemogen.

Every class also derives from the builtin it specialises, so callers that only
know about ``ValueError`` keep working.
"""


class HemogenError(Exception):
    """base class of all hemogen errors"""


class ConfigError(HemogenError, ValueError):
    pass


class MaskValidationError(HemogenError, ValueError):
    """
    Raised when an instance mask breaks the coloring rule
    (two touching cells share a color).

    :ivar violations: list of ((x1, y1), (x2, y2)) touching pixel pairs
    :ivar source: mask identifier, usually the file path
    """

    def __init__(self, violations, source=None, max_listed=10):
        self.violations = list(violations)
        self.source = source
        listed = ", ".join("{}-{}".format(a, b) for a, b in self.violations[:max_listed])
        more = "" if len(self.violations) <= max_listed else " ... ({} total)".format(len(self.violations))
        super().__init__(
            "{}: same-color cells touch at pixel pairs {}{}".format(source or "<mask>", listed, more)
        )


class DatabaseFormatError(HemogenError, ValueError):
    pass


class DatabaseVersionError(DatabaseFormatError):
    pass


class DatabaseChecksumError(DatabaseFormatError):
    pass


class DatabaseTruncatedError(DatabaseFormatError):
    pass


class DegenerateMapError(HemogenError, ValueError):
    """the probability map has no mass left to sample from"""


class DimensionMismatchError(HemogenError, ValueError):
    pass


class OutOfBoundsError(HemogenError, IndexError):
    """a location outside the image"""
