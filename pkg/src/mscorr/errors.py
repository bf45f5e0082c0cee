"""Exception hierarchy.

Every error carries its class name as the stable identifier the CLI prints on
stderr, so scripts can match on ``MissingConfig``, ``AxisMismatch`` and so on.
"""

from __future__ import annotations


class MscorrError(Exception):
    """Base class for all library errors."""

    @property
    def code(self) -> str:
        return type(self).__name__


# spectral data / file I/O
class InvariantViolation(MscorrError, ValueError):
    pass


class MalformedHeader(MscorrError, ValueError):
    pass


class TruncatedData(MscorrError, ValueError):
    pass


class AxisOutOfRange(InvariantViolation):
    pass


class AxisMismatch(MscorrError, ValueError):
    pass


class NonNumericCell(MscorrError, ValueError):
    pass


class TargetOutOfRange(MscorrError, ValueError):
    pass


class IoFailure(MscorrError, OSError):
    pass


# projection / metrics
class DegenerateWhite(MscorrError, ValueError):
    pass


class DimensionMismatch(MscorrError, ValueError):
    pass


class WeightLengthMismatch(MscorrError, ValueError):
    pass


class ZeroSpectrum(MscorrError, ValueError):
    pass


class MissingConfig(MscorrError, ValueError):
    pass


# fixed point
class ShiftOutOfRange(MscorrError, ValueError):
    pass


class NotPowerOfTwo(MscorrError, ValueError):
    pass


class MagnitudeOverflow(MscorrError, OverflowError):
    pass


# cost model
class UnknownAlgorithm(MscorrError, KeyError):
    def __str__(self) -> str:  # KeyError quotes its message otherwise
        return str(self.args[0]) if self.args else ""


# pipeline
class UnknownReference(MscorrError, KeyError):
    def __str__(self) -> str:
        return str(self.args[0]) if self.args else ""


class ScheduleInvalid(MscorrError, ValueError):
    pass


class DuplicateId(MscorrError, ValueError):
    pass


class LoadFailure(MscorrError, ValueError):
    pass


class IndexCorrupt(MscorrError, ValueError):
    pass
