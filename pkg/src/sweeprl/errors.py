"""Exception types shared across the toolkit.

Every error the library raises deliberately derives from SweepError so the
command line layer can catch one base class and exit with a diagnostic.
"""


class SweepError(Exception):
    """Base class for all toolkit errors."""


# --- map loading and pathfinding ---

class NonRectangularError(SweepError):
    """Map text rows have differing lengths."""


class UnknownCharacterError(SweepError):
    """Map text contains a character other than '#' or '.'."""


class DisconnectedFreeSpaceError(SweepError):
    """Some free cell is not 4-connected to the rest of the free space."""


class UnreachableError(SweepError):
    """No 4-connected path exists between the requested cells."""


# --- simulation ---

class TargetIsObstacleError(SweepError):
    """A step action targeted an obstacle cell."""


class NoEventsError(SweepError):
    """Average detection time is undefined before any event has occurred."""


class ZeroElapsedTimeError(SweepError):
    """Detections per second is undefined before any time has elapsed."""


# --- reward construction ---

class NonMonotonicTimeError(SweepError):
    """Tracker time failed to increase across a decision step."""


class EmptyListError(SweepError):
    """An aggregate was requested over an empty collection."""


# --- numerical kernel ---

class ShapeMismatchError(SweepError):
    """Operand shapes are inconsistent with the layer configuration."""


class NonFiniteGradientError(SweepError):
    """A gradient contained NaN or infinity at optimizer time."""


class MapTooSmallError(SweepError):
    """The map is too small for the requested network shape plan."""


# --- learning ---

class EmptyMaskError(SweepError):
    """Action selection was given a mask with no free cells."""


class ReplayTooSmallError(SweepError):
    """A training step was requested before the replay store held a batch."""


class NotUnichainError(SweepError):
    """The tabular SMDP failed the single-recurrent-class reachability check."""


class NoConvergenceError(SweepError):
    """Value iteration failed to converge within the iteration budget."""


# --- experiment harness ---

class TooFewFreeCellsError(SweepError):
    """The map has fewer free cells than requested event sites."""
