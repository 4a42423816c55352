"""
Exception hierarchy for the query-driven trajectory simplification toolkit
"""


class QdtsError(Exception):
    """Base class for every error raised by this package"""


class ConfigError(QdtsError):
    """Malformed or inconsistent configuration"""


class MalformedRow(QdtsError):
    """A CSV row could not be parsed"""


class NonIncreasingTimestamp(QdtsError):
    """Timestamps within one trajectory are not strictly increasing"""


class TrajectoryTooShort(QdtsError):
    """A trajectory has fewer than two points"""


class DuplicateTrajectoryId(QdtsError):
    """Two trajectories share the same identifier"""


class OutOfRangeCoordinate(QdtsError):
    """Latitude or longitude outside the valid range"""


class Exhausted(QdtsError):
    """No cube at the requested level has an uninserted point left"""


class NoCandidates(QdtsError):
    """A trajectory has no uninserted candidate points inside a cube"""


class CubeExhausted(QdtsError):
    """A cube has no uninserted candidate points left"""


class InsufficientCandidates(QdtsError):
    """Fewer trajectories than k overlap the kNN time window"""


class EmptyWorkload(QdtsError):
    """A workload-level metric was requested for an empty workload"""


class BudgetTooSmall(QdtsError):
    """The storage budget cannot hold both endpoints of every trajectory"""


class ShapeMismatch(QdtsError):
    """A state vector does not match the network input arity"""


class NoValidAction(QdtsError):
    """An action mask has no valid entry"""


class CheckpointError(QdtsError):
    """A policy checkpoint is unreadable or has unexpected shapes"""


class MalformedResults(QdtsError):
    """A results CSV is missing required columns or rows"""
