"""Exception hierarchy shared by all coopdrive modules.

Every contract violation raises one of these named errors so callers can
distinguish bad inputs (subclasses of ``ValueError``) from runtime faults.
"""


class CoopdriveError(Exception):
    """Base class for all library errors."""


# ---------------------------------------------------------------- numerics
class ZeroNorm(CoopdriveError, ValueError):
    """Vector norm below the normalization threshold."""


class NonPositiveTemperature(CoopdriveError, ValueError):
    """Softmax temperature must be > 0."""


class EmptySequence(CoopdriveError, ValueError):
    """Pooling over zero rows."""


class NonFiniteEvaluation(CoopdriveError, ArithmeticError):
    """Objective returned NaN/inf during finite differencing."""


# ------------------------------------------------------------------- model
class HeightMismatch(CoopdriveError, ValueError):
    pass


class ChannelMismatch(CoopdriveError, ValueError):
    pass


class IndivisiblePatchGrid(CoopdriveError, ValueError):
    """Image dimensions not divisible by the patch edge."""


class EmptyPrompt(CoopdriveError, ValueError):
    pass


class UnknownTokenId(CoopdriveError, ValueError):
    pass


class OutOfRangeCoordinate(CoopdriveError, ValueError):
    """Waypoint outside the coordinate quantization range."""


class MalformedTokenSequence(CoopdriveError, ValueError):
    """Trajectory token sequence missing BOS/EOS or malformed."""


# ------------------------------------------------------------------ losses
class BatchTooSmall(CoopdriveError, ValueError):
    """Contrastive alignment needs at least two pairs."""


class ShapeMismatch(CoopdriveError, ValueError):
    pass


class TargetOutOfVocab(CoopdriveError, ValueError):
    pass


class LengthMismatch(CoopdriveError, ValueError):
    pass


class NonFiniteTerm(CoopdriveError, ArithmeticError):
    """A loss term is NaN/inf."""


# ----------------------------------------------------------------- trainer
class DivergenceDetected(CoopdriveError, ArithmeticError):
    """Training loss became non-finite."""


class StepOutOfRange(CoopdriveError, ValueError):
    pass


# ------------------------------------------------------------------- flops
class RankMissing(CoopdriveError, ValueError):
    """Low-rank formula requested without a rank."""


# -------------------------------------------------------------------- link
class DegenerateDimensions(CoopdriveError, ValueError):
    """Resampled image would have zero rows or columns."""


class DecodeFailure(CoopdriveError):
    """Base class for wire-frame decode errors."""


class BadMagic(DecodeFailure):
    pass


class UnsupportedVersion(DecodeFailure):
    pass


class TruncatedFrame(DecodeFailure):
    """Frame shorter than its header claims, or header inconsistent."""


class CrcMismatch(DecodeFailure):
    pass


class PeerTimeout(CoopdriveError, TimeoutError):
    """The other endpoint did not answer before the deadline."""


# ----------------------------------------------------------------- evalkit
class TooShort(CoopdriveError, ValueError):
    """Trajectory has too few waypoints for the operation."""


# --------------------------------------------------------------------- cli
class UsageError(CoopdriveError, ValueError):
    pass


class IoError(CoopdriveError, OSError):
    pass
