"""Exception hierarchy shared by all icrl modules."""


class IcrlError(Exception):
    """Base class for every error raised by icrl."""


class CyclicGraph(IcrlError, ValueError):
    pass


class BadParentIndex(IcrlError, ValueError):
    pass


class TargetOutOfRange(IcrlError, ValueError):
    pass


class EnvIndexOutOfRange(IcrlError, IndexError):
    pass


class GridTooLarge(IcrlError, ValueError):
    pass


class DimensionMismatch(IcrlError, ValueError):
    pass


class NotInImage(IcrlError, ValueError):
    """Raised when an observation is not in the image of a mixing map."""


class ZeroVector(IcrlError, ValueError):
    pass


class DimensionTooSmall(IcrlError, ValueError):
    pass


class ExponentCollision(IcrlError, ValueError):
    pass


class NotFullSupport(IcrlError, ValueError):
    """Raised when a closed-form risk needs every latent to be intervened on."""


class DegenerateColumn(IcrlError, ValueError):
    """Raised when a latent column has zero sample variance.

    Usually means the data came from a single full do-intervention, so there
    is no environment diversity to correlate against.
    """


class RankDeficient(IcrlError, ValueError):
    pass


class ParseError(IcrlError):
    pass


class SchemaError(IcrlError):
    pass


class ValidationError(IcrlError):
    pass


class IoError(IcrlError, OSError):
    pass
