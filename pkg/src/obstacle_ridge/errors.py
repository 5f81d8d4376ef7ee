"""Exception hierarchy shared by every module of the package."""


class ObstacleRidgeError(Exception):
    """Base class for all errors raised by obstacle_ridge."""


class ParamError(ObstacleRidgeError, ValueError):
    """A scalar parameter is outside its admissible range."""


class DimensionError(ParamError):
    """The ambient dimension does not give a transient form (d < 3)."""


class ShapeError(ObstacleRidgeError, ValueError):
    """Array arguments have inconsistent shapes or dimensions."""


class GeometryError(ObstacleRidgeError, ValueError):
    """A geometric precondition (disjointness, separation) fails."""


class FactorizationError(ObstacleRidgeError, ArithmeticError):
    """No symmetric factorization succeeded, even after jitter repair."""


class SingularSystemError(ObstacleRidgeError, ArithmeticError):
    """An unregularized system is singular beyond what jitter can repair."""


class ConvergenceError(ObstacleRidgeError, RuntimeError):
    """An iterative procedure hit its iteration cap."""
