"""Exception hierarchy shared by all bohmlab modules."""


class BohmLabError(Exception):
    """Base class for every error raised by bohmlab."""


class InvalidBoundsError(BohmLabError, ValueError):
    pass


class ZeroNormError(BohmLabError, ValueError):
    pass


class OutOfRangeError(BohmLabError, ValueError):
    pass


class GridMismatchError(BohmLabError, ValueError):
    pass


class DegeneracyError(BohmLabError):
    pass


class SolverError(BohmLabError):
    pass


class ResolutionError(BohmLabError, ValueError):
    pass


class MissingFrameError(BohmLabError, IndexError):
    pass


class OutOfGridError(BohmLabError, ValueError):
    pass


class InvalidIntervalError(BohmLabError, ValueError):
    pass


class BumpOutsideGridError(BohmLabError, ValueError):
    pass


class EmptyTrajectoryError(BohmLabError, ValueError):
    pass


class ConfigError(BohmLabError, ValueError):
    pass


class StageError(BohmLabError):
    """Upstream failure annotated with the pipeline stage it happened in."""

    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"{stage}: {type(cause).__name__}: {cause}")
