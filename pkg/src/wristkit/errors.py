"""Exception hierarchy.

Every error raised for bad domain input derives from :class:`WristkitError`,
which the CLI maps to exit code 1.
"""


class WristkitError(Exception):
    """Base class for domain errors."""


class DegenerateInput(WristkitError):
    pass


class NonUnitAxis(WristkitError):
    pass


class DimensionMismatch(WristkitError):
    pass


class NotParallelWrist(WristkitError):
    pass


class ClosureFailure(WristkitError):
    pass


class Infeasible(WristkitError):
    pass


class Unbounded(WristkitError):
    pass


class MaxIterations(WristkitError):
    pass


class NotConverged(WristkitError):
    """Pose IK did not reach tolerance. ``result`` holds the best iterate."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class SolverError(WristkitError):
    """A QP failure raised while streaming setpoints, tagged with the step index."""

    def __init__(self, message, step):
        super().__init__(message)
        self.step = step


class GridMismatch(WristkitError):
    pass


class NonPositiveInput(WristkitError):
    pass


class UnstableSimulation(WristkitError):
    pass


class EmptySelection(WristkitError):
    pass


class ParseError(WristkitError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class MonotonicityViolation(ParseError):
    pass
