"""Exception hierarchy shared by the library and the CLI exit-code mapping."""


class TrisplineError(Exception):
    """Base class for all package errors."""


class ValidationError(TrisplineError, ValueError):
    """Invalid user input (shapes, ranges, malformed files)."""


class MeshError(ValidationError):
    """A triangulation failed validation."""

    def __init__(self, message, triangles=None):
        super().__init__(message)
        self.triangles = [] if triangles is None else list(triangles)


class NumericalError(TrisplineError, ArithmeticError):
    """A numerical step could not be carried out (singular system, empty cells)."""


class EmptyTriangleError(NumericalError):
    """Piecewise-constant fit on a mesh with triangles holding too few pixels."""

    def __init__(self, message, triangles):
        super().__init__(message)
        self.triangles = list(triangles)
