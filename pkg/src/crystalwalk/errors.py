"""Exception hierarchy shared by every module."""


class CrystalWalkError(Exception):
    """Base class for all library errors."""


class GraphFormatError(CrystalWalkError):
    """Malformed quotient-graph document or structurally broken graph.

    ``location`` names the offending field (``edges[2].p``) or a
    ``line:column`` pair for JSON syntax errors.
    """

    def __init__(self, message: str, location: str | None = None):
        self.location = location
        if location:
            message = f"{location}: {message}"
        super().__init__(message)


class ParameterError(CrystalWalkError):
    """Invalid builtin parameters (negative value or broken normalization)."""


class SingularSystemError(CrystalWalkError):
    """A linear system that should be uniquely solvable is singular."""


class PeriodError(CrystalWalkError):
    """No closed lifted walk was observed within the search horizon."""


class RefinementError(CrystalWalkError):
    """Label conflict or rank deficiency while refining the quotient."""


class NonSPDError(CrystalWalkError):
    """The Albanese Gram matrix is not positive definite."""


class BranchAmbiguityError(CrystalWalkError):
    """Two eigenvalues are too close to the tracked Perron branch."""


class MemoryBudgetError(CrystalWalkError):
    """The exact dynamic program would exceed the configured cell cap."""


class InconsistentSystemError(CrystalWalkError):
    """Right-hand side not orthogonal to the cokernel of a singular system."""


class NegativeProbabilityError(CrystalWalkError):
    """An interpolated transition probability became negative."""


class ModeMismatchError(CrystalWalkError):
    """Statistics sampled in one mode were reported in another."""
