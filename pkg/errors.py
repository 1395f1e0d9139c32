"""Exception hierarchy. Every error carries the CLI exit code it maps to."""
from typing import Any, List, Optional


class HetrenError(Exception):
    """Base class for every error the lab raises on purpose"""

    exit_code = 1


class ConfigError(HetrenError, ValueError):
    """Unreadable or malformed configuration"""

    exit_code = 2


class ModelInvariantError(HetrenError, ValueError):
    """A ModelConfig violates one or more of its invariants.

    Carries every check (passed or not) so callers can print the full table.
    """

    def __init__(self, checks: List[Any]):
        self.checks = list(checks)
        names = ", ".join(f"{c.tag} ({c.description})" for c in self.failed)
        super().__init__(f"Model invariants violated: {names}")

    @property
    def failed(self) -> List[Any]:
        return [c for c in self.checks if not c.passed]


class DegenerateSigma(HetrenError, ValueError):
    pass


class DegenerateModel(HetrenError):
    pass


class InfeasibleTargets(HetrenError, ValueError):
    pass


class NotInZTilde(HetrenError, ValueError):
    pass


class SojournNotFound(HetrenError):
    """No sojourn pair found below the search cutoff"""

    exit_code = 3

    def __init__(self, n_max: int, diagnostic: str):
        self.n_max = n_max
        self.diagnostic = diagnostic
        super().__init__(f"No sojourn pair with n <= {n_max}: {diagnostic}")


class ScheduleUnverified(SojournNotFound):
    """A schedule from the search fails its re-check at higher precision"""

    def __init__(self, problems: List[str]):
        self.problems = list(problems)
        self.n_max = None
        self.diagnostic = "; ".join(self.problems)
        HetrenError.__init__(self, f"Schedule failed re-verification: {self.diagnostic}")


class CompositionError(HetrenError):
    """A chart composition could not be carried out faithfully"""

    exit_code = 4

    def __init__(self, message: str, k: Optional[int] = None, point: Any = None):
        super().__init__(message)
        self.message = message
        self.k = k
        self.point = point

    def at(self, k: int, point: Any = None) -> "CompositionError":
        """Attach the renormalization index (and grid point) the failure happened at"""
        self.k = k
        if point is not None:
            self.point = point
        return self

    def __str__(self) -> str:
        where = []
        if self.k is not None:
            where.append(f"k={self.k}")
        if self.point is not None:
            where.append(f"point={tuple(float(c) for c in self.point)}")
        return f"{self.message} [{', '.join(where)}]" if where else self.message


class OutOfNeighbourhood(CompositionError):
    pass


class PlateauViolation(CompositionError):
    pass


class DomainEscape(CompositionError):
    pass


class PrecisionLoss(CompositionError):
    pass
