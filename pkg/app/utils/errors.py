"""
Exception hierarchy for the congestion identification toolkit.

Every error carries the process exit code the CLI reports for it.
"""
from typing import Iterable, Optional


class CongestionIdError(Exception):
    """Base error; exit code 1 unless a subclass says otherwise."""
    exit_code: int = 1


class CaseValidationError(CongestionIdError):
    """A network case violates its schema or invariants."""


class ConfigError(CongestionIdError):
    """Run configuration could not be loaded or validated."""


class NetworkTopologyError(CongestionIdError):
    """The network cannot be used for DC power flow (islands, zero reactance)."""

    def __init__(self, message: str, islands: Optional[list[list[int]]] = None):
        super().__init__(message)
        self.islands = islands or []


class ShapeMismatchError(CongestionIdError):
    """Array shapes do not agree."""


class SolverError(CongestionIdError):
    """The LP solver failed for a reason other than infeasibility."""


class InfeasibleDispatchError(CongestionIdError):
    """Market clearing LP is infeasible."""
    exit_code = 2


class RankDeficitError(CongestionIdError):
    """Recovered basis does not span the data."""
    exit_code = 3

    def __init__(self, missing: int, residual_columns: int = 0):
        noun = "vector" if missing == 1 else "vectors"
        super().__init__(
            f"{missing} basis {noun} missing "
            f"(residual columns outside span(B): {residual_columns})"
        )
        self.missing = missing
        self.residual_columns = residual_columns


class NoCongestionError(CongestionIdError):
    """Every interval was filtered out as uncongested."""
    exit_code = 4

    def __init__(self, message: str = "no congestion observed"):
        super().__init__(message)


class DataIngestionError(CongestionIdError):
    """LMP CSV could not be turned into a dense panel."""


class AlignmentError(CongestionIdError):
    """Recovered codes and ground truth cover different intervals."""

    def __init__(self, unmatched: Iterable[str]):
        self.unmatched = sorted(unmatched)
        shown = ", ".join(self.unmatched[:10])
        more = "" if len(self.unmatched) <= 10 else f" (+{len(self.unmatched) - 10} more)"
        super().__init__(f"interval misalignment, unmatched timestamps: {shown}{more}")


class MissingArtifactError(CongestionIdError):
    """A command needs outputs of a previous command that are not there."""


class ZeroColumnError(CongestionIdError):
    """A working-matrix column has zero norm where a direction is needed."""
