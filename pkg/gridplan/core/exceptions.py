"""
Exception hierarchy for gridplan.

Every error carries the process exit code the CLI reports for it.
"""
from typing import Iterable, List, Optional, Sequence, Tuple


class GridPlanError(Exception):
    """Base class for all gridplan errors."""
    exit_code = 1


class ConfigError(GridPlanError):
    """Invalid study configuration, missing inputs or bad user arguments."""
    exit_code = 2


class GridParseError(ConfigError):
    """Grid file that cannot be parsed as JSON."""


class GridValidationError(ConfigError):
    """Grid file that parses but violates one or more model invariants."""

    def __init__(self, problems: Sequence[str]):
        self.problems = list(problems)
        super().__init__("Invalid grid: " + "; ".join(self.problems))


class UnknownAssetError(ConfigError):
    """Investment plan that references assets the grid does not know."""


class HorizonMismatchError(ConfigError):
    """Inputs that were produced for different planning horizons."""


class ProfileFormatError(ConfigError):
    """Profile CSV schema violation; the message names the offending row."""


class MpsFormatError(ConfigError):
    """Malformed or unsupported MPS content."""


class ProblemDefinitionError(ConfigError):
    """MilpProblem that violates its own invariants."""

    def __init__(self, problems: Sequence[str]):
        self.problems = list(problems)
        super().__init__("Invalid optimization problem: " + "; ".join(self.problems))


class ModelInfeasibleError(GridPlanError):
    """A model has no feasible solution or the solver gave up without one."""
    exit_code = 3

    def __init__(self, message: str, diagnostic: Optional[str] = None):
        self.diagnostic = diagnostic
        if diagnostic:
            message = f"{message} ({diagnostic})"
        super().__init__(message)


class BatchFailureError(ModelInfeasibleError):
    """One or more days of a SCUC batch did not produce a solution."""

    def __init__(self, failures: Iterable[str]):
        self.failures: List[str] = list(failures)
        super().__init__(f"{len(self.failures)} day(s) failed: " + ", ".join(self.failures))


class CoverageError(GridPlanError):
    """Input series that do not cover the requested horizon."""
    exit_code = 4

    def __init__(self, message: str, gaps: Sequence[Tuple[str, str, str]] = ()):
        self.gaps = list(gaps)
        if self.gaps:
            spans = ", ".join(f"{entity} {start}..{end}" for entity, start, end in self.gaps)
            message = f"{message}: {spans}"
        super().__init__(message)


class ResidualCheckError(GridPlanError):
    """Extracted solution that does not satisfy the model it came from."""
    exit_code = 1
