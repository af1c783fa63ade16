"""
Reference solve through scipy's HiGHS interface.

Used to cross-check the embedded solver (tests, `mps-export --check`); the
planning and operations commands never depend on it.
"""
import logging
import time
from typing import Optional

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, milp

from gridplan.milp.problem import MilpProblem, MilpSolution, SolveStatus, SolverConfig

logger = logging.getLogger(__name__)

_STATUS = {
    0: SolveStatus.OPTIMAL,
    1: SolveStatus.LIMIT,
    2: SolveStatus.INFEASIBLE,
    3: SolveStatus.UNBOUNDED,
}


def solve_with_highs(problem: MilpProblem, config: Optional[SolverConfig] = None) -> MilpSolution:
    """Solve a problem with scipy.optimize.milp and wrap the result."""
    config = config or SolverConfig()
    problem.validate()
    form = problem.to_matrix()
    constraints = []
    if form.A.shape[0] > 0:
        row_lower = np.where(form.sense >= 0, form.b, -np.inf)
        row_upper = np.where(form.sense <= 0, form.b, np.inf)
        constraints.append(LinearConstraint(form.A, row_lower, row_upper))
    options = {"mip_rel_gap": config.mip_gap, "disp": False}
    if config.time_limit is not None:
        options["time_limit"] = config.time_limit
    if config.node_limit is not None:
        options["node_limit"] = config.node_limit

    started = time.perf_counter()
    result = milp(
        c=form.c,
        constraints=constraints,
        integrality=form.is_binary.astype(int),
        bounds=Bounds(form.lower, form.upper),
        options=options,
    )
    elapsed = time.perf_counter() - started
    status = _STATUS.get(result.status, SolveStatus.LIMIT)
    values = np.asarray(result.x, dtype=float) if result.x is not None else None
    objective = float(result.fun) + form.constant if values is not None else None
    bound = getattr(result, "mip_dual_bound", None)
    if bound is not None:
        bound = float(bound) + form.constant
    elif status is SolveStatus.OPTIMAL:
        bound = objective
    logger.debug(f"HiGHS {problem.name}: {status.value} in {elapsed:.3f}s ({result.message})")
    return MilpSolution(
        status=status,
        values=values,
        objective=objective,
        bound=bound,
        nodes=int(getattr(result, "mip_node_count", 0) or 1),
        iterations=0,
        solve_seconds=elapsed,
        message=str(result.message),
        names=tuple(var.name for var in problem.variables),
    )
