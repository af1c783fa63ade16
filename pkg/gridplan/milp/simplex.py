"""
Bounded-variable revised simplex for the LP relaxations.

Rows are turned into equalities with slack columns (bounded to encode the
relation) and, where the starting point violates a row, artificial columns that
a first phase drives to zero. The basis inverse is kept as a sparse LU
factorization plus a product of eta updates, refactorized periodically.
Pricing is Dantzig's rule; after a run of degenerate pivots the solver switches
to Bland's rule for the rest of the solve.
"""
import logging
import math
import time
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from gridplan.milp.problem import MatrixForm, MilpProblem, MilpSolution, SolveStatus, SolverConfig

logger = logging.getLogger(__name__)

AT_LOWER, AT_UPPER, FREE, BASIC = 0, 1, 2, 3


@dataclass
class LpResult:
    """Raw LP outcome over the columns of a MatrixForm."""
    status: SolveStatus
    x: Optional[np.ndarray]
    objective: Optional[float]
    iterations: int
    message: str = ""


class _NumericalFailure(Exception):
    pass


def solve_lp(problem: MilpProblem, config: Optional[SolverConfig] = None) -> MilpSolution:
    """
    Solve the LP relaxation of a problem (integrality is ignored).

    Args:
        problem: The problem to solve
        config: Solver tolerances and limits

    Returns:
        MilpSolution: status, values and objective; bound equals the objective
        when optimal
    """
    config = config or SolverConfig()
    problem.validate()
    start = time.perf_counter()
    deadline = start + config.time_limit if config.time_limit else None
    form = problem.to_matrix()
    result = solve_matrix_lp(form, form.lower, form.upper, config, deadline)
    elapsed = time.perf_counter() - start
    logger.debug(f"LP {problem.name}: {result.status.value} after {result.iterations} pivots in {elapsed:.3f}s")
    return MilpSolution(
        status=result.status,
        values=result.x,
        objective=result.objective,
        bound=result.objective if result.status is SolveStatus.OPTIMAL else None,
        nodes=1,
        iterations=result.iterations,
        solve_seconds=elapsed,
        message=result.message,
        names=tuple(var.name for var in problem.variables),
    )


def solve_matrix_lp(
    form: MatrixForm,
    lower: np.ndarray,
    upper: np.ndarray,
    config: SolverConfig,
    deadline: Optional[float] = None,
) -> LpResult:
    """Solve min c·x over the rows of `form` with the given column bounds."""
    tol = config.feasibility_tolerance
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    if np.any(lower > upper + tol):
        return LpResult(SolveStatus.INFEASIBLE, None, None, 0, "contradictory variable bounds")

    # Presolve: substitute fixed columns, then drop rows left without entries.
    fixed = lower >= upper
    keep = np.flatnonzero(~fixed)
    x_full = np.where(fixed, lower, 0.0)
    A = form.A.tocsr()
    b = form.b - A @ x_full
    A_keep = A[:, keep].tocsr()
    A_keep.eliminate_zeros()
    empty = np.diff(A_keep.indptr) == 0
    violated = (
        ((form.sense < 0) & (b < -tol))
        | ((form.sense > 0) & (b > tol))
        | ((form.sense == 0) & (np.abs(b) > tol))
    )
    if np.any(empty & violated):
        row = int(np.flatnonzero(empty & violated)[0])
        return LpResult(SolveStatus.INFEASIBLE, None, None, 0, f"row {row} cannot be satisfied")
    active = ~empty
    A_red = A_keep[active]
    b_red = b[active]
    sense_red = form.sense[active]
    c_red = form.c[keep]
    lo_red = lower[keep]
    up_red = upper[keep]

    if A_red.shape[0] == 0:
        status, x_red = _solve_separable(c_red, lo_red, up_red)
        iterations = 0
        message = ""
    else:
        engine = _BoundedSimplex(A_red, b_red, sense_red, c_red, lo_red, up_red, config, deadline)
        status, x_red, message = engine.run()
        iterations = engine.iterations

    if status is not SolveStatus.OPTIMAL:
        return LpResult(status, None, None, iterations, message)
    x_full[keep] = x_red
    objective = float(form.c @ x_full) + form.constant
    return LpResult(SolveStatus.OPTIMAL, x_full, objective, iterations, message)


def _solve_separable(c: np.ndarray, lower: np.ndarray, upper: np.ndarray) -> Tuple[SolveStatus, Optional[np.ndarray]]:
    """Row-free LP: every column goes to its cheaper bound."""
    x = np.zeros(c.size)
    for j, cost in enumerate(c):
        if cost > 0:
            if not math.isfinite(lower[j]):
                return SolveStatus.UNBOUNDED, None
            x[j] = lower[j]
        elif cost < 0:
            if not math.isfinite(upper[j]):
                return SolveStatus.UNBOUNDED, None
            x[j] = upper[j]
        elif math.isfinite(lower[j]):
            x[j] = lower[j]
        elif math.isfinite(upper[j]):
            x[j] = upper[j]
    return SolveStatus.OPTIMAL, x


class _BoundedSimplex:
    """Two-phase primal simplex on A x (rel) b, lower <= x <= upper."""

    def __init__(
        self,
        A: sparse.csr_matrix,
        b: np.ndarray,
        sense: np.ndarray,
        c: np.ndarray,
        lower: np.ndarray,
        upper: np.ndarray,
        config: SolverConfig,
        deadline: Optional[float],
    ):
        self.config = config
        self.deadline = deadline
        self.iterations = 0
        self.use_bland = False
        m, n = A.shape
        self.m, self.n = m, n
        self.b = b.astype(float)

        x0 = np.where(np.isfinite(lower), lower, np.where(np.isfinite(upper), upper, 0.0))
        state0 = np.where(np.isfinite(lower), AT_LOWER, np.where(np.isfinite(upper), AT_UPPER, FREE))
        residual = self.b - A @ x0

        ineq_rows = np.flatnonzero(sense != 0)
        is_le = sense[ineq_rows] < 0
        slack_ok = (is_le & (residual[ineq_rows] >= 0)) | (~is_le & (residual[ineq_rows] <= 0))
        covered = np.zeros(m, dtype=bool)
        covered[ineq_rows[slack_ok]] = True
        art_rows = np.flatnonzero(~covered)
        art_sign = np.where(residual[art_rows] >= 0, 1.0, -1.0)

        n_slack, n_art = ineq_rows.size, art_rows.size
        slack_block = sparse.csc_matrix(
            (np.ones(n_slack), (ineq_rows, np.arange(n_slack))), shape=(m, n_slack)
        )
        art_block = sparse.csc_matrix((art_sign, (art_rows, np.arange(n_art))), shape=(m, n_art))
        blocks = [block for block in (A.tocsc(), slack_block, art_block) if block.shape[1]]
        self.Af = sparse.hstack(blocks, format="csc")
        self.AfT = self.Af.T.tocsr()
        self.n_total = n + n_slack + n_art
        self.art = np.arange(n + n_slack, self.n_total)

        self.lower = np.concatenate([lower, np.where(is_le, 0.0, -np.inf), np.zeros(n_art)])
        self.upper = np.concatenate([upper, np.where(is_le, np.inf, 0.0), np.full(n_art, np.inf)])
        self.x = np.concatenate([x0, np.zeros(n_slack), np.abs(residual[art_rows])])
        self.state = np.concatenate(
            [state0, np.where(is_le, AT_LOWER, AT_UPPER), np.full(n_art, BASIC)]
        ).astype(np.int8)

        self.basis = np.empty(m, dtype=np.int64)
        slack_cols = n + np.arange(n_slack)
        self.basis[ineq_rows[slack_ok]] = slack_cols[slack_ok]
        self.state[slack_cols[slack_ok]] = BASIC
        self.x[slack_cols[slack_ok]] = residual[ineq_rows[slack_ok]]
        self.basis[art_rows] = self.art

        scale = float(np.max(np.abs(c))) if c.size and np.any(c) else 1.0
        self.phase2_cost = np.concatenate([c / scale, np.zeros(n_slack + n_art)])
        self.cost = np.zeros(self.n_total)
        self.lu = None
        self.etas: List[Tuple[int, np.ndarray]] = []

    # ==================== DRIVER ====================

    def run(self) -> Tuple[SolveStatus, Optional[np.ndarray], str]:
        try:
            if self.art.size:
                self.cost = np.zeros(self.n_total)
                self.cost[self.art] = 1.0
                outcome = self._iterate()
                if outcome != "optimal":
                    return SolveStatus.LIMIT, None, f"phase one stopped: {outcome}"
                infeasibility = float(np.sum(self.x[self.art]))
                if infeasibility > self.config.feasibility_tolerance * (1.0 + float(np.max(np.abs(self.b)))):
                    return SolveStatus.INFEASIBLE, None, f"phase one infeasibility {infeasibility:.3e}"
                self.upper[self.art] = 0.0
                nonbasic_art = self.art[self.state[self.art] != BASIC]
                self.x[nonbasic_art] = 0.0
                self.state[nonbasic_art] = AT_LOWER
            self.cost = self.phase2_cost
            outcome = self._iterate()
            if outcome == "unbounded":
                return SolveStatus.UNBOUNDED, None, ""
            if outcome != "optimal":
                return SolveStatus.LIMIT, None, f"stopped: {outcome}"
            self._refactor()
            violation = max(
                float(np.max(self.lower - self.x, initial=0.0)),
                float(np.max(self.x - self.upper, initial=0.0)),
            )
            if violation > 1e3 * self.config.feasibility_tolerance:
                return SolveStatus.LIMIT, None, f"numerical failure: final bound violation {violation:.3e}"
            x = np.clip(self.x[: self.n], self.lower[: self.n], self.upper[: self.n])
            return SolveStatus.OPTIMAL, x, ""
        except _NumericalFailure as e:
            logger.warning(f"Simplex numerical failure: {e}")
            return SolveStatus.LIMIT, None, f"numerical failure: {e}"

    def _iterate(self) -> str:
        cfg = self.config
        self._refactor()
        degenerate = 0
        while True:
            if self.iterations >= cfg.iteration_limit:
                return "iteration limit"
            if self.deadline is not None and time.perf_counter() > self.deadline:
                return "time limit"

            y = self._btran(self.cost[self.basis])
            d = self.cost - self.AfT @ y
            movable = self.upper > self.lower
            up_ok = (self.state == AT_LOWER) | (self.state == FREE)
            down_ok = (self.state == AT_UPPER) | (self.state == FREE)
            can_inc = movable & up_ok & (d < -cfg.optimality_tolerance)
            can_dec = movable & down_ok & (d > cfg.optimality_tolerance)
            candidates = np.flatnonzero(can_inc | can_dec)
            if candidates.size == 0:
                return "optimal"
            if self.use_bland:
                q = int(candidates[0])
            else:
                q = int(candidates[np.argmax(np.abs(d[candidates]))])
            sigma = 1.0 if can_inc[q] else -1.0

            w = self._ftran(self._column(q))
            delta = -sigma * w
            step, leave_row = self._ratio_test(delta, w)
            flip = self.upper[q] - self.lower[q]
            if not math.isfinite(step) and not math.isfinite(flip):
                return "unbounded"

            if flip <= step:
                step = flip
                self.x[self.basis] += delta * step
                if sigma > 0:
                    self.x[q] = self.upper[q]
                    self.state[q] = AT_UPPER
                else:
                    self.x[q] = self.lower[q]
                    self.state[q] = AT_LOWER
            else:
                leaving = int(self.basis[leave_row])
                self.x[self.basis] += delta * step
                self.x[q] += sigma * step
                if delta[leave_row] < 0:
                    self.x[leaving] = self.lower[leaving]
                    self.state[leaving] = AT_LOWER
                else:
                    self.x[leaving] = self.upper[leaving]
                    self.state[leaving] = AT_UPPER
                self.basis[leave_row] = q
                self.state[q] = BASIC
                self.etas.append((leave_row, w))
                if len(self.etas) >= cfg.refactor_interval:
                    self._refactor()

            self.iterations += 1
            if step <= 1e-12:
                degenerate += 1
                if not self.use_bland and degenerate >= cfg.degenerate_pivots_before_bland:
                    logger.debug(f"Switching to Bland's rule after {degenerate} degenerate pivots")
                    self.use_bland = True
            else:
                degenerate = 0

    def _ratio_test(self, delta: np.ndarray, w: np.ndarray) -> Tuple[float, int]:
        """Largest step keeping the basic variables within their bounds."""
        pivot_tol = self.config.pivot_tolerance * max(1.0, float(np.max(np.abs(w), initial=0.0)))
        xb = self.x[self.basis]
        lb = self.lower[self.basis]
        ub = self.upper[self.basis]
        ratios = np.full(self.m, np.inf)
        falling = (delta < -pivot_tol) & np.isfinite(lb)
        rising = (delta > pivot_tol) & np.isfinite(ub)
        ratios[falling] = (xb[falling] - lb[falling]) / -delta[falling]
        ratios[rising] = (ub[rising] - xb[rising]) / delta[rising]
        np.maximum(ratios, 0.0, out=ratios)
        step = float(ratios.min())
        if not math.isfinite(step):
            return math.inf, -1
        ties = np.flatnonzero(ratios <= step + 1e-12)
        if self.use_bland:
            row = int(ties[np.argmin(self.basis[ties])])
        else:
            row = int(ties[np.argmax(np.abs(delta[ties]))])
        return step, row

    # ==================== LINEAR ALGEBRA ====================

    def _column(self, j: int) -> np.ndarray:
        start, end = self.Af.indptr[j], self.Af.indptr[j + 1]
        col = np.zeros(self.m)
        col[self.Af.indices[start:end]] = self.Af.data[start:end]
        return col

    def _refactor(self) -> None:
        """Factorize the current basis and recompute the basic values."""
        basis_matrix = self.Af[:, self.basis].tocsc()
        try:
            self.lu = splu(basis_matrix)
        except RuntimeError as e:
            raise _NumericalFailure(f"singular basis: {e}") from e
        self.etas = []
        nonbasic = self.x.copy()
        nonbasic[self.basis] = 0.0
        self.x[self.basis] = self._ftran(self.b - self.Af @ nonbasic)

    def _ftran(self, a: np.ndarray) -> np.ndarray:
        """Solve B y = a."""
        y = self.lu.solve(a)
        for row, w in self.etas:
            pivot = y[row] / w[row]
            y -= pivot * w
            y[row] = pivot
        return y

    def _btran(self, c: np.ndarray) -> np.ndarray:
        """Solve B^T z = c."""
        c = np.array(c, dtype=float)
        for row, w in reversed(self.etas):
            c[row] = (c[row] - (w @ c - w[row] * c[row])) / w[row]
        return self.lu.solve(c, trans="T")
