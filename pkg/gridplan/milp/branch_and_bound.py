"""
Best-bound branch-and-bound over binary variables.

Every node is an LP relaxation with some binaries fixed. Open nodes are kept in a
heap ordered by their LP bound, then by depth (deeper first), then by creation
order; the branching variable is the most fractional binary, lowest index first.
"""
import heapq
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from gridplan.milp.problem import MatrixForm, MilpProblem, MilpSolution, SolveStatus, SolverConfig
from gridplan.milp.simplex import LpResult, solve_lp, solve_matrix_lp

logger = logging.getLogger(__name__)

Fixings = Tuple[Tuple[int, float], ...]


@dataclass(order=True)
class _Node:
    bound: float
    neg_depth: int
    seq: int
    fixings: Fixings = field(compare=False)
    x: np.ndarray = field(compare=False, repr=False)


class _LimitReached(Exception):
    pass


def solve_milp(problem: MilpProblem, config: Optional[SolverConfig] = None) -> MilpSolution:
    """
    Solve a problem with binary variables to proven optimality (within the gap).

    Args:
        problem: The problem to solve
        config: Solver tolerances and limits

    Returns:
        MilpSolution: incumbent values, objective, best bound and node count;
        limit statuses carry the incumbent when one was found
    """
    config = config or SolverConfig()
    problem.validate()
    if not problem.binary_indices:
        return solve_lp(problem, config)
    return _BranchAndBound(problem, config).solve()


class _BranchAndBound:
    def __init__(self, problem: MilpProblem, config: SolverConfig):
        self.problem = problem
        self.config = config
        self.form: MatrixForm = problem.to_matrix()
        self.binaries = np.flatnonzero(self.form.is_binary)
        self.names = tuple(var.name for var in problem.variables)
        self.start = time.perf_counter()
        self.deadline = self.start + config.time_limit if config.time_limit else None
        self.heap: List[_Node] = []
        self.seq = 0
        self.nodes = 0
        self.iterations = 0
        self.incumbent: Optional[np.ndarray] = None
        self.incumbent_obj = float("inf")

    def _cutoff(self) -> float:
        if self.incumbent is None:
            return float("inf")
        return self.incumbent_obj - self.config.mip_gap * max(1.0, abs(self.incumbent_obj))

    def _solve_node(self, fixings: Fixings) -> LpResult:
        lower = self.form.lower.copy()
        upper = self.form.upper.copy()
        for index, value in fixings:
            lower[index] = value
            upper[index] = value
        return solve_matrix_lp(self.form, lower, upper, self.config, self.deadline)

    def _fractionality(self, x: np.ndarray) -> np.ndarray:
        values = x[self.binaries]
        return np.abs(values - np.round(values))

    def _consider(self, result: LpResult, fixings: Fixings, depth: int) -> None:
        self.nodes += 1
        self.iterations += result.iterations
        if result.status is SolveStatus.INFEASIBLE:
            return
        if result.status is not SolveStatus.OPTIMAL:
            raise _LimitReached(result.message or f"node LP ended with status {result.status.value}")
        if result.objective >= self._cutoff():
            return
        if self._fractionality(result.x).max() <= self.config.integrality_tolerance:
            self.incumbent = result.x
            self.incumbent_obj = result.objective
            logger.debug(f"New incumbent {self.incumbent_obj:.6g} at node {self.nodes}")
            return
        heapq.heappush(self.heap, _Node(result.objective, -depth, self.seq, fixings, result.x))
        self.seq += 1

    def _limit_hit(self) -> Optional[str]:
        if self.config.node_limit is not None and self.nodes >= self.config.node_limit:
            return f"node limit {self.config.node_limit} reached"
        if self.deadline is not None and time.perf_counter() > self.deadline:
            return f"time limit {self.config.time_limit}s reached"
        return None

    def solve(self) -> MilpSolution:
        root = self._solve_node(())
        if root.status in (SolveStatus.INFEASIBLE, SolveStatus.UNBOUNDED):
            return self._result(root.status, root_iterations=root.iterations, message=root.message)
        message = ""
        limited = False
        executor = ThreadPoolExecutor(max_workers=2) if self.config.workers > 1 else None
        try:
            self._consider(root, (), 0)
            while self.heap:
                if self.heap[0].bound >= self._cutoff():
                    break
                reason = self._limit_hit()
                if reason:
                    message, limited = reason, True
                    break
                node = heapq.heappop(self.heap)
                fractional = self._fractionality(node.x)
                branch = int(self.binaries[int(np.argmax(fractional))])
                children = [node.fixings + ((branch, 0.0),), node.fixings + ((branch, 1.0),)]
                if executor is not None:
                    results = list(executor.map(self._solve_node, children))
                else:
                    results = [self._solve_node(child) for child in children]
                for child, result in zip(children, results):
                    self._consider(result, child, -node.neg_depth + 1)
                if self.nodes % 200 < 2:
                    logger.debug(
                        f"B&B {self.problem.name}: {self.nodes} nodes, {len(self.heap)} open, "
                        f"incumbent {self.incumbent_obj:.6g}"
                    )
        except _LimitReached as e:
            message, limited = str(e), True
        finally:
            if executor is not None:
                executor.shutdown()

        if limited:
            return self._result(SolveStatus.LIMIT, message=message)
        if self.incumbent is None:
            return self._result(SolveStatus.INFEASIBLE, message="no integer feasible point")
        return self._result(SolveStatus.OPTIMAL)

    def _result(self, status: SolveStatus, root_iterations: int = 0, message: str = "") -> MilpSolution:
        if status is SolveStatus.OPTIMAL:
            open_bound = self.heap[0].bound if self.heap else self.incumbent_obj
            bound = min(open_bound, self.incumbent_obj)
        elif status is SolveStatus.LIMIT:
            candidates = [node.bound for node in self.heap[:1]]
            if self.incumbent is not None:
                candidates.append(self.incumbent_obj)
            bound = min(candidates) if candidates else None
        else:
            bound = None
        elapsed = time.perf_counter() - self.start
        logger.debug(f"MILP {self.problem.name}: {status.value} after {self.nodes} nodes in {elapsed:.3f}s")
        return MilpSolution(
            status=status,
            values=self.incumbent,
            objective=self.incumbent_obj if self.incumbent is not None else None,
            bound=bound,
            nodes=max(self.nodes, 1),
            iterations=self.iterations + root_iterations,
            solve_seconds=elapsed,
            message=message,
            names=self.names,
        )
