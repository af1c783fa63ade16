"""Embedded LP/MILP solver: problem container, simplex, branch-and-bound and MPS I/O."""
from gridplan.milp.branch_and_bound import solve_milp
from gridplan.milp.external import solve_with_highs
from gridplan.milp.mps import dumps_mps, loads_mps, read_mps, write_mps
from gridplan.milp.problem import (
    MilpProblem,
    MilpSolution,
    Relation,
    SolverConfig,
    SolveStatus,
    VarType,
)
from gridplan.milp.simplex import solve_lp

__all__ = [
    "MilpProblem",
    "MilpSolution",
    "Relation",
    "SolverConfig",
    "SolveStatus",
    "VarType",
    "dumps_mps",
    "loads_mps",
    "read_mps",
    "solve_lp",
    "solve_milp",
    "solve_with_highs",
    "write_mps",
]
