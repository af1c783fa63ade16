"""
Abstract LP/MILP container shared by the planning and operations models.

A problem is a list of bounded variables (continuous or binary), a list of
named linear constraints and a linear objective to minimize.
"""
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, Iterable, List, Mapping, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy import sparse

from gridplan.core.exceptions import ProblemDefinitionError

Terms = Union[Mapping[int, float], Iterable[Tuple[int, float]]]


class VarType(str, Enum):
    """Variable integrality."""
    CONTINUOUS = "continuous"
    BINARY = "binary"


class Relation(str, Enum):
    """Constraint relation."""
    LE = "<="
    EQ = "="
    GE = ">="


class SolveStatus(str, Enum):
    """Outcome of a solve."""
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    LIMIT = "limit"


class SolverConfig(BaseModel):
    """Tolerances and limits for the embedded LP/MILP solver."""
    model_config = ConfigDict(frozen=True)

    feasibility_tolerance: float = Field(1e-7, gt=0)
    integrality_tolerance: float = Field(1e-6, gt=0)
    mip_gap: float = Field(1e-6, gt=0)
    optimality_tolerance: float = Field(1e-9, gt=0)
    pivot_tolerance: float = Field(1e-9, gt=0)
    node_limit: Optional[int] = Field(100000, ge=1)
    time_limit: Optional[float] = Field(None, gt=0)
    iteration_limit: int = Field(500000, ge=1)
    refactor_interval: int = Field(64, ge=1)
    degenerate_pivots_before_bland: int = Field(50, ge=1)
    branching: str = Field("most_fractional", pattern="^most_fractional$")
    workers: int = Field(1, ge=1)


@dataclass(frozen=True)
class Variable:
    name: str
    lower: float = 0.0
    upper: float = math.inf
    vtype: VarType = VarType.CONTINUOUS

    @property
    def is_binary(self) -> bool:
        return self.vtype is VarType.BINARY


@dataclass(frozen=True)
class Constraint:
    name: str
    coefficients: Dict[int, float]
    relation: Relation
    rhs: float


@dataclass(frozen=True)
class MatrixForm:
    """Column-indexed arrays of a problem, as consumed by the solvers."""
    A: sparse.csr_matrix
    b: np.ndarray
    sense: np.ndarray  # -1 for <=, 0 for =, +1 for >=
    c: np.ndarray
    constant: float
    lower: np.ndarray
    upper: np.ndarray
    is_binary: np.ndarray

    @property
    def shape(self) -> Tuple[int, int]:
        return self.A.shape


_SENSE_CODE = {Relation.LE: -1, Relation.EQ: 0, Relation.GE: 1}


def _collect_terms(terms: Terms) -> Dict[int, float]:
    items = terms.items() if isinstance(terms, Mapping) else terms
    merged: Dict[int, float] = {}
    for index, value in items:
        merged[int(index)] = merged.get(int(index), 0.0) + float(value)
    return {index: value for index, value in merged.items() if value != 0.0}


class MilpProblem:
    """
    Mutable builder and container for a minimization LP/MILP.

    Variables and constraints are addressed by their insertion index; names
    must be unique and free of whitespace so the problem can be exported to MPS.
    """

    def __init__(self, name: str = "gridplan"):
        self.name = name
        self.variables: List[Variable] = []
        self.constraints: List[Constraint] = []
        self.objective: Dict[int, float] = {}
        self.objective_constant: float = 0.0
        self._var_index: Dict[str, int] = {}
        self._con_index: Dict[str, int] = {}

    # ==================== BUILDING ====================

    def add_variable(
        self,
        name: str,
        lower: float = 0.0,
        upper: float = math.inf,
        vtype: VarType = VarType.CONTINUOUS,
    ) -> int:
        """Append a variable and return its index."""
        if name in self._var_index:
            raise ProblemDefinitionError([f"duplicate variable name {name!r}"])
        self._var_index[name] = len(self.variables)
        self.variables.append(Variable(name, float(lower), float(upper), VarType(vtype)))
        return len(self.variables) - 1

    def add_binary(self, name: str) -> int:
        return self.add_variable(name, 0.0, 1.0, VarType.BINARY)

    def add_constraint(self, name: str, terms: Terms, relation: Relation, rhs: float) -> int:
        """Append a constraint; repeated indices are summed and zero terms dropped."""
        if name in self._con_index:
            raise ProblemDefinitionError([f"duplicate constraint name {name!r}"])
        self._con_index[name] = len(self.constraints)
        self.constraints.append(Constraint(name, _collect_terms(terms), Relation(relation), float(rhs)))
        return len(self.constraints) - 1

    def set_objective(self, terms: Terms, constant: float = 0.0) -> None:
        self.objective = _collect_terms(terms)
        self.objective_constant = float(constant)

    def add_objective_terms(self, terms: Terms) -> None:
        merged = dict(self.objective)
        for index, value in _collect_terms(terms).items():
            merged[index] = merged.get(index, 0.0) + value
        self.objective = {index: value for index, value in merged.items() if value != 0.0}

    # ==================== ACCESS ====================

    @property
    def num_variables(self) -> int:
        return len(self.variables)

    @property
    def num_constraints(self) -> int:
        return len(self.constraints)

    @property
    def binary_indices(self) -> List[int]:
        return [i for i, var in enumerate(self.variables) if var.is_binary]

    def variable_index(self, name: str) -> int:
        return self._var_index[name]

    def constraint_index(self, name: str) -> int:
        return self._con_index[name]

    def copy(self) -> "MilpProblem":
        clone = MilpProblem(self.name)
        clone.variables = list(self.variables)
        clone.constraints = list(self.constraints)
        clone.objective = dict(self.objective)
        clone.objective_constant = self.objective_constant
        clone._var_index = dict(self._var_index)
        clone._con_index = dict(self._con_index)
        return clone

    def with_bounds(self, overrides: Mapping[int, Tuple[float, float]]) -> "MilpProblem":
        """Copy of the problem with some variable bounds replaced."""
        clone = self.copy()
        for index, (lower, upper) in overrides.items():
            clone.variables[index] = replace(clone.variables[index], lower=float(lower), upper=float(upper))
        return clone

    def relaxed(self) -> "MilpProblem":
        """Copy with every binary turned into a continuous variable on [0, 1]."""
        clone = self.copy()
        clone.variables = [
            replace(var, vtype=VarType.CONTINUOUS) if var.is_binary else var for var in clone.variables
        ]
        return clone

    def scaled_objective(self, factor: float) -> "MilpProblem":
        clone = self.copy()
        clone.objective = {index: value * factor for index, value in self.objective.items()}
        clone.objective_constant = self.objective_constant * factor
        return clone

    # ==================== VALIDATION ====================

    def validate(self) -> None:
        """Raise ProblemDefinitionError listing every violated invariant."""
        problems: List[str] = []
        for var in self.variables:
            if math.isnan(var.lower) or math.isnan(var.upper):
                problems.append(f"variable {var.name}: NaN bound")
            elif var.lower > var.upper:
                problems.append(f"variable {var.name}: lower bound {var.lower} exceeds upper bound {var.upper}")
            if var.is_binary and (var.lower < 0.0 or var.upper > 1.0):
                problems.append(f"variable {var.name}: binary bounds outside [0, 1]")
            if any(ch.isspace() for ch in var.name) or not var.name:
                problems.append(f"variable {var.name!r}: name must be non-empty without whitespace")
        n = self.num_variables
        for con in self.constraints:
            if not math.isfinite(con.rhs):
                problems.append(f"constraint {con.name}: non-finite right-hand side")
            for index, value in con.coefficients.items():
                if not 0 <= index < n:
                    problems.append(f"constraint {con.name}: unknown variable index {index}")
                elif not math.isfinite(value):
                    problems.append(f"constraint {con.name}: non-finite coefficient on {self.variables[index].name}")
            if any(ch.isspace() for ch in con.name) or not con.name:
                problems.append(f"constraint {con.name!r}: name must be non-empty without whitespace")
        for index, value in self.objective.items():
            if not 0 <= index < n:
                problems.append(f"objective: unknown variable index {index}")
            elif not math.isfinite(value):
                problems.append(f"objective: non-finite coefficient on {self.variables[index].name}")
        if not math.isfinite(self.objective_constant):
            problems.append("objective: non-finite constant")
        if problems:
            raise ProblemDefinitionError(problems)

    # ==================== NUMERICS ====================

    def to_matrix(self) -> MatrixForm:
        """Assemble the sparse constraint matrix and bound vectors."""
        rows: List[int] = []
        cols: List[int] = []
        vals: List[float] = []
        for i, con in enumerate(self.constraints):
            for j, value in con.coefficients.items():
                rows.append(i)
                cols.append(j)
                vals.append(value)
        m, n = self.num_constraints, self.num_variables
        A = sparse.csr_matrix((vals, (rows, cols)), shape=(m, n), dtype=float)
        c = np.zeros(n)
        for j, value in self.objective.items():
            c[j] = value
        return MatrixForm(
            A=A,
            b=np.array([con.rhs for con in self.constraints], dtype=float),
            sense=np.array([_SENSE_CODE[con.relation] for con in self.constraints], dtype=np.int8),
            c=c,
            constant=self.objective_constant,
            lower=np.array([var.lower for var in self.variables], dtype=float),
            upper=np.array([var.upper for var in self.variables], dtype=float),
            is_binary=np.array([var.is_binary for var in self.variables], dtype=bool),
        )

    def evaluate_objective(self, values: np.ndarray) -> float:
        return self.objective_constant + sum(coef * values[j] for j, coef in self.objective.items())

    def max_violation(self, values: np.ndarray) -> float:
        """Largest absolute bound or constraint violation of a point."""
        values = np.asarray(values, dtype=float)
        worst = 0.0
        for j, var in enumerate(self.variables):
            worst = max(worst, var.lower - values[j], values[j] - var.upper)
        for con in self.constraints:
            activity = sum(coef * values[j] for j, coef in con.coefficients.items())
            if con.relation is Relation.LE:
                worst = max(worst, activity - con.rhs)
            elif con.relation is Relation.GE:
                worst = max(worst, con.rhs - activity)
            else:
                worst = max(worst, abs(activity - con.rhs))
        return worst

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, MilpProblem):
            return NotImplemented
        return (
            self.name == other.name
            and self.variables == other.variables
            and self.constraints == other.constraints
            and self.objective == other.objective
            and self.objective_constant == other.objective_constant
        )

    def __repr__(self) -> str:
        return (
            f"MilpProblem({self.name!r}, variables={self.num_variables}, "
            f"binaries={len(self.binary_indices)}, constraints={self.num_constraints})"
        )


@dataclass(eq=False)
class MilpSolution:
    """Result of an LP or MILP solve."""
    status: SolveStatus
    values: Optional[np.ndarray] = None
    objective: Optional[float] = None
    bound: Optional[float] = None
    nodes: int = 0
    iterations: int = 0
    solve_seconds: float = 0.0
    message: str = ""
    names: Tuple[str, ...] = field(default=(), repr=False)

    @property
    def has_values(self) -> bool:
        return self.values is not None

    def value(self, name: str) -> float:
        """Value of a variable by name."""
        if self.values is None:
            raise ValueError(f"no solution values available (status {self.status.value})")
        return float(self.values[self.names.index(name)])
