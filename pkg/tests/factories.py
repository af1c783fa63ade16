"""Small systems, profile sets and reference LP solves shared by the test modules."""
import itertools
import math
from typing import Dict, Iterable, Mapping, Optional, Sequence, Union

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, linprog, milp

from gridplan.milp import MilpProblem
from gridplan.profile_synthesis import RepresentativeProfileSet
from gridplan.schemas.grid import GridModel, PlanningHorizon

Series = Union[float, Sequence[float]]


def make_horizon(**overrides) -> PlanningHorizon:
    fields = dict(
        num_epochs=1,
        years_per_epoch=1,
        weekdays_per_quarter=65,
        weekend_days_per_quarter=26,
        intervals_per_day=4,
        interval_hours=6.0,
        maintenance_ratio=0.0,
    )
    fields.update(overrides)
    return PlanningHorizon(**fields)


def make_grid(
    buses: Iterable[str],
    lines: Sequence[dict] = (),
    generators: Sequence[dict] = (),
    renewables: Sequence[dict] = (),
    horizon: Optional[PlanningHorizon] = None,
    base_mva: float = 100.0,
) -> GridModel:
    return GridModel.model_validate(
        {
            "name": "test",
            "base_mva": base_mva,
            "horizon": (horizon or make_horizon()).model_dump(),
            "buses": [{"id": bus} for bus in buses],
            "lines": list(lines),
            "generators": list(generators),
            "renewables": list(renewables),
        }
    )


def _values(series: Series, intervals: int) -> Sequence[float]:
    if isinstance(series, (int, float)):
        return [float(series)] * intervals
    assert len(series) == intervals
    return [float(v) for v in series]


def uniform_profiles(
    grid: GridModel,
    ratings: Optional[Mapping[str, Series]] = None,
    renewables: Optional[Mapping[str, Series]] = None,
    loads: Optional[Mapping[str, Series]] = None,
    weekend_factor: float = 1.0,
    growth: Optional[Sequence[float]] = None,
) -> RepresentativeProfileSet:
    """The same typical day in every epoch and quarter; unlisted lines keep their static rating."""
    horizon = grid.horizon
    n = horizon.intervals_per_day
    growth = growth or [1.0] * horizon.num_epochs
    ratings = dict(ratings or {})
    renewables = dict(renewables or {})
    loads = dict(loads or {})
    rating_rows, renewable_rows, load_rows = [], [], []
    for p in horizon.epochs:
        for q in horizon.quarters:
            for line in grid.lines:
                for t, value in enumerate(_values(ratings.get(line.id, line.static_rating), n), start=1):
                    rating_rows.append((p, q, "ALL", t, line.id, value))
            for plant in grid.renewables:
                for t, value in enumerate(_values(renewables.get(plant.id, 0.0), n), start=1):
                    renewable_rows.append((p, q, "ALL", t, plant.id, value))
            for day_type in ("WD", "WE"):
                factor = weekend_factor if day_type == "WE" else 1.0
                for bus in grid.bus_ids:
                    for t, value in enumerate(_values(loads.get(bus, 0.0), n), start=1):
                        load_rows.append((p, q, day_type, t, bus, value * factor * growth[p - 1]))
    return RepresentativeProfileSet.from_rows(rating_rows, renewable_rows, load_rows)


def reference_lp(problem: MilpProblem, fixed: Optional[Dict[int, float]] = None):
    """LP relaxation solved by scipy's linprog; returns (status, objective)."""
    form = problem.to_matrix()
    lower, upper = form.lower.copy(), form.upper.copy()
    for index, value in (fixed or {}).items():
        lower[index] = upper[index] = value
    A = form.A.toarray()
    le = form.sense == -1
    ge = form.sense == 1
    eq = form.sense == 0
    A_ub = np.vstack([A[le], -A[ge]]) if (le.any() or ge.any()) else None
    b_ub = np.concatenate([form.b[le], -form.b[ge]]) if A_ub is not None else None
    result = linprog(
        form.c,
        A_ub=A_ub,
        b_ub=b_ub,
        A_eq=A[eq] if eq.any() else None,
        b_eq=form.b[eq] if eq.any() else None,
        bounds=[
            (None if math.isinf(lo) else lo, None if math.isinf(hi) else hi) for lo, hi in zip(lower, upper)
        ],
        method="highs",
    )
    if result.status == 2:
        return "infeasible", None
    if result.status == 3:
        return "unbounded", None
    assert result.status == 0, result.message
    return "optimal", float(result.fun) + form.constant


def enumerate_binaries(problem: MilpProblem, indices: Optional[Sequence[int]] = None):
    """Best objective over every assignment of the given binaries, each evaluated by LP."""
    indices = list(problem.binary_indices if indices is None else indices)
    best = None
    for assignment in itertools.product((0.0, 1.0), repeat=len(indices)):
        status, objective = reference_lp(problem, dict(zip(indices, assignment)))
        if status == "optimal" and (best is None or objective < best):
            best = objective
    return best


def reference_milp(problem: MilpProblem):
    """Optimal objective from scipy.optimize.milp, or None when infeasible."""
    form = problem.to_matrix()
    constraints = []
    if form.A.shape[0]:
        constraints.append(
            LinearConstraint(
                form.A,
                np.where(form.sense >= 0, form.b, -np.inf),
                np.where(form.sense <= 0, form.b, np.inf),
            )
        )
    result = milp(
        form.c,
        constraints=constraints,
        integrality=form.is_binary.astype(int),
        bounds=Bounds(form.lower, form.upper),
    )
    if result.status == 2:
        return None
    assert result.status == 0, result.message
    return float(result.fun) + form.constant
