"""
Daily security-constrained unit commitment with load shedding and curtailment.

One MILP per typical day (epoch, quarter, day type) at the profile resolution.
Buses whose demand covers their local renewable availability may shed load but
not curtail; buses with a renewable surplus may curtail but not shed. Shedding is
priced at a penalty far above every marginal cost, so it is used only when no
dispatch can serve the demand.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, FrozenSet, List, Mapping, Optional, Sequence, Tuple, Union

from gridplan.core.exceptions import ConfigError, GridPlanError, ModelInfeasibleError, ResidualCheckError
from gridplan.grid_model import EpochView
from gridplan.milp import MilpProblem, MilpSolution, Relation, SolverConfig, SolveStatus, solve_milp
from gridplan.profile_synthesis import DayProfile, RepresentativeProfileSet
from gridplan.schemas.grid import PlanningHorizon
from gridplan.schemas.study import CaseName
from gridplan.utils import atomic_write_csv

logger = logging.getLogger(__name__)

DEFAULT_SHED_PENALTY = 10000.0
PENALTY_FLOOR_RATIO = 10.0
RESIDUAL_TOLERANCE = 1e-6

DayKey = Tuple[int, int, str]

SHEDDING_COLUMNS = ["epoch", "quarter", "day_type", "interval", "bus_id", "shed_mw", "curtail_mw"]
DAILY_COLUMNS = ["epoch", "quarter", "day_type", "operating_cost_usd", "total_generation_mwh", "total_shed_mwh"]
QUARTER_COLUMNS = [
    "case",
    "epoch",
    "quarter",
    "day_type",
    "daily_operating_cost_usd",
    "daily_generation_mwh",
    "quarter_operating_cost_musd",
    "quarter_generation_gwh",
]
DAY_COLUMNS = ["interval", "kind", "entity_id", "value"]
FAILURE_COLUMNS = ["epoch", "quarter", "day_type", "message"]


@dataclass(frozen=True)
class ScucInstance:
    """One typical day of one epoch view."""
    view: EpochView
    day: DayProfile
    interval_hours: float
    shed_penalty: float = DEFAULT_SHED_PENALTY
    reserve_required: bool = True
    initial_commitment: Mapping[str, int] = field(default_factory=dict)

    def __post_init__(self):
        lengths = {len(series) for group in (self.day.loads, self.day.ratings, self.day.renewables) for series in group.values()}
        if len(lengths) > 1:
            raise ValueError(f"profile slices have different lengths: {sorted(lengths)}")
        for bus in self.view.bus_ids:
            if bus not in self.day.loads:
                raise ValueError(f"no load slice for bus {bus}")
        for line in self.view.lines:
            if line.id not in self.day.ratings:
                raise ValueError(f"no rating slice for line {line.id}")
        for plant in self.view.renewables:
            if plant.id not in self.day.renewables:
                raise ValueError(f"no availability slice for renewable {plant.id}")
        highest = max((unit.marginal_cost for unit in self.view.generators), default=0.0)
        if self.shed_penalty < PENALTY_FLOOR_RATIO * highest or not self.shed_penalty > 0:
            raise ConfigError(
                f"shed penalty {self.shed_penalty} $/MWh must be at least {PENALTY_FLOOR_RATIO:g}x "
                f"the highest marginal cost ({highest} $/MWh)"
            )

    @property
    def key(self) -> DayKey:
        return (self.day.epoch, self.day.quarter, self.day.day_type)

    @property
    def num_intervals(self) -> int:
        return len(next(iter(self.day.loads.values())))

    def bus_availability(self) -> Dict[str, Tuple[float, ...]]:
        """Renewable availability per bus and interval, in MW."""
        totals = {bus: [0.0] * self.num_intervals for bus in self.view.bus_ids}
        for plant in self.view.renewables:
            for i, value in enumerate(self.day.renewables[plant.id]):
                totals[plant.bus][i] += value
        return {bus: tuple(values) for bus, values in totals.items()}


@dataclass(frozen=True)
class CurtailmentPartition:
    """Bus-interval pairs (interval numbered from 1) with a renewable deficit (st1) or surplus (st2)."""
    st1: FrozenSet[Tuple[str, int]]
    st2: FrozenSet[Tuple[str, int]]


def classify_buses(day: DayProfile, view: EpochView) -> CurtailmentPartition:
    """Split bus-intervals by the sign of demand minus local renewable availability."""
    intervals = len(next(iter(day.loads.values()))) if day.loads else 0
    availability = {bus: [0.0] * intervals for bus in view.bus_ids}
    for plant in view.renewables:
        for i, value in enumerate(day.renewables[plant.id]):
            availability[plant.bus][i] += value
    st1, st2 = set(), set()
    for bus in view.bus_ids:
        for i in range(intervals):
            if day.loads[bus][i] - availability[bus][i] >= 0:
                st1.add((bus, i + 1))
            else:
                st2.add((bus, i + 1))
    return CurtailmentPartition(frozenset(st1), frozenset(st2))


@dataclass
class ScucVariableMap:
    """Column indices keyed by (entity, interval)."""
    problem: MilpProblem
    base_mva: float
    commitment: Dict[Tuple[str, int], int] = field(default_factory=dict)
    startup: Dict[Tuple[str, int], int] = field(default_factory=dict)
    dispatch: Dict[Tuple[str, int], int] = field(default_factory=dict)
    reserve: Dict[Tuple[str, int], int] = field(default_factory=dict)
    flow: Dict[Tuple[str, int], int] = field(default_factory=dict)
    angle: Dict[Tuple[str, int], int] = field(default_factory=dict)
    shed: Dict[Tuple[str, int], int] = field(default_factory=dict)
    curtail: Dict[Tuple[str, int], int] = field(default_factory=dict)


@dataclass
class ScucSolution:
    """Commitment, dispatch, shedding and curtailment of one day (MW, $)."""
    key: DayKey
    status: SolveStatus
    commitment: Dict[Tuple[str, int], int]
    startup: Dict[Tuple[str, int], float]
    dispatch: Dict[Tuple[str, int], float]
    reserve: Dict[Tuple[str, int], float]
    flows: Dict[Tuple[str, int], float]
    angles: Dict[Tuple[str, int], float]
    shedding: Dict[Tuple[str, int], float]
    curtailment: Dict[Tuple[str, int], float]
    renewable_delivered: Dict[Tuple[str, int], float]
    operating_cost: float
    penalty: float
    objective: float
    interval_hours: float

    @property
    def shed_energy(self) -> float:
        return math.fsum(mw * self.interval_hours for _, mw in sorted(self.shedding.items()))

    @property
    def curtailed_energy(self) -> float:
        return math.fsum(mw * self.interval_hours for _, mw in sorted(self.curtailment.items()))

    @property
    def generation_energy(self) -> float:
        thermal = math.fsum(mw for _, mw in sorted(self.dispatch.items()))
        renewable = math.fsum(mw for _, mw in sorted(self.renewable_delivered.items()))
        return (thermal + renewable) * self.interval_hours


# ==================== MODEL BUILDING ====================

def build_scuc(instance: ScucInstance) -> Tuple[MilpProblem, ScucVariableMap]:
    """
    Assemble the daily SCUC MILP in per-unit.

    Returns:
        Tuple[MilpProblem, ScucVariableMap]: the problem and its variable map
    """
    view = instance.view
    base = view.base_mva
    dt = instance.interval_hours
    intervals = range(1, instance.num_intervals + 1)
    epoch, quarter, day_type = instance.key
    prob = MilpProblem(f"scuc_{view.case.value}_{epoch}_{quarter}_{day_type}")
    vmap = ScucVariableMap(prob, base)
    availability = instance.bus_availability()
    partition = classify_buses(instance.day, view)
    ref = view.reference_bus

    for unit in view.generators:
        p_min, p_max = unit.limits(epoch)
        for t in intervals:
            u = prob.add_binary(f"u_{unit.id}_{t}")
            v = prob.add_variable(f"v_{unit.id}_{t}", 0.0, 1.0)
            p = prob.add_variable(f"p_{unit.id}_{t}", 0.0, p_max / base)
            vmap.commitment[(unit.id, t)] = u
            vmap.startup[(unit.id, t)] = v
            vmap.dispatch[(unit.id, t)] = p
            prob.add_objective_terms(
                {p: unit.marginal_cost * base * dt, u: unit.online_cost, v: unit.startup_cost}
            )
            prob.add_constraint(f"pmin_{unit.id}_{t}", {p: 1.0, u: -p_min / base}, Relation.GE, 0.0)
            if instance.reserve_required:
                r = prob.add_variable(f"r_{unit.id}_{t}", 0.0, unit.reserve_capability / base)
                vmap.reserve[(unit.id, t)] = r
                prob.add_constraint(f"pmax_{unit.id}_{t}", {p: 1.0, r: 1.0, u: -p_max / base}, Relation.LE, 0.0)
                prob.add_constraint(
                    f"rmax_{unit.id}_{t}", {r: 1.0, u: -unit.reserve_capability / base}, Relation.LE, 0.0
                )
            else:
                prob.add_constraint(f"pmax_{unit.id}_{t}", {p: 1.0, u: -p_max / base}, Relation.LE, 0.0)
            if t == 1:
                u0 = float(instance.initial_commitment.get(unit.id, 0))
                prob.add_constraint(f"startup_{unit.id}_{t}", {v: 1.0, u: -1.0}, Relation.GE, -u0)
            else:
                u_prev = vmap.commitment[(unit.id, t - 1)]
                prob.add_constraint(f"startup_{unit.id}_{t}", {v: 1.0, u: -1.0, u_prev: 1.0}, Relation.GE, 0.0)
                if unit.ramp_limit is not None:
                    p_prev = vmap.dispatch[(unit.id, t - 1)]
                    ramp = unit.ramp_limit / base
                    prob.add_constraint(f"ramp_up_{unit.id}_{t}", {p: 1.0, p_prev: -1.0}, Relation.LE, ramp)
                    prob.add_constraint(f"ramp_dn_{unit.id}_{t}", {p_prev: 1.0, p: -1.0}, Relation.LE, ramp)

    if instance.reserve_required:
        for t in intervals:
            pool = {vmap.reserve[(unit.id, t)]: 1.0 for unit in view.generators}
            for unit in view.generators:
                terms = dict(pool)
                terms[vmap.reserve[(unit.id, t)]] -= 1.0
                terms[vmap.dispatch[(unit.id, t)]] = -1.0
                prob.add_constraint(f"reserve_{unit.id}_{t}", terms, Relation.GE, 0.0)

    for t in intervals:
        injections: Dict[str, Dict[int, float]] = {bus: {} for bus in view.bus_ids}
        for bus in view.bus_ids:
            bound = (0.0, 0.0) if bus == ref else (-math.inf, math.inf)
            vmap.angle[(bus, t)] = prob.add_variable(f"theta_{bus}_{t}", *bound)
        for unit in view.generators:
            injections[unit.bus][vmap.dispatch[(unit.id, t)]] = 1.0
        for line in view.lines:
            rating = instance.day.ratings[line.id][t - 1] / base
            f = prob.add_variable(f"flow_{line.id}_{t}", -rating, rating)
            vmap.flow[(line.id, t)] = f
            injections[line.from_bus][f] = injections[line.from_bus].get(f, 0.0) - 1.0
            injections[line.to_bus][f] = injections[line.to_bus].get(f, 0.0) + 1.0
            susceptance = 1.0 / line.reactance
            prob.add_constraint(
                f"flow_def_{line.id}_{t}",
                {f: 1.0, vmap.angle[(line.from_bus, t)]: -susceptance, vmap.angle[(line.to_bus, t)]: susceptance},
                Relation.EQ,
                0.0,
            )
        for bus in view.bus_ids:
            demand = instance.day.loads[bus][t - 1]
            renewable = availability[bus][t - 1]
            deficit = max(0.0, demand - renewable) if (bus, t) in partition.st1 else 0.0
            surplus = max(0.0, renewable - demand) if (bus, t) in partition.st2 else 0.0
            s = prob.add_variable(f"shed_{bus}_{t}", 0.0, deficit / base)
            c = prob.add_variable(f"curtail_{bus}_{t}", 0.0, surplus / base)
            vmap.shed[(bus, t)] = s
            vmap.curtail[(bus, t)] = c
            prob.add_objective_terms({s: instance.shed_penalty * base * dt})
            terms = {**injections[bus], s: 1.0, c: -1.0}
            prob.add_constraint(f"balance_{bus}_{t}", terms, Relation.EQ, (demand - renewable) / base)

    logger.debug(
        f"Built {prob.name}: {prob.num_variables} variables ({len(prob.binary_indices)} binary), "
        f"{prob.num_constraints} constraints"
    )
    return prob, vmap


# ==================== SOLUTIONS ====================

def extract_scuc_solution(solution: MilpSolution, vmap: ScucVariableMap, instance: ScucInstance) -> ScucSolution:
    """
    Interpret solver output as a daily schedule.

    Raises:
        ModelInfeasibleError: the solve produced no usable point
        ResidualCheckError: the point violates the model, or the two readings of
        the reserve requirement disagree
    """
    if not solution.has_values:
        raise ModelInfeasibleError(f"SCUC {instance.key} ended {solution.status.value}: {solution.message}".rstrip(": "))
    values = solution.values
    violation = vmap.problem.max_violation(values)
    if violation > RESIDUAL_TOLERANCE:
        raise ResidualCheckError(f"SCUC {instance.key} solution violates its model by {violation:.3e}")

    base = vmap.base_mva
    dt = instance.interval_hours
    commitment = {key: int(round(values[j])) for key, j in vmap.commitment.items()}
    startup = {key: float(values[j]) for key, j in vmap.startup.items()}
    dispatch = {key: values[j] * base for key, j in vmap.dispatch.items()}
    reserve = {key: values[j] * base for key, j in vmap.reserve.items()}
    shedding = {key: values[j] * base for key, j in vmap.shed.items()}
    curtailment = {key: values[j] * base for key, j in vmap.curtail.items()}
    _check_reserve_forms(instance, vmap, values)

    availability = instance.bus_availability()
    delivered = {
        (bus, t): availability[bus][t - 1] - curtailment[(bus, t)] for bus, t in sorted(curtailment)
    }
    costs = {unit.id: unit for unit in instance.view.generators}
    operating = math.fsum(
        costs[unit].marginal_cost * mw * dt for (unit, _), mw in sorted(dispatch.items())
    ) + math.fsum(costs[unit].online_cost * flag for (unit, _), flag in sorted(commitment.items())) + math.fsum(
        costs[unit].startup_cost * values[vmap.startup[(unit, t)]] for (unit, t) in sorted(vmap.startup)
    )
    penalty = math.fsum(instance.shed_penalty * mw * dt for _, mw in sorted(shedding.items()))
    return ScucSolution(
        key=instance.key,
        status=solution.status,
        commitment=commitment,
        startup=startup,
        dispatch=dispatch,
        reserve=reserve,
        flows={key: values[j] * base for key, j in vmap.flow.items()},
        angles={key: float(values[j]) for key, j in vmap.angle.items()},
        shedding=shedding,
        curtailment=curtailment,
        renewable_delivered=delivered,
        operating_cost=operating,
        penalty=penalty,
        objective=float(solution.objective),
        interval_hours=dt,
    )


def _check_reserve_forms(instance: ScucInstance, vmap: ScucVariableMap, values) -> None:
    """The printed reserve row and its form without the unit's own reserve must agree."""
    if not instance.reserve_required:
        return
    for t in range(1, instance.num_intervals + 1):
        for unit in instance.view.generators:
            total = math.fsum(values[vmap.reserve[(m.id, t)]] for m in instance.view.generators)
            printed = total - values[vmap.dispatch[(unit.id, t)]] - values[vmap.reserve[(unit.id, t)]]
            others = math.fsum(
                values[vmap.reserve[(m.id, t)]] for m in instance.view.generators if m.id != unit.id
            ) - values[vmap.dispatch[(unit.id, t)]]
            if (printed >= -RESIDUAL_TOLERANCE) != (others >= -RESIDUAL_TOLERANCE):
                raise ResidualCheckError(f"reserve forms disagree for {unit.id} at interval {t}")


def solve_scuc(instance: ScucInstance, config: Optional[SolverConfig] = None) -> ScucSolution:
    problem, vmap = build_scuc(instance)
    solution = solve_milp(problem, config)
    if solution.status is SolveStatus.LIMIT and solution.has_values:
        logger.warning(f"SCUC {instance.key} stopped at a limit ({solution.message}); using the incumbent")
    return extract_scuc_solution(solution, vmap, instance)


# ==================== BATCH ====================

@dataclass
class ScucBatch:
    """Solutions of every typical day of a case, plus per-day failures."""
    case: CaseName
    horizon: PlanningHorizon
    solutions: Dict[DayKey, ScucSolution] = field(default_factory=dict)
    failures: Dict[DayKey, str] = field(default_factory=dict)

    @property
    def keys(self) -> List[DayKey]:
        return sorted([*self.solutions, *self.failures])


def day_instance(
    view: EpochView,
    profiles: RepresentativeProfileSet,
    horizon: PlanningHorizon,
    quarter: int,
    day_type: str,
    shed_penalty: float = DEFAULT_SHED_PENALTY,
    reserve_required: bool = True,
    initial_commitment: Optional[Mapping[str, int]] = None,
) -> ScucInstance:
    """SCUC instance of one typical day of an epoch view."""
    return ScucInstance(
        view=view,
        day=profiles.day(view.epoch, quarter, day_type),
        interval_hours=horizon.interval_hours,
        shed_penalty=shed_penalty,
        reserve_required=reserve_required,
        initial_commitment=dict(initial_commitment or {}),
    )


def run_batch(
    views: Mapping[int, EpochView],
    profiles: RepresentativeProfileSet,
    horizon: PlanningHorizon,
    case: Optional[CaseName] = None,
    shed_penalty: float = DEFAULT_SHED_PENALTY,
    reserve_required: bool = True,
    initial_commitment: Optional[Mapping[str, int]] = None,
    config: Optional[SolverConfig] = None,
    workers: int = 1,
) -> ScucBatch:
    """
    Solve every typical day of every epoch view.

    Failed days are recorded in ``failures`` and the remaining days still run.
    """
    if case is None:
        case = next(iter(views.values())).case if views else CaseName.FR
    keys = [(p, q, d) for p in sorted(views) for q in horizon.quarters for d in horizon.day_types]
    batch = ScucBatch(case=case, horizon=horizon)

    def solve_day(key: DayKey) -> Tuple[DayKey, Union[ScucSolution, str]]:
        epoch, quarter, day_type = key
        try:
            instance = day_instance(
                views[epoch], profiles, horizon, quarter, day_type, shed_penalty, reserve_required, initial_commitment
            )
            return key, solve_scuc(instance, config)
        except KeyError as e:
            return key, f"profiles lack {e}"
        except (GridPlanError, ValueError) as e:
            return key, str(e)

    if workers > 1 and len(keys) > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            outcomes = list(executor.map(solve_day, keys))
    else:
        outcomes = [solve_day(key) for key in keys]

    for key, outcome in outcomes:
        if isinstance(outcome, str):
            logger.warning(f"{case.value} day {key} failed: {outcome}")
            batch.failures[key] = outcome
        else:
            batch.solutions[key] = outcome
    logger.info(f"{case.value}: solved {len(batch.solutions)} of {len(keys)} typical days")
    return batch


def quarter_summary(batch: ScucBatch) -> List[tuple]:
    """Daily and quarter-scaled cost and generation per typical day."""
    horizon = batch.horizon
    rows = []
    for key in sorted(batch.solutions):
        sol = batch.solutions[key]
        epoch, quarter, day_type = key
        weight = horizon.day_weight(day_type)
        rows.append(
            (
                batch.case.value,
                epoch,
                quarter,
                day_type,
                sol.operating_cost,
                sol.generation_energy,
                sol.operating_cost * weight / 1e6,
                sol.generation_energy * weight / 1e3,
            )
        )
    return rows


def shedding_rows(batch: ScucBatch) -> List[tuple]:
    rows = []
    for key in sorted(batch.solutions):
        sol = batch.solutions[key]
        for bus, t in sorted(sol.shedding, key=lambda item: (item[1], item[0])):
            rows.append((*key, t, bus, sol.shedding[(bus, t)], sol.curtailment[(bus, t)]))
    return rows


def daily_rows(batch: ScucBatch) -> List[tuple]:
    return [
        (*key, sol.operating_cost, sol.generation_energy, sol.shed_energy)
        for key, sol in sorted(batch.solutions.items())
    ]


def day_detail_rows(sol: ScucSolution) -> List[tuple]:
    rows = []
    groups = (
        ("commitment", sol.commitment),
        ("dispatch_mw", sol.dispatch),
        ("reserve_mw", sol.reserve),
        ("flow_mw", sol.flows),
        ("shed_mw", sol.shedding),
        ("curtail_mw", sol.curtailment),
    )
    for kind, values in groups:
        for entity, t in sorted(values, key=lambda item: (item[1], item[0])):
            value = values[(entity, t)]
            rows.append((t, kind, entity, float(value)))
    return sorted(rows, key=lambda row: (row[0], [g[0] for g in groups].index(row[1]), row[2]))


def write_batch(batch: ScucBatch, directory: Union[str, Path]) -> List[Path]:
    """Write shedding, daily, quarter and per-day files of a batch."""
    directory = Path(directory)
    written = [
        atomic_write_csv(directory / "shedding.csv", SHEDDING_COLUMNS, shedding_rows(batch)),
        atomic_write_csv(directory / "daily_summary.csv", DAILY_COLUMNS, daily_rows(batch)),
        atomic_write_csv(directory / "quarter_summary.csv", QUARTER_COLUMNS, quarter_summary(batch)),
        atomic_write_csv(
            directory / "failures.csv",
            FAILURE_COLUMNS,
            [(*key, message) for key, message in sorted(batch.failures.items())],
        ),
    ]
    for (epoch, quarter, day_type), sol in sorted(batch.solutions.items()):
        path = directory / "days" / f"epoch{epoch}_q{quarter}_{day_type}.csv"
        written.append(atomic_write_csv(path, DAY_COLUMNS, day_detail_rows(sol)))
    logger.info(f"Wrote {batch.case.value} batch results to {directory}")
    return written
