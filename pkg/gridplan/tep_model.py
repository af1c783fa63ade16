"""
Multi-epoch transmission expansion planning.

The climate-informed model uses time-varying line ratings and renewable
availability from the representative profiles; the traditional model replaces
them with per-quarter static values (minimum rating, mean availability). Both are
assembled in per-unit on the grid's MVA base with costs scaled back to dollars,
so objective values are in $.
"""
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import polars as pl

from gridplan.core.exceptions import HorizonMismatchError, ModelInfeasibleError, ResidualCheckError
from gridplan.milp import MilpProblem, MilpSolution, Relation, SolverConfig, SolveStatus, solve_lp, solve_milp
from gridplan.profile_synthesis import RepresentativeProfileSet
from gridplan.schemas.grid import GridModel
from gridplan.schemas.results import CostBlock, LineBuild, TransmissionPlan
from gridplan.schemas.study import CaseName, TepVariant

logger = logging.getLogger(__name__)

DEFAULT_THETA_BOUND = 0.6
DEFAULT_SHED_PENALTY = 10000.0
RESIDUAL_TOLERANCE = 1e-6

# (epoch, quarter, day type, interval)
Snapshot = Tuple[int, int, str, int]


@dataclass(frozen=True)
class TepInstance:
    """A planning problem: system, profiles and model options."""
    grid: GridModel
    profiles: RepresentativeProfileSet
    variant: TepVariant = TepVariant.CI
    shed_allowed: bool = False
    theta_bound: float = DEFAULT_THETA_BOUND
    shed_penalty: float = DEFAULT_SHED_PENALTY

    def __post_init__(self):
        if self.variant is TepVariant.BOTH:
            raise ValueError("a TEP instance is either ci or traditional")
        if not 0 < self.theta_bound <= math.pi / 2:
            raise ValueError(f"theta_bound must lie in (0, pi/2], got {self.theta_bound}")
        if not self.shed_penalty > 0:
            raise ValueError("shed_penalty must be positive")

    @property
    def horizon(self):
        return self.grid.horizon

    def snapshots(self, epochs: Optional[Iterable[int]] = None) -> List[Snapshot]:
        horizon = self.grid.horizon
        return [
            (p, q, d, t)
            for p in (epochs if epochs is not None else horizon.epochs)
            for q in horizon.quarters
            for d in horizon.day_types
            for t in horizon.intervals
        ]

    def with_variant(self, variant: TepVariant) -> "TepInstance":
        return TepInstance(self.grid, self.profiles, variant, self.shed_allowed, self.theta_bound, self.shed_penalty)


@dataclass
class TepVariableMap:
    """Column indices of the TEP variables, keyed by entity and snapshot."""
    problem: MilpProblem
    base_mva: float
    snapshots: List[Snapshot]
    epochs: List[int]
    thermal: Dict[Tuple[str, Snapshot], int] = field(default_factory=dict)
    renewable: Dict[Tuple[str, Snapshot], int] = field(default_factory=dict)
    flow: Dict[Tuple[str, Snapshot], int] = field(default_factory=dict)
    angle: Dict[Tuple[str, Snapshot], int] = field(default_factory=dict)
    shed: Dict[Tuple[str, Snapshot], int] = field(default_factory=dict)
    operational: Dict[Tuple[str, int], int] = field(default_factory=dict)
    built: Dict[Tuple[str, int], int] = field(default_factory=dict)


@dataclass
class TepSolution:
    """An investment plan with its dispatch and costs (MW, rad, $)."""
    status: SolveStatus
    variant: TepVariant
    builds: Dict[str, int]
    operational: Dict[Tuple[str, int], int]
    built: Dict[Tuple[str, int], int]
    thermal: Dict[Tuple[str, Snapshot], float]
    renewable: Dict[Tuple[str, Snapshot], float]
    flows: Dict[Tuple[str, Snapshot], float]
    angles: Dict[Tuple[str, Snapshot], float]
    shed: Dict[Tuple[str, Snapshot], float]
    op_cost: float
    cap_cost: float
    shed_cost: float
    objective: float
    bound: Optional[float]
    nodes: int
    solve_seconds: float

    @property
    def total(self) -> float:
        return self.op_cost + self.cap_cost + self.shed_cost

    @property
    def built_lines(self) -> List[str]:
        return sorted(self.builds)

    def to_plan(self, study: str, base_case: CaseName, horizon) -> TransmissionPlan:
        builds = [LineBuild(line_id=k, construction_epoch=p) for k, p in sorted(self.builds.items())]
        shed_energy = math.fsum(
            mw * horizon.interval_hours * horizon.day_weight(snap[2]) * horizon.years_per_epoch
            for (_, snap), mw in sorted(self.shed.items())
        )
        return TransmissionPlan(
            study=study,
            variant=self.variant.value,
            base_case=base_case,
            num_epochs=horizon.num_epochs,
            builds=builds,
            costs=CostBlock(
                generation_cost=self.op_cost,
                transmission_investment_cost=self.cap_cost,
                total=self.total,
            ),
            shed_energy_mwh=shed_energy,
        )


# ==================== COSTS ====================

def capital_cost(builds: Mapping[str, int], grid: GridModel) -> float:
    """
    Construction plus maintenance cost of a plan.

    Args:
        builds: Candidate line id -> construction epoch
        grid: System holding the candidates and the horizon

    Returns:
        float: sum of C_k * (1 + (N^P - p + 1) * R^M * N^Y) in $
    """
    return math.fsum(
        grid.line(line_id).construction_cost * _capital_factor(grid, epoch)
        for line_id, epoch in sorted(builds.items())
    )


def _capital_factor(grid: GridModel, epoch: int) -> float:
    horizon = grid.horizon
    return 1 + (horizon.num_epochs - epoch + 1) * grid.maintenance_ratio * horizon.years_per_epoch


def operation_cost(dispatch: Mapping[Tuple[str, Snapshot], float], grid: GridModel) -> float:
    """Thermal generation cost in $ of a dispatch in MW keyed by (unit id, snapshot)."""
    horizon = grid.horizon
    costs = {unit.id: unit.marginal_cost for unit in grid.generators}
    return math.fsum(
        horizon.years_per_epoch * horizon.day_weight(snap[2]) * mw * horizon.interval_hours * costs[unit]
        for (unit, snap), mw in sorted(dispatch.items())
    )


# ==================== MODEL BUILDING ====================

class _TepBuilder:
    def __init__(
        self,
        instance: TepInstance,
        profiles: RepresentativeProfileSet,
        epochs: Sequence[int],
        day_types: Optional[Sequence[str]] = None,
        quarters: Optional[Sequence[int]] = None,
        force_built: bool = False,
        name: str = "tep",
    ):
        self.instance = instance
        self.grid = instance.grid
        self.profiles = profiles
        self.epochs = list(epochs)
        horizon = self.grid.horizon
        self.snapshots = [
            (p, q, d, t)
            for p in self.epochs
            for q in (quarters or horizon.quarters)
            for d in (day_types or horizon.day_types)
            for t in horizon.intervals
        ]
        self.force_built = force_built
        self.base = self.grid.base_mva
        self.problem = MilpProblem(name)
        self.vmap = TepVariableMap(self.problem, self.base, self.snapshots, self.epochs)

    def _weight(self, snap: Snapshot) -> float:
        """$ per MW of a snapshot: years x days x hours."""
        horizon = self.grid.horizon
        return horizon.years_per_epoch * horizon.day_weight(snap[2]) * horizon.interval_hours

    def build(self) -> Tuple[MilpProblem, TepVariableMap]:
        try:
            self._add_build_variables()
            for snap in self.snapshots:
                self._add_snapshot(snap)
        except KeyError as e:
            raise HorizonMismatchError(f"Profiles do not cover the planning problem: missing {e}") from e
        return self.problem, self.vmap

    def _add_build_variables(self) -> None:
        prob, vmap = self.problem, self.vmap
        for line in self.grid.candidate_lines:
            for p in self.epochs:
                if self.force_built:
                    vmap.operational[(line.id, p)] = prob.add_variable(f"u_{line.id}_{p}", 1.0, 1.0)
                    continue
                vmap.operational[(line.id, p)] = prob.add_binary(f"u_{line.id}_{p}")
                vmap.built[(line.id, p)] = prob.add_binary(f"v_{line.id}_{p}")
            if self.force_built:
                continue
            for i, p in enumerate(self.epochs):
                u, v = vmap.operational[(line.id, p)], vmap.built[(line.id, p)]
                prob.add_objective_terms({v: line.construction_cost * _capital_factor(self.grid, p)})
                if i == 0:
                    prob.add_constraint(f"first_build_{line.id}_{p}", {v: 1.0, u: -1.0}, Relation.EQ, 0.0)
                else:
                    u_prev = vmap.operational[(line.id, self.epochs[i - 1])]
                    prob.add_constraint(f"monotone_{line.id}_{p}", {u_prev: 1.0, u: -1.0}, Relation.LE, 0.0)
                    prob.add_constraint(
                        f"build_{line.id}_{p}", {v: 1.0, u: -1.0, u_prev: 1.0}, Relation.GE, 0.0
                    )
            prob.add_constraint(
                f"single_build_{line.id}",
                {vmap.built[(line.id, p)]: 1.0 for p in self.epochs},
                Relation.LE,
                1.0,
            )

    def _add_snapshot(self, snap: Snapshot) -> None:
        p, q, d, t = snap
        prob, vmap, base = self.problem, self.vmap, self.base
        tag = f"{p}_{q}_{d}_{t}"
        weight = self._weight(snap)
        theta = self.instance.theta_bound
        ref = self.grid.reference_bus

        injections: Dict[str, Dict[int, float]] = {bus: {} for bus in self.grid.bus_ids}
        for bus in self.grid.bus_ids:
            bound = (0.0, 0.0) if bus == ref else (-theta, theta)
            vmap.angle[(bus, snap)] = prob.add_variable(f"theta_{bus}_{tag}", *bound)

        for unit in self.grid.generators:
            low, high = unit.limits(p)
            j = prob.add_variable(f"pg_{unit.id}_{tag}", low / base, high / base)
            vmap.thermal[(unit.id, snap)] = j
            prob.add_objective_terms({j: weight * unit.marginal_cost * base})
            injections[unit.bus][j] = 1.0

        for plant in self.grid.renewables:
            available = self.profiles.renewable(plant.id, p, q, t) if plant.active_in(p) else 0.0
            low = min(plant.p_min, available) if plant.active_in(p) else 0.0
            j = prob.add_variable(f"pr_{plant.id}_{tag}", low / base, available / base)
            vmap.renewable[(plant.id, snap)] = j
            injections[plant.bus][j] = 1.0

        for line in self.grid.lines:
            rating = self.profiles.rating(line.id, p, q, t) / base
            f = prob.add_variable(f"flow_{line.id}_{tag}", -rating, rating)
            vmap.flow[(line.id, snap)] = f
            injections[line.from_bus][f] = injections[line.from_bus].get(f, 0.0) - 1.0
            injections[line.to_bus][f] = injections[line.to_bus].get(f, 0.0) + 1.0
            th_from = vmap.angle[(line.from_bus, snap)]
            th_to = vmap.angle[(line.to_bus, snap)]
            susceptance = 1.0 / line.reactance
            if not line.candidate:
                prob.add_constraint(
                    f"flow_def_{line.id}_{tag}",
                    {f: 1.0, th_from: -susceptance, th_to: susceptance},
                    Relation.EQ,
                    0.0,
                )
                continue
            u = vmap.operational[(line.id, p)]
            big_m = line.big_m if line.big_m is not None else 2 * theta / line.reactance
            prob.add_constraint(
                f"cand_def_up_{line.id}_{tag}",
                {f: 1.0, th_from: -susceptance, th_to: susceptance, u: big_m},
                Relation.LE,
                big_m,
            )
            prob.add_constraint(
                f"cand_def_lo_{line.id}_{tag}",
                {f: 1.0, th_from: -susceptance, th_to: susceptance, u: -big_m},
                Relation.GE,
                -big_m,
            )
            prob.add_constraint(f"cand_cap_up_{line.id}_{tag}", {f: 1.0, u: -rating}, Relation.LE, 0.0)
            prob.add_constraint(f"cand_cap_lo_{line.id}_{tag}", {f: 1.0, u: rating}, Relation.GE, 0.0)

        for bus in self.grid.buses:
            demand = self.profiles.load_mw(bus.id, p, q, d, t) / base
            terms = injections[bus.id]
            if self.instance.shed_allowed:
                s = prob.add_variable(f"shed_{bus.id}_{tag}", 0.0, demand)
                vmap.shed[(bus.id, snap)] = s
                prob.add_objective_terms({s: weight * self.instance.shed_penalty * base})
                terms = {**terms, s: 1.0}
            prob.add_constraint(f"balance_{bus.id}_{tag}", terms, Relation.EQ, demand)


def build_tep_ci(instance: TepInstance) -> Tuple[MilpProblem, TepVariableMap]:
    """
    Climate-informed TEP with time-varying ratings and renewable availability.

    Returns:
        Tuple[MilpProblem, TepVariableMap]: the MILP and its variable map
    """
    problem, vmap = _TepBuilder(instance, instance.profiles, instance.grid.horizon.epochs, name="tep_ci").build()
    logger.info(
        f"Built TEP-CI: {problem.num_variables} variables ({len(problem.binary_indices)} binary), "
        f"{problem.num_constraints} constraints"
    )
    return problem, vmap


def build_tep_traditional(instance: TepInstance) -> Tuple[MilpProblem, TepVariableMap]:
    """Traditional TEP: static per-quarter ratings (minimum) and availability (mean)."""
    static = instance.profiles.traditional()
    problem, vmap = _TepBuilder(instance, static, instance.grid.horizon.epochs, name="tep_traditional").build()
    logger.info(
        f"Built traditional TEP: {problem.num_variables} variables ({len(problem.binary_indices)} binary), "
        f"{problem.num_constraints} constraints"
    )
    return problem, vmap


def build_tep(instance: TepInstance) -> Tuple[MilpProblem, TepVariableMap]:
    if instance.variant is TepVariant.TRADITIONAL:
        return build_tep_traditional(instance)
    return build_tep_ci(instance)


# ==================== SOLUTIONS ====================

def extract_tep_solution(solution: MilpSolution, vmap: TepVariableMap, instance: TepInstance) -> TepSolution:
    """
    Interpret solver output as a plan in MW and $.

    Raises:
        ModelInfeasibleError: the solve produced no usable point
        ResidualCheckError: the point violates the model beyond tolerance
    """
    if not solution.has_values:
        raise ModelInfeasibleError(f"TEP solve ended {solution.status.value}: {solution.message}".rstrip(": "))
    values = solution.values
    violation = vmap.problem.max_violation(values)
    if violation > RESIDUAL_TOLERANCE:
        raise ResidualCheckError(f"TEP solution violates its model by {violation:.3e}")

    base = vmap.base_mva
    operational = {key: int(round(values[j])) for key, j in vmap.operational.items()}
    built = {key: int(round(values[j])) for key, j in vmap.built.items()}
    builds: Dict[str, int] = {}
    for (line_id, epoch), flag in sorted(operational.items(), key=lambda item: (item[0][0], item[0][1])):
        if flag and line_id not in builds:
            builds[line_id] = epoch
    thermal = {key: values[j] * base for key, j in vmap.thermal.items()}
    shed = {key: values[j] * base for key, j in vmap.shed.items()}
    horizon = instance.grid.horizon
    shed_cost = math.fsum(
        horizon.years_per_epoch * horizon.day_weight(snap[2]) * horizon.interval_hours * mw * instance.shed_penalty
        for (_, snap), mw in sorted(shed.items())
    )
    return TepSolution(
        status=solution.status,
        variant=instance.variant,
        builds=builds,
        operational=operational,
        built=built,
        thermal=thermal,
        renewable={key: values[j] * base for key, j in vmap.renewable.items()},
        flows={key: values[j] * base for key, j in vmap.flow.items()},
        angles={key: float(values[j]) for key, j in vmap.angle.items()},
        shed=shed,
        op_cost=operation_cost(thermal, instance.grid),
        cap_cost=capital_cost(builds, instance.grid),
        shed_cost=shed_cost,
        objective=float(solution.objective),
        bound=solution.bound,
        nodes=solution.nodes,
        solve_seconds=solution.solve_seconds,
    )


def diagnose_infeasibility(instance: TepInstance, config: Optional[SolverConfig] = None) -> Optional[str]:
    """
    First (epoch, quarter) that cannot be served even with every candidate built.

    Returns None when every typical day is feasible on its own.
    """
    profiles = instance.profiles.traditional() if instance.variant is TepVariant.TRADITIONAL else instance.profiles
    horizon = instance.grid.horizon
    for epoch in horizon.epochs:
        for quarter in horizon.quarters:
            for day_type in horizon.day_types:
                builder = _TepBuilder(
                    instance,
                    profiles,
                    [epoch],
                    day_types=[day_type],
                    quarters=[quarter],
                    force_built=True,
                    name=f"tep_check_{epoch}_{quarter}_{day_type}",
                )
                problem, _ = builder.build()
                result = solve_lp(problem, config)
                if result.status is SolveStatus.INFEASIBLE:
                    return (
                        f"epoch {epoch} quarter {quarter} ({day_type}) cannot be served "
                        f"even with every candidate line built"
                    )
    return None


def solve_tep(instance: TepInstance, config: Optional[SolverConfig] = None) -> TepSolution:
    """
    Build, solve and extract one TEP variant.

    Raises:
        ModelInfeasibleError: infeasible model (with a diagnostic naming the first
        uncovered epoch and quarter) or a limit without an incumbent
    """
    problem, vmap = build_tep(instance)
    started = time.perf_counter()
    solution = solve_milp(problem, config)
    logger.info(
        f"TEP {instance.variant.value}: {solution.status.value}, objective {solution.objective}, "
        f"{solution.nodes} nodes in {time.perf_counter() - started:.2f}s"
    )
    if solution.status is SolveStatus.INFEASIBLE:
        diagnostic = diagnose_infeasibility(instance, config)
        raise ModelInfeasibleError(f"TEP ({instance.variant.value}) is infeasible", diagnostic)
    if solution.status is SolveStatus.LIMIT and solution.has_values:
        logger.warning(f"TEP {instance.variant.value} stopped at a limit ({solution.message}); using the incumbent")
    return extract_tep_solution(solution, vmap, instance)


def line_flow_energy(solution: TepSolution, grid: GridModel) -> float:
    """Total absolute line-flow energy over the horizon, in MWh."""
    horizon = grid.horizon
    return math.fsum(
        abs(mw) * horizon.interval_hours * horizon.day_weight(snap[2]) * horizon.years_per_epoch
        for (_, snap), mw in sorted(solution.flows.items())
    )


COMPARISON_METRICS = (
    "transmission_investment_cost",
    "generation_cost",
    "total_cost",
    "built_lines",
    "line_flow_energy_mwh",
)


def compare_plans(ci: TepSolution, traditional: TepSolution, grid: GridModel) -> pl.DataFrame:
    """
    Side-by-side metrics of the two variants with relative deltas (ci vs traditional).

    The solve_seconds row is meant for the console; file writers drop it.
    """
    def metrics(sol: TepSolution) -> Dict[str, float]:
        return {
            "transmission_investment_cost": sol.cap_cost,
            "generation_cost": sol.op_cost,
            "total_cost": sol.total,
            "built_lines": float(len(sol.builds)),
            "line_flow_energy_mwh": line_flow_energy(sol, grid),
            "solve_seconds": sol.solve_seconds,
        }

    a, b = metrics(ci), metrics(traditional)
    rows = []
    for name in (*COMPARISON_METRICS, "solve_seconds"):
        delta = (a[name] - b[name]) / abs(b[name]) if b[name] != 0 else None
        rows.append((name, a[name], b[name], delta))
    return pl.DataFrame(
        rows,
        schema={"metric": pl.Utf8, "ci": pl.Float64, "traditional": pl.Float64, "relative_delta": pl.Float64},
        orient="row",
    )
