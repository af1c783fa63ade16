"""
Command-line entry point: ``gridplan synth|plan|simulate|evaluate|plotdata|mps-export``.

Every subcommand reads a study file (``--config``) and works inside its output
directory:

    profiles/                  representative profile CSVs (synth)
    plan.json                  CI transmission plan (plan)
    plan_traditional.json      traditional plan (plan --variant traditional|both)
    plan_comparison.csv        CI vs traditional metrics (plan --variant both)
    results/<case>/            SCUC batch files (simulate)
    reliability.csv            per-epoch indices (evaluate)
    reliability_comparison.csv side-by-side indices (evaluate)
    plotdata/<figure>.csv      tidy x, series, value tables (plotdata)
    mps/<model>.mps            model dumps (mps-export)
"""
import argparse
import json
import logging
import math
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import polars as pl
from pydantic import ValidationError

from gridplan import __version__
from gridplan.core.config import settings
from gridplan.core.exceptions import (
    BatchFailureError,
    ConfigError,
    GridPlanError,
    HorizonMismatchError,
)
from gridplan.grid_model import apply_investments, load_generation_investments, load_grid, merge_generation_plan
from gridplan.milp import solve_milp, solve_with_highs, write_mps
from gridplan.profile_synthesis import (
    build_representative,
    export_profiles,
    import_profiles,
    load_loads,
    load_weather,
    monthly_line_ratings,
    monthly_renewables,
    representative_load_series,
)
from gridplan.reliability import (
    REPORT_COLUMNS,
    compare_cases,
    evaluate_case,
    load_shedding_frame,
    load_shedding_records,
    report_rows,
)
from gridplan.schemas.grid import GridModel, RenewableKind
from gridplan.schemas.results import TransmissionPlan
from gridplan.schemas.study import CaseName, StudyConfig, TepVariant
from gridplan.scuc_model import FAILURE_COLUMNS, build_scuc, day_instance, run_batch, write_batch
from gridplan.tep_model import COMPARISON_METRICS, TepInstance, build_tep, compare_plans, solve_tep
from gridplan.utils import atomic_write_csv, atomic_write_text, read_csv, resolve_workers, write_frame

logger = logging.getLogger(__name__)

FIGURES = ["ratings", "wind", "solar", "load", "shedding", "curtailment"]
PLAN_FILES = {TepVariant.CI: "plan.json", TepVariant.TRADITIONAL: "plan_traditional.json"}


# ==================== STUDY INPUTS ====================

def parse_overrides(pairs: Optional[Sequence[str]]) -> Dict[str, Any]:
    """``key.path=value`` pairs; values are JSON when they parse, strings otherwise."""
    overrides: Dict[str, Any] = {}
    for pair in pairs or []:
        key, sep, raw = pair.partition("=")
        if not sep or not key:
            raise ConfigError(f"Override {pair!r} must look like key.path=value")
        try:
            overrides[key.strip()] = json.loads(raw)
        except json.JSONDecodeError:
            overrides[key.strip()] = raw
    return overrides


def load_study(args: argparse.Namespace) -> StudyConfig:
    study = StudyConfig.load(Path(args.config))
    return study.with_overrides(parse_overrides(args.set))


def _investments(study: StudyConfig):
    path = study.paths.generation_investments
    return load_generation_investments(path) if path is not None else []


def _profiles_dir(study: StudyConfig) -> Path:
    return study.output_dir / "profiles"


def _results_dir(study: StudyConfig, case: CaseName) -> Path:
    return study.output_dir / "results" / case.value


def _full_grid(study: StudyConfig) -> Tuple[GridModel, GridModel, list]:
    """Grid as read, grid with every generation investment merged, and the investments."""
    grid = load_grid(study.paths.grid)
    investments = _investments(study)
    return grid, merge_generation_plan(grid, investments), investments


def _require(path: Optional[Path], what: str) -> Path:
    if path is None:
        raise ConfigError(f"The study does not configure a {what} file")
    if not Path(path).exists():
        raise ConfigError(f"{what.capitalize()} file not found: {path}")
    return Path(path)


def _read_plan(path: Path) -> TransmissionPlan:
    if not path.exists():
        raise ConfigError(f"Transmission plan not found: {path} (run `gridplan plan` first)")
    try:
        return TransmissionPlan.model_validate_json(path.read_text())
    except ValidationError as e:
        raise ConfigError(f"Invalid transmission plan {path}: {e}") from e


def _write_plan(plan: TransmissionPlan, path: Path) -> Path:
    return atomic_write_text(path, json.dumps(plan.model_dump(mode="json"), indent=2) + "\n")


def _case_views(study: StudyConfig, case: CaseName, grid: GridModel, investments: list):
    if case is CaseName.FR:
        return apply_investments(grid)
    if case is CaseName.FGI:
        return apply_investments(grid, investments)
    plan = _read_plan(study.output_dir / PLAN_FILES[TepVariant.CI])
    gen_plan = investments if plan.base_case is CaseName.FGI else []
    return apply_investments(grid, gen_plan, plan)


def _planning_grid(study: StudyConfig, grid: GridModel, investments: list) -> GridModel:
    if study.planning_base_case is CaseName.FGI:
        return merge_generation_plan(grid, investments)
    return grid


def _print_table(df: pl.DataFrame) -> None:
    with pl.Config(tbl_rows=-1, tbl_cols=-1, float_precision=6):
        print(df)


# ==================== SUBCOMMANDS ====================

def cmd_synth(study: StudyConfig, args: argparse.Namespace) -> int:
    """Build and write the representative profiles."""
    _, grid, _ = _full_grid(study)
    weather = load_weather(_require(study.paths.weather, "weather"), grid.horizon.interval_hours)
    loads = load_loads(_require(study.paths.load, "load"))
    profiles = build_representative(
        weather,
        loads,
        grid,
        dlr_default=study.profiles.dlr,
        policy=study.profiles.terminal_policy,
        load_growth=study.profiles.load_growth,
    )
    export_profiles(profiles, _profiles_dir(study))
    print(f"Profiles: {profiles.summary()}")
    print(f"Written to {_profiles_dir(study)}")
    return 0


def _tep_instance(study: StudyConfig, grid: GridModel, profiles, variant: TepVariant) -> TepInstance:
    return TepInstance(
        grid=grid,
        profiles=profiles,
        variant=variant,
        shed_allowed=study.tep.shed_allowed,
        theta_bound=study.tep.theta_bound,
        shed_penalty=study.tep.shed_penalty,
    )


def cmd_plan(study: StudyConfig, args: argparse.Namespace) -> int:
    """Solve the transmission plan(s) and write the plan files."""
    grid, merged, investments = _full_grid(study)
    planning_grid = _planning_grid(study, grid, investments)
    profiles = import_profiles(_profiles_dir(study), merged)
    variant = TepVariant(args.variant) if args.variant else study.tep.variant
    variants = [TepVariant.CI, TepVariant.TRADITIONAL] if variant is TepVariant.BOTH else [variant]
    config = study.tep.solver.to_solver_config(resolve_workers(args.workers))

    solutions = {}
    for item in variants:
        solution = solve_tep(_tep_instance(study, planning_grid, profiles, item), config)
        plan = solution.to_plan(study.name, study.planning_base_case, grid.horizon)
        _write_plan(plan, study.output_dir / PLAN_FILES[item])
        solutions[item] = solution
        print(f"{item.value} plan ({study.planning_base_case.value} base, status {solution.status.value})")
        for build in plan.builds:
            print(f"  build {build.line_id} in epoch {build.construction_epoch}")
        if not plan.builds:
            print("  no lines built")
        print(f"  transmission investment cost: {plan.costs.transmission_investment_cost:,.2f} $")
        print(f"  generation cost:              {plan.costs.generation_cost:,.2f} $")
        print(f"  total cost:                   {plan.costs.total:,.2f} $")
        if solution.shed_cost:
            print(f"  shed energy:                  {plan.shed_energy_mwh:,.3f} MWh")

    if variant is TepVariant.BOTH:
        comparison = compare_plans(solutions[TepVariant.CI], solutions[TepVariant.TRADITIONAL], planning_grid)
        write_frame(
            comparison.filter(pl.col("metric").is_in(list(COMPARISON_METRICS))),
            study.output_dir / "plan_comparison.csv",
        )
        print("CI vs traditional")
        _print_table(comparison)
    return 0


def cmd_simulate(study: StudyConfig, args: argparse.Namespace) -> int:
    """Run the SCUC batch of each requested case."""
    grid, merged, investments = _full_grid(study)
    cases = [CaseName(args.case)] if args.case else study.cases
    profiles = import_profiles(_profiles_dir(study), merged)
    workers = resolve_workers(args.workers)
    config = study.scuc.solver.to_solver_config(1)

    failures: List[str] = []
    for case in cases:
        views = _case_views(study, case, grid, investments)
        batch = run_batch(
            views,
            profiles,
            grid.horizon,
            case=case,
            shed_penalty=study.scuc.shed_penalty,
            reserve_required=study.scuc.reserve_required,
            initial_commitment=study.scuc.initial_commitment,
            config=config,
            workers=workers,
        )
        write_batch(batch, _results_dir(study, case))
        shed = math.fsum(sol.shed_energy for _, sol in sorted(batch.solutions.items()))
        print(f"{case.value}: {len(batch.solutions)} days solved, {len(batch.failures)} failed, shed {shed:,.3f} MWh/typical day set")
        for epoch in sorted({key[0] for key in batch.solutions}):
            epoch_shed = math.fsum(sol.shed_energy for key, sol in sorted(batch.solutions.items()) if key[0] == epoch)
            print(f"  epoch {epoch}: shed {epoch_shed:,.3f} MWh over typical days")
        failures.extend(
            f"{case.value} epoch {p} quarter {q} {d}: {message}" for (p, q, d), message in sorted(batch.failures.items())
        )
    if failures:
        raise BatchFailureError(failures)
    return 0


def cmd_evaluate(study: StudyConfig, args: argparse.Namespace) -> int:
    """Score the simulated cases and compare them."""
    grid = load_grid(study.paths.grid)
    horizon = grid.horizon
    profiles = import_profiles(_profiles_dir(study))
    cases = [CaseName(args.case)] if args.case else study.cases

    expected = {(p, q, d) for p in horizon.epochs for q in horizon.quarters for d in horizon.day_types}
    reports = {}
    key_sets = {}
    for case in cases:
        _check_failures(_results_dir(study, case) / "failures.csv", case)
        path = _results_dir(study, case) / "shedding.csv"
        frame = load_shedding_frame(path)
        key_sets[case] = frozenset(frame.select("epoch", "quarter", "day_type").unique().iter_rows())
        unknown = sorted({epoch for epoch, _, _ in key_sets[case]} - set(horizon.epochs))
        if unknown:
            raise HorizonMismatchError(f"{case.value} results cover epochs {unknown} outside the study horizon")
        missing = sorted(expected - key_sets[case])
        if missing:
            raise HorizonMismatchError(
                f"{case.value} results lack {len(missing)} typical days of the horizon: {_day_labels(missing)}"
            )
        reports[case] = evaluate_case(case, load_shedding_records(path), profiles.load, horizon, len(grid.buses))
    if len(set(key_sets.values())) > 1:
        detail = "; ".join(f"{case.value}: {len(keys)} typical days" for case, keys in key_sets.items())
        raise HorizonMismatchError(f"case results cover different typical days ({detail})")

    atomic_write_csv(study.output_dir / "reliability.csv", REPORT_COLUMNS, report_rows(reports.values()))
    comparison = compare_cases(reports, base=cases[0])
    write_frame(comparison, study.output_dir / "reliability_comparison.csv")
    _print_table(comparison)
    return 0


def _day_labels(days: Sequence[Tuple[int, int, str]], limit: int = 8) -> str:
    labels = ", ".join(f"epoch {p} Q{q} {d}" for p, q, d in days[:limit])
    return labels + (f" and {len(days) - limit} more" if len(days) > limit else "")


def _check_failures(path: Path, case: CaseName) -> None:
    """Refuse to score a case whose batch left typical days unsolved."""
    if not path.exists():
        return
    failures = read_csv(path, FAILURE_COLUMNS, schema={"day_type": pl.Utf8, "message": pl.Utf8}, what="failures")
    if failures.height:
        days = sorted((p, q, d) for p, q, d, _ in failures.select(FAILURE_COLUMNS).iter_rows())
        raise BatchFailureError([f"{case.value} {_day_labels([day])}" for day in days])


def _daily_max_by_quarter(study: StudyConfig, case: CaseName, column: str, interval_hours: float) -> pl.DataFrame:
    """Highest daily energy (MWh) of a shedding.csv column per epoch and quarter."""
    frame = load_shedding_frame(_results_dir(study, case) / "shedding.csv")
    daily = (
        frame.group_by(["epoch", "quarter", "day_type"])
        .agg((pl.col(column).sort_by(["interval", "bus_id"]).sum() * interval_hours).alias("energy"))
        .group_by(["epoch", "quarter"])
        .agg(pl.col("energy").max())
        .sort(["epoch", "quarter"])
    )
    return pl.DataFrame(
        [(f"Q{quarter}", f"{case.value} epoch {epoch}", energy) for epoch, quarter, energy in daily.iter_rows()],
        schema={"x": pl.Utf8, "series": pl.Utf8, "value": pl.Float64},
        orient="row",
    )


def cmd_plotdata(study: StudyConfig, args: argparse.Namespace) -> int:
    """Write the tidy table behind one figure."""
    _, grid, _ = _full_grid(study)
    figure = args.figure
    if figure in ("ratings", "wind", "solar"):
        weather = load_weather(_require(study.paths.weather, "weather"), grid.horizon.interval_hours)
        if figure == "ratings":
            df = monthly_line_ratings(weather, grid, study.profiles.dlr, study.profiles.terminal_policy, args.line)
        else:
            df = monthly_renewables(weather, grid, RenewableKind(figure))
    elif figure == "load":
        df = representative_load_series(import_profiles(_profiles_dir(study)))
    else:
        case = CaseName(args.case) if args.case else study.cases[0]
        column = "shed_mw" if figure == "shedding" else "curtail_mw"
        df = _daily_max_by_quarter(study, case, column, grid.horizon.interval_hours)
    path = write_frame(df, study.output_dir / "plotdata" / f"{figure}.csv")
    print(f"{figure}: {df.height} points written to {path}")
    return 0


def cmd_mps_export(study: StudyConfig, args: argparse.Namespace) -> int:
    """Dump a TEP or SCUC model to MPS, optionally cross-checking with HiGHS."""
    grid, merged, investments = _full_grid(study)
    profiles = import_profiles(_profiles_dir(study), merged)
    if args.model == "tep":
        variant = study.tep.variant if study.tep.variant is not TepVariant.BOTH else TepVariant.CI
        problem, _ = build_tep(_tep_instance(study, _planning_grid(study, grid, investments), profiles, variant))
        config = study.tep.solver.to_solver_config(resolve_workers(args.workers))
    else:
        case = CaseName(args.case) if args.case else study.cases[0]
        views = _case_views(study, case, grid, investments)
        if args.epoch not in views:
            raise ConfigError(f"Epoch {args.epoch} is outside the {len(views)}-epoch horizon")
        instance = day_instance(
            views[args.epoch],
            profiles,
            grid.horizon,
            args.quarter,
            args.day_type,
            study.scuc.shed_penalty,
            study.scuc.reserve_required,
            study.scuc.initial_commitment,
        )
        problem, _ = build_scuc(instance)
        config = study.scuc.solver.to_solver_config(1)

    path = Path(args.output) if args.output else study.output_dir / "mps" / f"{problem.name}.mps"
    write_mps(problem, path)
    print(f"{problem.name}: {problem.num_variables} columns, {problem.num_constraints} rows written to {path}")
    if args.check:
        embedded = solve_milp(problem, config)
        external = solve_with_highs(problem, config)
        print(f"  embedded: {embedded.status.value} {embedded.objective}")
        print(f"  HiGHS:    {external.status.value} {external.objective}")
        if embedded.objective is not None and external.objective is not None:
            scale = max(1.0, abs(external.objective))
            print(f"  relative objective difference: {abs(embedded.objective - external.objective) / scale:.3e}")
    return 0


COMMANDS = {
    "synth": cmd_synth,
    "plan": cmd_plan,
    "simulate": cmd_simulate,
    "evaluate": cmd_evaluate,
    "plotdata": cmd_plotdata,
    "mps-export": cmd_mps_export,
}


# ==================== ENTRY POINT ====================

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="study configuration file (JSON)")
    common.add_argument(
        "--set",
        action="append",
        metavar="KEY=VALUE",
        help="override a study key, e.g. --set tep.theta_bound=0.5 (repeatable)",
    )
    common.add_argument("--workers", type=int, default=None, help="parallel solves (default GRIDPLAN_WORKERS or cores)")

    parser = argparse.ArgumentParser(prog="gridplan", description="Climate-aware transmission planning toolkit")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("synth", parents=[common], help="build representative profiles")
    plan = sub.add_parser("plan", parents=[common], help="solve the transmission expansion plan")
    plan.add_argument("--variant", choices=[v.value for v in TepVariant], default=None)
    simulate = sub.add_parser("simulate", parents=[common], help="run daily SCUC for a case")
    simulate.add_argument("--case", choices=[c.value for c in CaseName], default=None)
    evaluate = sub.add_parser("evaluate", parents=[common], help="compute reliability indices")
    evaluate.add_argument("--case", choices=[c.value for c in CaseName], default=None)
    plotdata = sub.add_parser("plotdata", parents=[common], help="write plot-data CSV for a figure")
    plotdata.add_argument("figure", choices=FIGURES)
    plotdata.add_argument("--line", default=None, help="line id (ratings)")
    plotdata.add_argument("--case", choices=[c.value for c in CaseName], default=None)
    mps = sub.add_parser("mps-export", parents=[common], help="dump a model to MPS")
    mps.add_argument("--model", choices=["tep", "scuc"], default="tep")
    mps.add_argument("--case", choices=[c.value for c in CaseName], default=None)
    mps.add_argument("--epoch", type=int, default=1)
    mps.add_argument("--quarter", type=int, choices=[1, 2, 3, 4], default=1)
    mps.add_argument("--day-type", choices=["WD", "WE"], default="WD")
    mps.add_argument("--output", default=None, help="MPS file path")
    mps.add_argument("--check", action="store_true", help="solve with the embedded solver and HiGHS and compare")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Run one subcommand and return its exit code."""
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=settings.GRIDPLAN_LOG_LEVEL,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        study = load_study(args)
        return COMMANDS[args.command](study, args)
    except GridPlanError as e:
        logger.error(f"Error running {args.command}: {str(e)}")
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
