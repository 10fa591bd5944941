"""Command-line driver: trace synthesis/ingest, enrichment, planning, reports.

Subcommands: synth, enrich, plan, metrics, oracle, run (full pipeline) and
compare (location/load x enriched/raw trade-off table). Configuration lives
in a single YAML file; a few flags override it. Exit codes: 0 success,
2 configuration error, 3 I/O error, 4 infeasible instance.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping

import yaml

from .errors import BudgetExceededError, ConfigError, MecPlanError
from .metrics import LatencyModel, deployment_latency, efficiency, level_breakdown
from .oracle import gap_report, solve_optimal
from .planner import (
    CategoryConfig,
    CombinedPlan,
    Mode,
    PlannerRun,
    ScoreKind,
    greedy_design,
    load_deployment_json,
    multi_category_plan,
    write_deployment_json,
    write_run_log,
)
from .topology import Level, Topology, build_fat_tree, load_bs_positions
from .trace import (
    AggregatedTrace,
    Category,
    CostModel,
    DEFAULT_COST_MODELS,
    DEFAULT_STEP_SECONDS,
    SyntheticConfig,
    TaggingRules,
    aggregate,
    generate_bs_positions,
    generate_synthetic_trace,
    load_cost_models,
    load_trace_csv,
    write_cost_models,
    write_enriched_csv,
    write_trace_csv,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_INFEASIBLE = 4

DEFAULT_L_MAX = {Category.VIDEO: 50.0, Category.GAMING: 10.0,
                 Category.MAPS: 50.0, Category.OTHER: 50.0}

_TOP_KEYS = {"trace", "bs_positions", "synthetic", "seed", "cost_models", "step_seconds",
             "score", "mode", "l_max_ms", "out_dir", "include_other_raw", "exhaustive_pairs"}
_SYNTH_KEYS = {"n_bs", "days", "shares", "mean_mb_per_bs_hour", "diurnal_amplitude",
               "amplitudes", "peak_hours", "bs_phase_jitter_h", "noise_sigma",
               "bs_size_sigma", "area_m"}


@dataclass
class ExperimentConfig:
    """Validated experiment description with defaults applied."""

    trace_path: Path | None = None
    bs_positions_path: Path | None = None
    synthetic: SyntheticConfig | None = None
    seed: int = 0
    cost_models_path: Path | None = None
    step_seconds: int = DEFAULT_STEP_SECONDS
    score_kind: ScoreKind = ScoreKind.LOAD
    mode: Mode = Mode.ENRICHED
    l_max_ms: dict[Category, float] = field(default_factory=lambda: dict(DEFAULT_L_MAX))
    out_dir: Path = Path("results")
    include_other_raw: bool = False
    exhaustive_pairs: bool = False

    def planned_categories(self) -> list[Category]:
        cats = [Category.VIDEO, Category.GAMING, Category.MAPS]
        if self.include_other_raw:
            cats.append(Category.OTHER)
        return cats


def _category_dict(raw: Mapping[str, Any], what: str) -> dict[Category, float]:
    out: dict[Category, float] = {}
    for name, value in raw.items():
        try:
            out[Category(str(name))] = float(value)
        except ValueError as exc:
            raise ConfigError(f"{what}: unknown category {name!r}") from exc
    return out


def _parse_synthetic(raw: Mapping[str, Any]) -> SyntheticConfig:
    unknown = set(raw) - _SYNTH_KEYS
    if unknown:
        raise ConfigError(f"synthetic: unknown fields {sorted(unknown)}")
    if "n_bs" not in raw:
        raise ConfigError("synthetic.n_bs is required")
    kwargs: dict[str, Any] = {"n_bs": int(raw["n_bs"])}
    for key in ("days",):
        if key in raw:
            kwargs[key] = int(raw[key])
    for key in ("mean_mb_per_bs_hour", "diurnal_amplitude", "bs_phase_jitter_h",
                "noise_sigma", "bs_size_sigma", "area_m"):
        if key in raw:
            kwargs[key] = float(raw[key])
    if "shares" in raw:
        kwargs["shares"] = _category_dict(raw["shares"], "synthetic.shares")
    if "amplitudes" in raw:
        kwargs["amplitudes"] = _category_dict(raw["amplitudes"], "synthetic.amplitudes")
    if "peak_hours" in raw:
        kwargs["peak_hours"] = _category_dict(raw["peak_hours"], "synthetic.peak_hours")
    cfg = SyntheticConfig(**kwargs)
    cfg.validate()
    return cfg


def validate_config(path: str | Path) -> ExperimentConfig:
    """Parse the YAML experiment file, apply defaults, and check invariants."""
    with open(path, encoding="utf-8") as fh:
        raw = yaml.safe_load(fh) or {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    unknown = set(raw) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config fields {sorted(unknown)}")

    cfg = ExperimentConfig()
    if "trace" in raw and "synthetic" in raw:
        raise ConfigError("exactly one trace source: set either 'trace' or 'synthetic'")
    if "trace" not in raw and "synthetic" not in raw:
        raise ConfigError("a trace source is required: set 'trace' or 'synthetic'")
    if "trace" in raw:
        cfg.trace_path = Path(str(raw["trace"]))
        if "bs_positions" not in raw:
            raise ConfigError("bs_positions: required alongside a 'trace' file")
        cfg.bs_positions_path = Path(str(raw["bs_positions"]))
    else:
        cfg.synthetic = _parse_synthetic(raw["synthetic"] or {})

    if "seed" in raw:
        cfg.seed = int(raw["seed"])
    if "cost_models" in raw:
        cfg.cost_models_path = Path(str(raw["cost_models"]))
    if "step_seconds" in raw:
        cfg.step_seconds = int(raw["step_seconds"])
        if cfg.step_seconds <= 0:
            raise ConfigError("step_seconds: must be positive")
    if "score" in raw:
        try:
            cfg.score_kind = ScoreKind(str(raw["score"]))
        except ValueError as exc:
            raise ConfigError(f"score: expected 'location' or 'load', got {raw['score']!r}") from exc
    if "mode" in raw:
        try:
            cfg.mode = Mode(str(raw["mode"]))
        except ValueError as exc:
            raise ConfigError(f"mode: expected 'enriched' or 'raw', got {raw['mode']!r}") from exc
    if "l_max_ms" in raw:
        cfg.l_max_ms.update(_category_dict(raw["l_max_ms"], "l_max_ms"))
    if "out_dir" in raw:
        cfg.out_dir = Path(str(raw["out_dir"]))
    if "include_other_raw" in raw:
        cfg.include_other_raw = bool(raw["include_other_raw"])
    if "exhaustive_pairs" in raw:
        cfg.exhaustive_pairs = bool(raw["exhaustive_pairs"])

    access = LatencyModel().access_ms
    for category, cap in cfg.l_max_ms.items():
        if cap < access:
            raise ConfigError(
                f"l_max_ms.{category}: {cap} ms is below the {access} ms access-latency floor")

    env_out = os.environ.get("MECPLAN_OUT")
    if env_out:
        cfg.out_dir = Path(env_out)
    return cfg


# --------------------------------------------------------------------------
# Pipeline pieces
# --------------------------------------------------------------------------

def load_models(cfg: ExperimentConfig) -> dict[Category, CostModel]:
    if cfg.cost_models_path is not None:
        return load_cost_models(cfg.cost_models_path)
    return dict(DEFAULT_COST_MODELS)


def load_instance(cfg: ExperimentConfig) -> tuple[Topology, AggregatedTrace]:
    if cfg.synthetic is not None:
        positions = generate_bs_positions(cfg.synthetic, cfg.seed)
        records = generate_synthetic_trace(cfg.synthetic, cfg.seed)
    else:
        records, skipped = load_trace_csv(cfg.trace_path)
        if skipped:
            print(f"warning: skipped {skipped} malformed trace rows", file=sys.stderr)
        positions = load_bs_positions(cfg.bs_positions_path)
    trace = aggregate(records, TaggingRules.default(), cfg.step_seconds)
    return build_fat_tree(positions), trace


def category_configs(cfg: ExperimentConfig, mode: Mode | None = None,
                     kind: ScoreKind | None = None) -> dict[Category, CategoryConfig]:
    return {
        category: CategoryConfig(cfg.l_max_ms[category], kind or cfg.score_kind,
                                 mode or cfg.mode)
        for category in cfg.planned_categories()
    }


def plan_all(cfg: ExperimentConfig, topology: Topology, trace: AggregatedTrace,
             models: Mapping[Category, CostModel], mode: Mode | None = None,
             kind: ScoreKind | None = None) -> CombinedPlan:
    planned = cfg.planned_categories()
    series = [s for s in trace.series if s.category in planned]
    return multi_category_plan(
        topology, series, category_configs(cfg, mode, kind),
        models=models, exhaustive_pairs=cfg.exhaustive_pairs,
    )


def _check_run(run: PlannerRun) -> None:
    # logs are re-validated before hitting disk
    first = sum(run.iterations[0].servers.values())
    for i, log in enumerate(run.iterations):
        if sum(log.servers.values()) != first - i:
            raise MecPlanError(f"run log broke the one-merge-per-iteration arithmetic at {i}")
        if log.latency_max_ms > run.l_max_ms + 1e-9:
            raise MecPlanError(f"run log exceeds the {run.l_max_ms} ms cap at iteration {i}")


def _atomic_write(path: Path, write: Callable[[Path], None]) -> None:
    tmp = path.with_name(path.name + ".tmp")
    write(tmp)
    os.replace(tmp, path)


def _write_json(payload: dict, path: Path) -> None:
    def write(tmp: Path) -> None:
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
    _atomic_write(path, write)


def write_plan_artifacts(plan: CombinedPlan, out_dir: Path) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    for category, run in plan.runs.items():
        _check_run(run)
        log_path = out_dir / f"plan_{category.value}.csv"
        _atomic_write(log_path, lambda tmp, r=run: write_run_log(r, tmp))
        dep_path = out_dir / f"deployment_{category.value}.json"
        _atomic_write(dep_path, lambda tmp, r=run: write_deployment_json(r.final, tmp))
        written += [log_path, dep_path]
    return written


def summarize(cfg: ExperimentConfig, topology: Topology, trace: AggregatedTrace,
              plan: CombinedPlan) -> dict:
    categories = {}
    for category, run in plan.runs.items():
        last = run.iterations[-1]
        categories[category.value] = {
            "l_max_ms": run.l_max_ms,
            "iterations": len(run.iterations) - 1,
            "final_servers": run.final_servers,
            "latency_max_ms": last.latency_max_ms,
            "latency_mean_ms": last.latency_mean_ms,
            "efficiency": last.efficiency,
        }
    servers_by_level = {lvl.short: 0 for lvl in Level}
    for node in plan.capacity:
        servers_by_level[topology.nodes[node].level.short] += 1
    traffic_by_level = {lvl.short: 0.0 for lvl in Level}
    for run in plan.runs.values():
        for lvl, mb in run.iterations[-1].traffic.items():
            traffic_by_level[lvl.short] += mb
    total_mb = sum(traffic_by_level.values())
    volumes = {c.value: 0.0 for c in Category}
    for series in trace.series:
        volumes[series.category.value] += series.total_mb()
    return {
        "seed": cfg.seed,
        "score": cfg.score_kind.value,
        "mode": cfg.mode.value,
        "step_seconds": cfg.step_seconds,
        "trace_volumes_mb": volumes,
        "categories": categories,
        "combined": {
            "efficiency": plan.efficiency.eta,
            "total_servers": plan.total_servers,
            "deployed_capacity": plan.efficiency.denominator,
            "latency_max_ms": max(
                (run.iterations[-1].latency_max_ms for run in plan.runs.values()),
                default=0.0),
            "servers_by_level": servers_by_level,
            "traffic_share_by_level": {
                lvl: (mb / total_mb if total_mb > 0 else 0.0)
                for lvl, mb in traffic_by_level.items()
            },
        },
    }


# --------------------------------------------------------------------------
# Subcommands
# --------------------------------------------------------------------------

def cmd_synth(cfg: ExperimentConfig) -> int:
    if cfg.synthetic is None:
        raise ConfigError("synth requires a 'synthetic' section in the config")
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    records = generate_synthetic_trace(cfg.synthetic, cfg.seed)
    positions = generate_bs_positions(cfg.synthetic, cfg.seed)
    _atomic_write(cfg.out_dir / "trace.csv", lambda tmp: write_trace_csv(records, tmp))

    def write_positions(tmp: Path) -> None:
        with open(tmp, "w", encoding="utf-8") as fh:
            fh.write("bs_id,x,y\n")
            for bs_id, x, y in positions:
                # repr round-trips float64 exactly; the file feeds the pipeline
                fh.write(f"{bs_id},{x!r},{y!r}\n")
    _atomic_write(cfg.out_dir / "bs_positions.csv", write_positions)
    print(f"wrote {len(records)} records for {cfg.synthetic.n_bs} base stations "
          f"to {cfg.out_dir}")
    return EXIT_OK


def cmd_enrich(cfg: ExperimentConfig) -> int:
    _, trace = load_instance(cfg)
    models = load_models(cfg)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    raw_mode = cfg.mode is Mode.RAW
    _atomic_write(cfg.out_dir / "enriched.csv",
                  lambda tmp: write_enriched_csv(trace, models, tmp, raw=raw_mode))
    _atomic_write(cfg.out_dir / "cost_models.json",
                  lambda tmp: write_cost_models(models, tmp))
    print(f"enriched {len(trace.series)} series over {trace.n_steps} steps "
          f"({trace.rejected} records rejected)")
    return EXIT_OK


def cmd_plan(cfg: ExperimentConfig) -> int:
    topology, trace = load_instance(cfg)
    plan = plan_all(cfg, topology, trace, load_models(cfg))
    written = write_plan_artifacts(plan, cfg.out_dir)
    for category, run in plan.runs.items():
        last = run.iterations[-1]
        print(f"{category.value}: {len(run.iterations) - 1} iterations, "
              f"{run.final_servers} servers, latency {last.latency_max_ms:.1f} ms, "
              f"efficiency {last.efficiency:.3f}")
    print(f"combined efficiency {plan.efficiency.eta:.3f}; wrote {len(written)} files "
          f"to {cfg.out_dir}")
    return EXIT_OK


def cmd_run(cfg: ExperimentConfig, compare: bool) -> int:
    topology, trace = load_instance(cfg)
    models = load_models(cfg)
    plan = plan_all(cfg, topology, trace, models)
    write_plan_artifacts(plan, cfg.out_dir)
    if Category.OTHER not in plan.runs:
        # OTHER is logged but not planned: emit its iteration-0 baseline
        # (an access-latency cap admits no consolidation)
        other_series = [s for s in trace.series if s.category is Category.OTHER]
        baseline = greedy_design(topology, other_series, Category.OTHER,
                                 LatencyModel().access_ms, cfg.score_kind, Mode.RAW)
        _check_run(baseline)
        _atomic_write(cfg.out_dir / "plan_other.csv",
                      lambda tmp: write_run_log(baseline, tmp))
    summary = summarize(cfg, topology, trace, plan)
    if compare:
        other_mode = Mode.RAW if cfg.mode is Mode.ENRICHED else Mode.ENRICHED
        other = plan_all(cfg, topology, trace, models, mode=other_mode)
        etas = {cfg.mode.value: plan.efficiency.eta, other_mode.value: other.efficiency.eta}
        summary["compare"] = {
            "enriched_eta": etas["enriched"],
            "raw_eta": etas["raw"],
            "enriched_vs_raw_delta": etas["enriched"] - etas["raw"],
        }
    _write_json(summary, cfg.out_dir / "summary.json")
    print(json.dumps(summary["combined"], indent=2, sort_keys=True))
    return EXIT_OK


def cmd_compare(cfg: ExperimentConfig) -> int:
    topology, trace = load_instance(cfg)
    models = load_models(cfg)
    rows = []
    for kind in (ScoreKind.LOCATION, ScoreKind.LOAD):
        for mode in (Mode.ENRICHED, Mode.RAW):
            plan = plan_all(cfg, topology, trace, models, mode=mode, kind=kind)
            combo_dir = cfg.out_dir / "compare" / f"{kind.value}_{mode.value}"
            write_plan_artifacts(plan, combo_dir)
            rows.append({
                "score": kind.value,
                "mode": mode.value,
                "efficiency": plan.efficiency.eta,
                "latency_max_ms": max(
                    (r.iterations[-1].latency_max_ms for r in plan.runs.values()),
                    default=0.0),
                "total_servers": plan.total_servers,
            })
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    _write_json({"tradeoff": rows}, cfg.out_dir / "tradeoff.json")

    def write_table(tmp: Path) -> None:
        with open(tmp, "w", encoding="utf-8") as fh:
            fh.write("score,mode,efficiency,latency_max_ms,total_servers\n")
            for row in rows:
                fh.write(f"{row['score']},{row['mode']},"
                         f"{format(row['efficiency'], '.10g')},"
                         f"{format(row['latency_max_ms'], '.10g')},"
                         f"{row['total_servers']}\n")
    _atomic_write(cfg.out_dir / "tradeoff.csv", write_table)
    for row in rows:
        print(f"{row['score']:>8} {row['mode']:>8}: efficiency {row['efficiency']:.3f}, "
              f"latency {row['latency_max_ms']:.1f} ms, {row['total_servers']} servers")
    return EXIT_OK


def cmd_metrics(cfg: ExperimentConfig, deployment_path: Path) -> int:
    topology, trace = load_instance(cfg)
    dep = load_deployment_json(topology, trace.series, deployment_path)
    models = load_models(cfg)
    tau = 1.0 if cfg.mode is Mode.RAW or dep.category not in models \
        else models[dep.category].slope
    lat_max, lat_mean = deployment_latency(topology, dep, LatencyModel())
    report = efficiency({dep.category: dep.serve_vectors}, {dep.category: tau})
    levels = level_breakdown(topology, dep, trace.series)
    payload = {
        "category": dep.category.value,
        "servers": len(dep.placement),
        "latency_max_ms": lat_max,
        "latency_mean_ms": lat_mean,
        "efficiency": report.eta,
        "levels": {
            lvl.short: {"servers": stats.servers, "traffic_share": stats.traffic_share}
            for lvl, stats in levels.items()
        },
    }
    print(json.dumps(payload, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_oracle(cfg: ExperimentConfig, category: Category) -> int:
    topology, trace = load_instance(cfg)
    l_max = cfg.l_max_ms[category]
    solution = solve_optimal(topology, trace.series, category, l_max)
    payload: dict[str, Any] = {
        "category": category.value,
        "l_max_ms": l_max,
        "min_servers": solution.min_servers,
        "feasible": solution.feasible,
    }
    if solution.feasible:
        run = greedy_design(topology, trace.series, category, l_max, cfg.score_kind,
                            cfg.mode, exhaustive_pairs=cfg.exhaustive_pairs)
        gap = gap_report(run, solution)
        payload["greedy_servers"] = run.final_servers
        payload["gap_vs_greedy"] = gap if math.isfinite(gap) else "inf"
    print(json.dumps(payload, indent=2, sort_keys=True))
    return EXIT_OK if solution.feasible else EXIT_INFEASIBLE


# --------------------------------------------------------------------------
# Entry point
# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mecplan",
        description="Plan MEC server placement from (enriched) cellular demand traces.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="experiment YAML file")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default=None, help="override the output directory")
        p.add_argument("--score", choices=[k.value for k in ScoreKind], default=None)
        p.add_argument("--mode", choices=[m.value for m in Mode], default=None)
        p.add_argument("--include-other-raw", action="store_true", default=None,
                       help="plan OTHER traffic with tau = 1")
        return p

    add("synth", "write a synthetic trace and BS positions")
    add("enrich", "export the cpu_ticks column and the cost models")
    add("plan", "run the per-category planner and write iteration logs")
    run_p = add("run", "full pipeline: plan, logs, deployments, summary")
    run_p.add_argument("--compare", action="store_true",
                       help="also run the other mode and report the efficiency delta")
    add("compare", "score x mode trade-off table (location/load x enriched/raw)")
    metrics_p = add("metrics", "evaluate an exported deployment against the trace")
    metrics_p.add_argument("--deployment", required=True, help="deployment JSON path")
    oracle_p = add("oracle", "exhaustive optimum and greedy gap on a small instance")
    oracle_p.add_argument("--category", default="gaming",
                          choices=[c.value for c in Category])
    return parser


def _apply_overrides(cfg: ExperimentConfig, args: argparse.Namespace) -> None:
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.out_dir = Path(args.out)
    if args.score is not None:
        cfg.score_kind = ScoreKind(args.score)
    if args.mode is not None:
        cfg.mode = Mode(args.mode)
    if args.include_other_raw:
        cfg.include_other_raw = True


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = validate_config(args.config)
        _apply_overrides(cfg, args)
        if args.command == "synth":
            return cmd_synth(cfg)
        if args.command == "enrich":
            return cmd_enrich(cfg)
        if args.command == "plan":
            return cmd_plan(cfg)
        if args.command == "run":
            return cmd_run(cfg, compare=args.compare)
        if args.command == "compare":
            return cmd_compare(cfg)
        if args.command == "metrics":
            return cmd_metrics(cfg, Path(args.deployment))
        if args.command == "oracle":
            return cmd_oracle(cfg, Category(args.category))
        raise ConfigError(f"unknown command {args.command!r}")
    except (ConfigError, BudgetExceededError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except MecPlanError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
