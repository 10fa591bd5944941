"""Chart data extraction and rendering for planner iteration logs.

Consumes only the documented log schema (iter, per-level server and traffic
columns, latency, efficiency); one CSV per planning run. Every chart kind can
dump the exact numeric series it plots, so correctness is testable without
comparing images.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

LOG_COLUMNS = [
    "iter",
    "servers_bs", "servers_ring", "servers_agg", "servers_core",
    "traffic_bs", "traffic_ring", "traffic_agg", "traffic_core",
    "latency_max_ms", "latency_mean_ms", "efficiency",
]

LEVEL_ORDER = ("bs", "ring", "agg", "core")  # stacked bottom-up
LEVEL_LABELS = {"bs": "base station", "ring": "ring", "agg": "aggregation", "core": "core"}


class SchemaError(ValueError):
    """Input CSV does not carry the expected log columns."""


class EmptyLogError(ValueError):
    """Input CSV has a header but no iteration rows."""


class ChartKind(Enum):
    LEVEL_STACK_SERVERS = "level_stack_servers"
    LEVEL_STACK_TRAFFIC = "level_stack_traffic"
    LATENCY_CURVE = "latency_curve"
    EFFICIENCY_CURVE = "efficiency_curve"
    TRADEOFF_SCATTER = "tradeoff_scatter"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class PlotSpec:
    kind: ChartKind
    inputs: tuple[Path, ...]
    output: Path
    dump_series: Path | None = None


@dataclass
class Series:
    label: str
    x: list[float]
    y: list[float]


@dataclass
class RunLog:
    name: str  # file stem, carries the (score, mode) labelling for multi-run charts
    columns: dict[str, list[float]] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.columns["iter"])


def load_run_log(path: Path) -> RunLog:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in LOG_COLUMNS if c not in (reader.fieldnames or [])]
        if missing:
            raise SchemaError(f"{path}: missing columns: {', '.join(missing)}")
        columns: dict[str, list[float]] = {c: [] for c in LOG_COLUMNS}
        for row in reader:
            for c in LOG_COLUMNS:
                columns[c].append(float(row[c]))
    if not columns["iter"]:
        raise EmptyLogError(f"{path}: no iteration rows")
    return RunLog(Path(path).stem, columns)


def extract_series(kind: ChartKind, logs: list[RunLog]) -> list[Series]:
    """The exact numeric series a chart of this kind plots, in plot order."""
    if kind in (ChartKind.LEVEL_STACK_SERVERS, ChartKind.LEVEL_STACK_TRAFFIC):
        if len(logs) != 1:
            raise SchemaError(f"{kind} takes exactly one log, got {len(logs)}")
        log = logs[0]
        prefix = "servers" if kind is ChartKind.LEVEL_STACK_SERVERS else "traffic"
        return [
            Series(LEVEL_LABELS[lvl], log.columns["iter"], log.columns[f"{prefix}_{lvl}"])
            for lvl in LEVEL_ORDER
        ]
    if kind is ChartKind.LATENCY_CURVE:
        out = []
        for log in logs:
            out.append(Series(f"{log.name} max", log.columns["iter"],
                              log.columns["latency_max_ms"]))
            out.append(Series(f"{log.name} mean", log.columns["iter"],
                              log.columns["latency_mean_ms"]))
        return out
    if kind is ChartKind.EFFICIENCY_CURVE:
        return [Series(log.name, log.columns["iter"], log.columns["efficiency"])
                for log in logs]
    if kind is ChartKind.TRADEOFF_SCATTER:
        # one point per run: its final latency/efficiency pair
        return [
            Series(log.name, [log.columns["latency_max_ms"][-1]],
                   [log.columns["efficiency"][-1]])
            for log in logs
        ]
    raise SchemaError(f"unknown chart kind {kind!r}")


def render(spec: PlotSpec) -> Path:
    """Draw the chart and write it (plus the optional series dump)."""
    logs = [load_run_log(p) for p in spec.inputs]
    if len({log.name for log in logs}) < len(logs):
        # colliding stems (e.g. compare/<combo>/plan_video.csv): qualify by dir
        for log, path in zip(logs, spec.inputs):
            log.name = f"{Path(path).parent.name}/{log.name}"
    series = extract_series(spec.kind, logs)

    fig, ax = plt.subplots(figsize=(7, 4.5))
    if spec.kind in (ChartKind.LEVEL_STACK_SERVERS, ChartKind.LEVEL_STACK_TRAFFIC):
        ax.stackplot(series[0].x, *(s.y for s in series), labels=[s.label for s in series])
        ax.set_xlabel("iteration")
        ax.set_ylabel("servers" if spec.kind is ChartKind.LEVEL_STACK_SERVERS
                      else "traffic served [MB]")
    elif spec.kind is ChartKind.LATENCY_CURVE:
        for s in series:
            ax.plot(s.x, s.y, label=s.label,
                    linestyle="--" if s.label.endswith("mean") else "-")
        ax.set_xlabel("iteration")
        ax.set_ylabel("latency [ms]")
    elif spec.kind is ChartKind.EFFICIENCY_CURVE:
        for s in series:
            ax.plot(s.x, s.y, label=s.label)
        ax.set_xlabel("iteration")
        ax.set_ylabel("efficiency")
    else:
        for s in series:
            ax.scatter(s.x, s.y, label=s.label)
            ax.annotate(s.label, (s.x[0], s.y[0]), textcoords="offset points",
                        xytext=(4, 4), fontsize=8)
        ax.set_xlabel("final latency [ms]")
        ax.set_ylabel("final efficiency")
    ax.legend(loc="best", fontsize=8)
    ax.set_title(str(spec.kind))
    fig.tight_layout()
    spec.output.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(spec.output)
    plt.close(fig)

    if spec.dump_series is not None:
        payload = {
            "kind": spec.kind.value,
            "inputs": [str(p) for p in spec.inputs],
            "series": [{"label": s.label, "x": s.x, "y": s.y} for s in series],
        }
        spec.dump_series.parent.mkdir(parents=True, exist_ok=True)
        with open(spec.dump_series, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2)
            fh.write("\n")
    return spec.output
