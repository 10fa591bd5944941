"""Latency and efficiency figures for a deployment.

Latency is purely topological: a fixed access term plus a per-hop backhaul
term. Efficiency is time-averaged required capacity over total deployed
capacity, with servers dimensioned at their peak combined load.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Iterable, Mapping

import numpy as np

from .errors import ShapeError
from .topology import Level, Topology
from .trace import Category, DemandSeries

if TYPE_CHECKING:
    from .planner import Deployment

DEFAULT_ACCESS_MS = 5.0  # UE to base station
DEFAULT_PER_HOP_MS = 2.3  # each backhaul hop above the BS


@dataclass(frozen=True)
class LatencyModel:
    access_ms: float = DEFAULT_ACCESS_MS
    per_hop_ms: float = DEFAULT_PER_HOP_MS

    def __post_init__(self) -> None:
        if self.access_ms <= 0 or self.per_hop_ms <= 0:
            raise ValueError("latency terms must be positive")


def bs_latency(model: LatencyModel, hops: int) -> float:
    """Milliseconds from a UE to a server `hops` backhaul levels above its BS."""
    if hops < 0:
        raise ValueError(f"hop count must be non-negative, got {hops}")
    return model.access_ms + hops * model.per_hop_ms


def deployment_latency(topology: Topology, deployment: "Deployment",
                       model: LatencyModel) -> tuple[float, float]:
    """(max, mean) latency over active base stations; (0, 0) when none are active."""
    if not deployment.assignment:
        return 0.0, 0.0
    lats = [
        bs_latency(model, topology.hop_count(bs, node))
        for bs, node in deployment.assignment.items()
    ]
    return max(lats), sum(lats) / len(lats)


@dataclass(frozen=True)
class EfficiencyReport:
    eta: float  # in [0, 1]
    numerator: float  # time-averaged total scaled load, ticks per step
    denominator: float  # sum of per-node peak combined loads, ticks per step


def efficiency(serve_vectors_per_category: Mapping[Category, Mapping[str, np.ndarray]],
               tau: Mapping[Category, float]) -> EfficiencyReport:
    """Evaluate eta = mean total load / sum of per-node peak combined loads.

    Vectors from different categories landing on the same node are combined
    before taking the peak, since those servers are shared. Zero deployed
    capacity yields eta = 0 by convention.
    """
    combined: dict[str, np.ndarray] = {}
    n_steps: int | None = None
    for category, per_node in serve_vectors_per_category.items():
        factor = tau[category]
        for node, vec in per_node.items():
            if n_steps is None:
                n_steps = vec.size
            elif vec.size != n_steps:
                raise ShapeError(
                    f"serve vector for {node} has {vec.size} steps, expected {n_steps}")
            if node in combined:
                combined[node] = combined[node] + factor * vec
            else:
                combined[node] = factor * vec

    if n_steps is None or n_steps == 0:
        return EfficiencyReport(0.0, 0.0, 0.0)
    numerator = float(sum(vec.sum() for vec in combined.values())) / n_steps
    denominator = float(sum(vec.max() for vec in combined.values()))
    eta = numerator / denominator if denominator > 0 else 0.0
    return EfficiencyReport(eta, numerator, denominator)


@dataclass(frozen=True)
class LevelStats:
    servers: int
    traffic: float  # MB served over the whole trace
    traffic_share: float


def level_breakdown(topology: Topology, deployment: "Deployment",
                    demand: Iterable[DemandSeries]) -> dict[Level, LevelStats]:
    """Server counts and served-traffic shares per network level."""
    totals = {
        s.bs_id: s.total_mb() for s in demand
        if s.category is deployment.category and s.bs_id in deployment.assignment
    }
    servers = {level: 0 for level in Level}
    traffic = {level: 0.0 for level in Level}
    for node in deployment.placement:
        servers[topology.nodes[node].level] += 1
    for bs, node in deployment.assignment.items():
        traffic[topology.nodes[node].level] += totals.get(bs, 0.0)
    grand_total = sum(traffic.values())
    return {
        level: LevelStats(
            servers[level], traffic[level],
            traffic[level] / grand_total if grand_total > 0 else 0.0)
        for level in Level
    }
