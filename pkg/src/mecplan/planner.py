"""Greedy MEC server placement by hierarchical consolidation.

Planning starts with one server at every base station with demand and
repeatedly merges a highest-scoring pair of served nodes, either a child into
its serving parent or two siblings into a fresh server at a common parent,
until the latency cap would be breached or nothing can merge. Each committed
iteration drops the server count by exactly one.
"""

from __future__ import annotations

import csv
import heapq
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from itertools import combinations
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .errors import ConfigError, InvalidAssignmentError, NoCostModelError, ShapeError, UnknownNodeError
from .metrics import EfficiencyReport, LatencyModel, bs_latency, efficiency
from .topology import Level, Topology
from .trace import Category, CostModel, DemandSeries, DEFAULT_COST_MODELS


class ScoreKind(Enum):
    """Consolidation-pair ranking strategy."""

    LOCATION = "location"  # prefer geographically close pairs
    LOAD = "load"  # prefer pairs whose peak loads are complementary

    def __str__(self) -> str:
        return self.value


class Mode(Enum):
    """Whether scores and capacity use the tick cost factors or plain traffic."""

    ENRICHED = "enriched"
    RAW = "raw"

    def __str__(self) -> str:
        return self.value


def resolve_tau(category: Category, mode: Mode,
                models: Mapping[Category, CostModel]) -> float:
    """Ticks-per-MB factor a run applies; 1 in raw mode and for OTHER."""
    if mode is Mode.RAW or category is Category.OTHER:
        return 1.0
    model = models.get(category)
    if model is None:
        raise NoCostModelError(f"no cost model for category {category} in enriched mode")
    return model.slope


@dataclass
class Deployment:
    """Server placement y(n) and per-BS assignment x(b, n) for one category.

    Every assigned node hosts a server and is an ancestor of the base station
    it serves; ``serve_vectors`` tracks the MB each server handles per step.
    """

    category: Category
    placement: set[str]
    assignment: dict[str, str]
    active_bs: frozenset[str]
    serve_vectors: dict[str, np.ndarray]

    def copy(self) -> "Deployment":
        return Deployment(
            self.category,
            set(self.placement),
            dict(self.assignment),
            self.active_bs,
            dict(self.serve_vectors),
        )

    def served_by(self) -> dict[str, set[str]]:
        grouped: dict[str, set[str]] = {n: set() for n in self.placement}
        for bs, node in self.assignment.items():
            grouped.setdefault(node, set()).add(bs)
        return grouped

    def validate(self, topology: Topology) -> None:
        if set(self.assignment) != set(self.active_bs):
            raise InvalidAssignmentError("assignment must cover exactly the active BSs")
        for bs, node in self.assignment.items():
            if node not in self.placement:
                raise InvalidAssignmentError(f"{bs} assigned to serverless node {node}")
            if not topology.is_ancestor(node, of=bs):
                raise InvalidAssignmentError(f"{node} does not serve {bs} in the DAG")
        served = set(self.assignment.values())
        empty = self.placement - served
        if empty:
            raise InvalidAssignmentError(f"servers without any base station: {sorted(empty)}")
        if set(self.serve_vectors) != self.placement:
            raise InvalidAssignmentError("serve vectors must exist exactly for placed servers")


def _demand_by_bs(topology: Topology, demand: Iterable[DemandSeries],
                  category: Category) -> dict[str, np.ndarray]:
    """Validated per-BS demand arrays for one category."""
    per_bs: dict[str, np.ndarray] = {}
    n_steps: int | None = None
    for series in demand:
        if series.category is not category:
            continue
        if series.bs_id not in topology.nodes:
            raise UnknownNodeError(f"demand series references unknown BS {series.bs_id!r}")
        if series.bs_id in per_bs:
            raise ConfigError(f"duplicate demand series for ({series.bs_id}, {category})")
        if n_steps is None:
            n_steps = series.values.size
        elif series.values.size != n_steps:
            raise ShapeError(
                f"series for {series.bs_id} has {series.values.size} steps, expected {n_steps}")
        per_bs[series.bs_id] = series.values
    return per_bs


def initial_deployment(topology: Topology, demand: Iterable[DemandSeries],
                       category: Category) -> Deployment:
    """One self-serving server at every BS with positive peak demand."""
    per_bs = _demand_by_bs(topology, demand, category)
    active = sorted(bs for bs, values in per_bs.items() if values.size and values.max() > 0)
    return Deployment(
        category,
        set(active),
        {bs: bs for bs in active},
        frozenset(active),
        {bs: per_bs[bs].copy() for bs in active},
    )


def _is_parent_child(topology: Topology, n1: str, n2: str) -> bool:
    return n1 in topology.parents[n2]


def _sibling_open_parents(topology: Topology, placement: set[str],
                          u: str, v: str) -> list[str]:
    common = set(topology.parents[u]) & set(topology.parents[v])
    return sorted(p for p in common if p not in placement)


def candidate_pairs(topology: Topology, deployment: Deployment) -> set[tuple[str, str]]:
    """Mergeable served pairs: (parent, child) links plus sibling pairs.

    A sibling pair is eligible only while some common parent is serverless,
    so that merging it always removes exactly one server; once every common
    parent hosts a server the same movement is reachable through the
    parent-child pairs instead.
    """
    placed = deployment.placement
    pairs: set[tuple[str, str]] = set()
    for node in placed:
        for child in topology.children[node]:
            if child in placed:
                pairs.add((node, child))
    sib_seen: set[tuple[str, str]] = set()
    for node in topology.nodes:
        kids = [k for k in topology.children[node] if k in placed]
        for u, v in combinations(kids, 2):
            if (u, v) in sib_seen:
                continue
            sib_seen.add((u, v))
            if _sibling_open_parents(topology, placed, u, v):
                pairs.add((u, v))
    return pairs


def score(topology: Topology, deployment: Deployment, pair: tuple[str, str],
          kind: ScoreKind, tau: float = 1.0) -> float:
    """Rank a candidate merge: negated distance, or the peak-load saving."""
    n1, n2 = pair
    if kind is ScoreKind.LOCATION:
        return -topology.distance(n1, n2)
    s1, s2 = deployment.serve_vectors[n1], deployment.serve_vectors[n2]
    return tau * (float(s1.max()) + float(s2.max()) - float((s1 + s2).max()))


def choose_common_parent(topology: Topology, deployment: Deployment,
                         pair: tuple[str, str], kind: ScoreKind) -> str:
    """Deterministic target for a sibling merge, among serverless common parents."""
    u, v = pair
    open_parents = _sibling_open_parents(topology, deployment.placement, u, v)
    if not open_parents:
        raise InvalidAssignmentError(f"no serverless common parent for pair ({u}, {v})")
    if kind is ScoreKind.LOCATION:
        return min(open_parents,
                   key=lambda p: (topology.distance(p, u) + topology.distance(p, v), p))
    merged = deployment.serve_vectors[u] + deployment.serve_vectors[v]
    return min(open_parents,
               key=lambda p: (float((merged + deployment.serve_vectors[p]).max())
                              if p in deployment.serve_vectors else float(merged.max()), p))


def consolidate(topology: Topology, deployment: Deployment, pair: tuple[str, str],
                kind: ScoreKind = ScoreKind.LOCATION) -> Deployment:
    """Apply one merge and return the new deployment (one server fewer).

    For a (parent, child) pair the child's stations move to the parent and the
    child's server disappears. For siblings both servers disappear and a new
    one at the chosen common parent takes over their stations.
    """
    if pair not in candidate_pairs(topology, deployment):
        raise InvalidAssignmentError(f"pair {pair} is not consolidation-eligible")
    n1, n2 = pair
    new = deployment.copy()
    if _is_parent_child(topology, n1, n2):
        target, removed = n1, (n2,)
    else:
        target, removed = choose_common_parent(topology, deployment, pair, kind), (n1, n2)

    merged = new.serve_vectors.get(target)
    for node in removed:
        vec = new.serve_vectors.pop(node)
        merged = vec if merged is None else merged + vec
        new.placement.discard(node)
    new.placement.add(target)
    new.serve_vectors[target] = merged
    gone = set(removed)
    for bs, node in new.assignment.items():
        if node in gone:
            new.assignment[bs] = target
    return new


@dataclass
class IterationLog:
    """Snapshot of one greedy iteration, the unit of every report."""

    iteration: int
    servers: dict[Level, int]
    traffic: dict[Level, float]  # MB served over the trace, per level
    latency_max_ms: float
    latency_mean_ms: float
    efficiency: float


@dataclass
class PlannerRun:
    category: Category
    l_max_ms: float
    score_kind: ScoreKind
    mode: Mode
    iterations: list[IterationLog]
    final: Deployment
    tau: float

    @property
    def final_servers(self) -> int:
        return len(self.final.placement)


class _GreedyState:
    """Mutable search state with an incrementally maintained score heap."""

    def __init__(self, topology: Topology, dep: Deployment, kind: ScoreKind,
                 tau: float, lat_model: LatencyModel, l_max_ms: float):
        self.t = topology
        self.dep = dep
        self.kind = kind
        self.tau = tau
        self.lat_model = lat_model
        self.l_max = l_max_ms

        sv = dep.serve_vectors
        self.n_steps = next(iter(sv.values())).size if sv else 0
        self.served: dict[str, set[str]] = dep.served_by()
        self.peaks: dict[str, float] = {n: float(v.max()) for n, v in sv.items()}
        self.node_mb: dict[str, float] = {n: float(v.sum()) for n, v in sv.items()}
        self.mean_total = (sum(self.node_mb.values()) / self.n_steps) if self.n_steps else 0.0
        self.denom = sum(self.peaks.values())

        self.level_servers: dict[Level, int] = {lvl: 0 for lvl in Level}
        self.level_traffic: dict[Level, float] = {lvl: 0.0 for lvl in Level}
        self.bs_at_level: dict[Level, int] = {lvl: 0 for lvl in Level}
        # sorted so float accumulation order never depends on set hashing
        for node in sorted(dep.placement):
            lvl = topology.nodes[node].level
            self.level_servers[lvl] += 1
            self.level_traffic[lvl] += self.node_mb[node]
            self.bs_at_level[lvl] += len(self.served[node])

        self.scores: dict[tuple[str, str], float] = {}
        self.heap: list[tuple[float, str, str]] = []
        self.banned: set[tuple[str, str]] = set()
        for pair in sorted(candidate_pairs(topology, dep)):
            self._set_score(pair)

    # -- scoring and the candidate heap -------------------------------------

    def _score(self, pair: tuple[str, str]) -> float:
        return score(self.t, self.dep, pair, self.kind, self.tau)

    def _set_score(self, pair: tuple[str, str]) -> None:
        value = self._score(pair)
        if self.scores.get(pair) != value:
            self.scores[pair] = value
            heapq.heappush(self.heap, (-value, pair[0], pair[1]))

    def pop_best(self) -> tuple[str, str] | None:
        while self.heap:
            neg, a, b = heapq.heappop(self.heap)
            if self.scores.get((a, b)) == -neg:
                return a, b
        return None

    def ban(self, pair: tuple[str, str]) -> None:
        # Latency violations are permanent: the merge target level is fixed.
        self.banned.add(pair)
        self.scores.pop(pair, None)

    def _revalidate(self, pair: tuple[str, str]) -> None:
        u, v = pair
        placed = self.dep.placement
        valid = pair not in self.banned and u in placed and v in placed
        if valid:
            if _is_parent_child(self.t, u, v):
                pass
            elif self.t.nodes[u].level == self.t.nodes[v].level:
                valid = bool(_sibling_open_parents(self.t, placed, u, v))
            else:
                valid = False
        if valid:
            self._set_score(pair)
        else:
            self.scores.pop(pair, None)

    def _refresh_around(self, changed: Iterable[str]) -> None:
        to_check: set[tuple[str, str]] = set()
        for n in changed:
            relatives: set[str] = set(self.t.parents[n]) | set(self.t.children[n])
            for p in self.t.parents[n]:
                relatives.update(self.t.children[p])
            relatives.discard(n)
            n_level = self.t.nodes[n].level
            for x in relatives:
                x_level = self.t.nodes[x].level
                if n_level == x_level + 1:
                    to_check.add((n, x))
                elif x_level == n_level + 1:
                    to_check.add((x, n))
                elif x_level == n_level:
                    to_check.add((n, x) if n < x else (x, n))
            # sibling pairs among n's children depend on n's server status
            kids = [k for k in self.t.children[n] if k in self.dep.placement]
            to_check.update(combinations(kids, 2))
        for pair in sorted(to_check):
            self._revalidate(pair)

    # -- merging -------------------------------------------------------------

    def merge_target(self, pair: tuple[str, str]) -> tuple[str, tuple[str, ...]]:
        n1, n2 = pair
        if _is_parent_child(self.t, n1, n2):
            return n1, (n2,)
        return self._choose_parent(n1, n2), (n1, n2)

    def _choose_parent(self, u: str, v: str) -> str:
        return choose_common_parent(self.t, self.dep, (u, v), self.kind)

    def feasible(self, pair: tuple[str, str]) -> bool:
        n1, n2 = pair
        if _is_parent_child(self.t, n1, n2):
            target_level = self.t.nodes[n1].level
        else:
            target_level = Level(self.t.nodes[n1].level + 1)
        return bs_latency(self.lat_model, int(target_level)) <= self.l_max

    def apply(self, pair: tuple[str, str]) -> None:
        target, removed = self.merge_target(pair)
        dep, t = self.dep, self.t
        target_level = t.nodes[target].level

        merged = dep.serve_vectors.get(target)
        had_server = merged is not None
        for node in removed:
            lvl = t.nodes[node].level
            vec = dep.serve_vectors.pop(node)
            merged = vec if merged is None else merged + vec
            self.denom -= self.peaks.pop(node)

            stations = self.served.pop(node)
            self.bs_at_level[lvl] -= len(stations)
            self.bs_at_level[target_level] += len(stations)
            for bs in stations:
                dep.assignment[bs] = target
            self.served.setdefault(target, set()).update(stations)

            moved_mb = self.node_mb.pop(node)
            self.level_traffic[lvl] -= moved_mb
            self.level_traffic[target_level] += moved_mb
            self.node_mb[target] = self.node_mb.get(target, 0.0) + moved_mb

            dep.placement.discard(node)
            self.level_servers[lvl] -= 1

        if had_server:
            self.denom -= self.peaks[target]
        else:
            dep.placement.add(target)
            self.level_servers[target_level] += 1
        dep.serve_vectors[target] = merged
        self.peaks[target] = float(merged.max())
        self.denom += self.peaks[target]

        self._refresh_around((target, *removed))

    # -- reporting -----------------------------------------------------------

    def log(self, iteration: int) -> IterationLog:
        active = len(self.dep.assignment)
        if active:
            lat = {lvl: bs_latency(self.lat_model, int(lvl)) for lvl in Level}
            lat_max = max(lat[lvl] for lvl in Level if self.bs_at_level[lvl] > 0)
            lat_mean = sum(self.bs_at_level[lvl] * lat[lvl] for lvl in Level) / active
        else:
            lat_max = lat_mean = 0.0
        eta = self.mean_total / self.denom if self.denom > 0 else 0.0
        return IterationLog(
            iteration,
            dict(self.level_servers),
            dict(self.level_traffic),
            lat_max,
            lat_mean,
            eta,
        )


def greedy_design(topology: Topology, demand: Iterable[DemandSeries], category: Category,
                  l_max_ms: float, kind: ScoreKind, mode: Mode = Mode.ENRICHED, *,
                  models: Mapping[Category, CostModel] | None = None,
                  latency_model: LatencyModel | None = None,
                  exhaustive_pairs: bool = False) -> PlannerRun:
    """Run the consolidation loop under a latency cap and log every iteration.

    The top-scoring pair is merged tentatively; a merge that would push the
    deployment latency beyond ``l_max_ms`` is rolled back and, by default,
    ends the run. With ``exhaustive_pairs`` the violating pair is skipped and
    the search continues through the remaining candidates.
    """
    if models is None:
        models = DEFAULT_COST_MODELS
    lat_model = latency_model or LatencyModel()
    if math.isnan(l_max_ms):
        raise ConfigError("l_max must be a number of milliseconds")
    tau = resolve_tau(category, mode, models)

    dep = initial_deployment(topology, demand, category)
    if dep.active_bs and l_max_ms < lat_model.access_ms:
        raise ConfigError(
            f"l_max {l_max_ms} ms is below the {lat_model.access_ms} ms access latency")

    state = _GreedyState(topology, dep, kind, tau, lat_model, l_max_ms)
    logs = [state.log(0)]
    iteration = 0
    while True:
        pair = state.pop_best()
        if pair is None:
            break
        if not state.feasible(pair):
            if exhaustive_pairs:
                state.ban(pair)
                continue
            break
        state.apply(pair)
        iteration += 1
        logs.append(state.log(iteration))
    return PlannerRun(category, l_max_ms, kind, mode, logs, dep, tau)


# --------------------------------------------------------------------------
# Multi-category orchestration
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class CategoryConfig:
    l_max_ms: float
    score_kind: ScoreKind
    mode: Mode


@dataclass
class CombinedPlan:
    """Per-category runs joined into one dimensioned deployment."""

    runs: dict[Category, PlannerRun]
    capacity: dict[str, float]  # node -> peak combined scaled load (ticks/step)
    efficiency: EfficiencyReport

    @property
    def total_servers(self) -> int:
        return len(self.capacity)


def multi_category_plan(topology: Topology, demand: Iterable[DemandSeries],
                        per_category_config: Mapping[Category, CategoryConfig], *,
                        models: Mapping[Category, CostModel] | None = None,
                        latency_model: LatencyModel | None = None,
                        exhaustive_pairs: bool = False,
                        parallel: bool = True) -> CombinedPlan:
    """Plan each category separately, then combine and dimension the servers.

    Servers are shared across categories: a node's capacity is the peak over
    time of the sum of the scaled loads every category assigns to it.
    """
    series = list(demand)
    present = [c for c in (Category.VIDEO, Category.GAMING, Category.MAPS, Category.OTHER)
               if any(s.category is c for s in series)]
    missing = [c for c in present if c not in per_category_config]
    if missing:
        raise ConfigError("missing planner config for categories: "
                          + ", ".join(str(c) for c in missing))

    def run_one(category: Category) -> PlannerRun:
        cfg = per_category_config[category]
        return greedy_design(topology, series, category, cfg.l_max_ms, cfg.score_kind,
                             cfg.mode, models=models, latency_model=latency_model,
                             exhaustive_pairs=exhaustive_pairs)

    if parallel and len(present) > 1:
        with ThreadPoolExecutor(max_workers=len(present)) as pool:
            results = list(pool.map(run_one, present))
        runs = dict(zip(present, results))
    else:
        runs = {category: run_one(category) for category in present}

    combined: dict[str, np.ndarray] = {}
    for category in present:
        run = runs[category]
        for node, vec in run.final.serve_vectors.items():
            scaled = run.tau * vec
            combined[node] = combined[node] + scaled if node in combined else scaled
    capacity = {node: float(vec.max()) for node, vec in sorted(combined.items())}

    report = efficiency(
        {category: runs[category].final.serve_vectors for category in present},
        {category: runs[category].tau for category in present},
    )
    return CombinedPlan(runs, capacity, report)


# --------------------------------------------------------------------------
# Run-log and deployment files
# --------------------------------------------------------------------------

RUN_LOG_HEADER = [
    "iter",
    "servers_bs", "servers_ring", "servers_agg", "servers_core",
    "traffic_bs", "traffic_ring", "traffic_agg", "traffic_core",
    "latency_max_ms", "latency_mean_ms", "efficiency",
]


def write_run_log(run: PlannerRun, path: str | Path) -> None:
    """One CSV row per iteration, the schema every report and chart consumes."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(RUN_LOG_HEADER)
        for log in run.iterations:
            writer.writerow(
                [log.iteration]
                + [log.servers[lvl] for lvl in Level]
                + [format(log.traffic[lvl], ".10g") for lvl in Level]
                + [format(log.latency_max_ms, ".10g"),
                   format(log.latency_mean_ms, ".10g"),
                   format(log.efficiency, ".10g")]
            )


def write_deployment_json(deployment: Deployment, path: str | Path) -> None:
    payload = {
        "category": deployment.category.value,
        "placements": sorted(deployment.placement),
        "assignments": {bs: deployment.assignment[bs] for bs in sorted(deployment.assignment)},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def load_deployment_json(topology: Topology, demand: Iterable[DemandSeries],
                         path: str | Path) -> Deployment:
    """Rebuild a validated Deployment (serve vectors included) from its export."""
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    category = Category(payload["category"])
    assignment: dict[str, str] = dict(payload["assignments"])
    per_bs = _demand_by_bs(topology, demand, category)

    n_steps = next(iter(per_bs.values())).size if per_bs else 0
    vectors: dict[str, np.ndarray] = {}
    for bs, node in assignment.items():
        if bs not in per_bs:
            raise ConfigError(f"deployment assigns {bs} but the trace has no demand for it")
        vectors.setdefault(node, np.zeros(n_steps))
        vectors[node] = vectors[node] + per_bs[bs]
    dep = Deployment(
        category,
        set(payload["placements"]),
        assignment,
        frozenset(assignment),
        vectors,
    )
    dep.validate(topology)
    return dep
