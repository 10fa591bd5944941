"""Exhaustive optimal server placement for desk-scale instances.

Finds the smallest server set such that every base station with demand has a
serving ancestor within the latency cap. Enumerates set sizes in increasing
order over a dominance-pruned candidate universe, so the first feasible size
is globally minimal. Intended to bound the greedy heuristic's optimality gap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Iterable

from .errors import BudgetExceededError, ConfigError
from .metrics import LatencyModel, bs_latency
from .planner import PlannerRun, _demand_by_bs
from .topology import Topology
from .trace import Category, DemandSeries

MAX_NODES = 25  # enumeration guard


@dataclass
class OracleSolution:
    min_servers: int
    placement: tuple[str, ...]
    assignment: dict[str, str]
    feasible: bool
    category: Category
    l_max_ms: float


def solve_optimal(topology: Topology, demand: Iterable[DemandSeries], category: Category,
                  l_max_ms: float, model: LatencyModel | None = None) -> OracleSolution:
    """Minimum-cardinality feasible placement, by exhaustive size-ordered search."""
    if len(topology.nodes) > MAX_NODES:
        raise BudgetExceededError(
            f"{len(topology.nodes)} nodes exceeds the oracle budget of {MAX_NODES}")
    model = model or LatencyModel()

    per_bs = _demand_by_bs(topology, demand, category)
    active = sorted(bs for bs, values in per_bs.items() if values.size and values.max() > 0)
    if not active:
        return OracleSolution(0, (), {}, True, category, l_max_ms)

    feasible_servers: dict[str, list[str]] = {}
    for bs in active:
        options = [node for node in topology.ancestors(bs)
                   if bs_latency(model, topology.hop_count(bs, node)) <= l_max_ms]
        if not options:
            return OracleSolution(0, (), {}, False, category, l_max_ms)
        feasible_servers[bs] = options

    index = {bs: i for i, bs in enumerate(active)}
    cover: dict[str, int] = {}
    for bs, options in feasible_servers.items():
        for node in options:
            cover[node] = cover.get(node, 0) | (1 << index[bs])

    # Dominated candidates (coverage contained in another's) can never shrink
    # an optimal set; equal coverages keep the lowest id.
    candidates = sorted(cover)
    kept: list[str] = []
    for a in candidates:
        dominated = False
        for b in candidates:
            if a == b:
                continue
            if cover[a] | cover[b] == cover[b] and (cover[a] != cover[b] or b < a):
                dominated = True
                break
        if not dominated:
            kept.append(a)

    full = (1 << len(active)) - 1
    chosen: tuple[str, ...] | None = None
    for size in range(1, len(kept) + 1):
        for combo in combinations(kept, size):
            mask = 0
            for node in combo:
                mask |= cover[node]
            if mask == full:
                chosen = combo
                break
        if chosen is not None:
            break
    assert chosen is not None  # the union of all candidates covers every BS

    chosen_set = set(chosen)
    assignment = {
        bs: min((node for node in feasible_servers[bs] if node in chosen_set),
                key=lambda n: (bs_latency(model, topology.hop_count(bs, n)), n))
        for bs in active
    }
    return OracleSolution(len(chosen), tuple(sorted(chosen)), assignment, True,
                          category, l_max_ms)


def gap_report(greedy_run: PlannerRun, oracle: OracleSolution) -> float:
    """Greedy-final server count over the oracle minimum (>= 1 on any instance)."""
    if greedy_run.category is not oracle.category or greedy_run.l_max_ms != oracle.l_max_ms:
        raise ConfigError("gap comparison requires the same category and latency cap")
    if not oracle.feasible:
        raise ConfigError("oracle found the instance infeasible; no gap is defined")
    greedy = greedy_run.final_servers
    if oracle.min_servers == 0:
        return 1.0 if greedy == 0 else math.inf
    return greedy / oracle.min_servers
