import math
from itertools import combinations

import numpy as np
import pytest

from mecplan.errors import BudgetExceededError, ConfigError
from mecplan.metrics import LatencyModel, bs_latency
from mecplan.oracle import OracleSolution, gap_report, solve_optimal
from mecplan.planner import ScoreKind, greedy_design
from mecplan.trace import Category, DemandSeries

from conftest import make_instance

MODEL = LatencyModel()


def naive_min_servers(topology, demand, category, l_max):
    """Reference: enumerate every node subset without any pruning."""
    active = [s.bs_id for s in demand
              if s.category is category and s.values.size and s.values.max() > 0]
    if not active:
        return 0, True
    options = {}
    for bs in active:
        feas = [n for n in topology.ancestors(bs)
                if bs_latency(MODEL, topology.hop_count(bs, n)) <= l_max]
        if not feas:
            return 0, False
        options[bs] = set(feas)
    nodes = sorted(topology.nodes)
    for size in range(1, len(nodes) + 1):
        for combo in combinations(nodes, size):
            chosen = set(combo)
            if all(options[bs] & chosen for bs in active):
                return size, True
    raise AssertionError("unreachable")


def tiny_instance(n_bs, seed, zero_fraction=0.0):
    topo, trace = make_instance(n_bs, seed=seed, days=1)
    series = [s for s in trace.series if s.category is Category.GAMING]
    if zero_fraction:
        rng = np.random.default_rng(seed + 1)
        for s in series:
            if rng.random() < zero_fraction:
                s.values = np.zeros_like(s.values)
    return topo, series


def test_access_only_cap_forces_self_serving():
    topo, series = tiny_instance(3, seed=2)
    sol = solve_optimal(topo, series, Category.GAMING, 5.0)
    assert sol.feasible
    assert sol.min_servers == len(series)
    assert all(bs == node for bs, node in sol.assignment.items())


def test_unbounded_cap_uses_one_shared_ancestor():
    topo, series = tiny_instance(10, seed=4)  # one ring, one pod, one core
    sol = solve_optimal(topo, series, Category.GAMING, math.inf)
    assert sol.feasible and sol.min_servers == 1
    (server,) = sol.placement
    for bs in sol.assignment:
        assert server in topo.ancestors(bs)


def test_no_active_bs():
    topo, series = tiny_instance(3, seed=2)
    zeroed = [DemandSeries(s.bs_id, s.category, np.zeros_like(s.values)) for s in series]
    sol = solve_optimal(topo, zeroed, Category.GAMING, 5.0)
    assert sol == OracleSolution(0, (), {}, True, Category.GAMING, 5.0)


def test_infeasible_below_access_latency():
    topo, series = tiny_instance(3, seed=2)
    sol = solve_optimal(topo, series, Category.GAMING, 4.0)
    assert not sol.feasible


def test_budget_guard():
    topo, trace = make_instance(40, seed=6, days=1)
    with pytest.raises(BudgetExceededError):
        solve_optimal(topo, trace.series, Category.GAMING, 10.0)


def test_oracle_matches_naive_enumeration():
    caps = [5.0, bs_latency(MODEL, 1), bs_latency(MODEL, 2), math.inf]
    rng = np.random.default_rng(33)
    for trial in range(12):
        n_bs = int(rng.integers(2, 9))
        topo, series = tiny_instance(n_bs, seed=100 + trial, zero_fraction=0.2)
        l_max = caps[trial % len(caps)]
        sol = solve_optimal(topo, series, Category.GAMING, l_max)
        expected, feasible = naive_min_servers(topo, series, Category.GAMING, l_max)
        assert sol.feasible == feasible
        if feasible:
            assert sol.min_servers == expected
            # solution is actually feasible at the cap
            for bs, node in sol.assignment.items():
                assert bs_latency(MODEL, topo.hop_count(bs, node)) <= l_max


def test_assignment_prefers_lowest_latency_then_id():
    topo, series = tiny_instance(10, seed=4)
    sol = solve_optimal(topo, series, Category.GAMING, math.inf)
    for bs, node in sol.assignment.items():
        lat = bs_latency(MODEL, topo.hop_count(bs, node))
        for other in sol.placement:
            if other in topo.ancestors(bs):
                other_lat = bs_latency(MODEL, topo.hop_count(bs, other))
                assert (lat, node) <= (other_lat, other)


def test_gap_report_values():
    topo, series = tiny_instance(4, seed=8)
    run = greedy_design(topo, series, Category.GAMING, 5.0, ScoreKind.LOAD)
    sol = solve_optimal(topo, series, Category.GAMING, 5.0)
    assert gap_report(run, sol) == 1.0  # both pinned to self-serving

    relaxed = solve_optimal(topo, series, Category.GAMING, math.inf)
    loose_run = greedy_design(topo, series, Category.GAMING, math.inf, ScoreKind.LOAD)
    assert gap_report(loose_run, relaxed) >= 1.0


def test_gap_report_empty_instance():
    topo, series = tiny_instance(3, seed=2)
    zeroed = [DemandSeries(s.bs_id, s.category, np.zeros_like(s.values)) for s in series]
    run = greedy_design(topo, zeroed, Category.GAMING, 5.0, ScoreKind.LOAD)
    sol = solve_optimal(topo, zeroed, Category.GAMING, 5.0)
    assert gap_report(run, sol) == 1.0


def test_gap_report_mismatched_instances():
    topo, series = tiny_instance(4, seed=8)
    run = greedy_design(topo, series, Category.GAMING, 5.0, ScoreKind.LOAD)
    sol = solve_optimal(topo, series, Category.GAMING, math.inf)
    with pytest.raises(ConfigError):
        gap_report(run, sol)
