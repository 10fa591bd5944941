"""Acceptance suite: one test per release criterion, one printed line each.

Run with `pytest tests/test_acceptance.py -v -s` to see the PASS/FAIL lines.
The directional-ordering checks use a fixed-seed synthetic trace and assert
orderings only; absolute figures depend on the trace and are not targets.
"""

import math
import statistics
from contextlib import contextmanager

import numpy as np
import pytest

from mecplan.metrics import LatencyModel, bs_latency, deployment_latency, efficiency
from mecplan.oracle import gap_report, solve_optimal
from mecplan.planner import CategoryConfig, Mode, ScoreKind, greedy_design, multi_category_plan
from mecplan.topology import Level, build_fat_tree
from mecplan.trace import (
    Category,
    DEFAULT_COST_MODELS,
    DemandSeries,
    SyntheticConfig,
    TaggingRules,
    aggregate,
    enrich,
    generate_bs_positions,
    generate_synthetic_trace,
)

MODEL = LatencyModel()


@contextmanager
def criterion(name: str):
    try:
        yield
    except BaseException:
        print(f"[FAIL] {name}")
        raise
    print(f"[PASS] {name}")


def random_series(topology, rng, category=Category.GAMING, steps=24, zero_fraction=0.0):
    series = []
    for bs in topology.bs_ids:
        values = rng.uniform(0.0, 50.0, size=steps)
        if zero_fraction and rng.random() < zero_fraction:
            values = np.zeros(steps)
        series.append(DemandSeries(bs, category, values))
    return series


def test_cost_model_constants():
    with criterion("stored cost constants: 1 MB -> 0.25 / 161.38 / 67.44 ticks, exact"):
        expected = {Category.VIDEO: 0.25, Category.GAMING: 161.38, Category.MAPS: 67.44}
        for category, ticks in expected.items():
            one_mb = DemandSeries("bs0", category, np.array([1.0]))
            assert enrich(one_mb, DEFAULT_COST_MODELS).ticks[0] == ticks  # zero tolerance


def test_latency_model():
    with criterion("hop latency: 0/1/2/3 hops -> 5.0/7.3/9.6/11.9 ms, core within 0.1 of 12"):
        for hops, expected in enumerate((5.0, 7.3, 9.6, 11.9)):
            assert bs_latency(MODEL, hops) == pytest.approx(expected, abs=1e-12)
        assert abs(bs_latency(MODEL, 3) - 12.0) <= 0.1 + 1e-9


def test_gaming_cap_keeps_core_empty():
    with criterion("10 ms gaming cap: no core assignment on 100 random topologies"):
        rng = np.random.default_rng(77)
        for trial in range(100):
            n_bs = int(rng.integers(50, 1001))
            cfg = SyntheticConfig(n_bs=n_bs)
            topology = build_fat_tree(generate_bs_positions(cfg, seed=trial))
            series = random_series(topology, rng)
            kind = ScoreKind.LOAD if trial % 2 else ScoreKind.LOCATION
            run = greedy_design(topology, series, Category.GAMING, 10.0, kind,
                                Mode.RAW, exhaustive_pairs=bool(trial % 3 == 0))
            assert all(topology.nodes[node].level is not Level.CORE
                       for node in run.final.assignment.values())
            assert run.iterations[-1].latency_max_ms <= 10.0


def test_gaming_tick_share():
    with criterion("calibration trace: gaming holds >= 87% of classified CPU ticks"):
        cfg = SyntheticConfig(n_bs=300, days=7)  # default shares: 66/15/4/15
        records = generate_synthetic_trace(cfg, seed=404)
        trace = aggregate(records, TaggingRules.default())
        ticks = {c: 0.0 for c in (Category.VIDEO, Category.GAMING, Category.MAPS)}
        for series in trace.series:
            if series.category in ticks:
                ticks[series.category] += float(enrich(series, DEFAULT_COST_MODELS).ticks.sum())
        share = ticks[Category.GAMING] / sum(ticks.values())
        print(f"  gaming tick share: {share:.4f}")
        assert share >= 0.90 - 0.03


def test_greedy_mechanics_1000_bs():
    with criterion("1000-BS run: one server per active BS at iteration 0, then -1 per step"):
        cfg = SyntheticConfig(n_bs=1000, days=1)
        topology = build_fat_tree(generate_bs_positions(cfg, seed=1))
        trace = aggregate(generate_synthetic_trace(cfg, seed=1), TaggingRules.default())
        run = greedy_design(topology, trace.series, Category.VIDEO, math.inf, ScoreKind.LOAD)
        active = len(run.final.active_bs)
        assert active == 1000  # every BS carries video demand on this trace
        first = run.iterations[0]
        assert first.servers[Level.BASE_STATION] == active
        assert sum(first.servers.values()) == active
        for i, log in enumerate(run.iterations):
            assert sum(log.servers.values()) == active - i
        assert len(run.iterations) > 900  # the log covers the full consolidation


def test_oracle_equivalence():
    with criterion("200 random instances: greedy feasible, gap >= 1 vs exhaustive optimum"):
        caps = [5.0, bs_latency(MODEL, 1), bs_latency(MODEL, 2), bs_latency(MODEL, 3),
                math.inf]
        rng = np.random.default_rng(55)
        gaps = []
        for trial in range(200):
            n_bs = int(rng.integers(1, 17))  # total nodes stay within 20
            cfg = SyntheticConfig(n_bs=n_bs)
            topology = build_fat_tree(generate_bs_positions(cfg, seed=1000 + trial))
            assert len(topology.nodes) <= 20
            series = random_series(topology, rng, steps=12, zero_fraction=0.25)
            l_max = caps[int(rng.integers(0, len(caps)))]
            kind = ScoreKind.LOAD if trial % 2 else ScoreKind.LOCATION
            run = greedy_design(topology, series, Category.GAMING, l_max, kind, Mode.RAW)
            solution = solve_optimal(topology, series, Category.GAMING, l_max)
            assert solution.feasible
            run.final.validate(topology)
            lat_max, _ = deployment_latency(topology, run.final, MODEL)
            assert lat_max <= l_max
            gap = gap_report(run, solution)
            assert gap >= 1.0
            gaps.append(gap)
        print(f"  median gap: {statistics.median(gaps):.3f}, worst: {max(gaps):.3f}")


def test_efficiency_oracle_cases():
    with criterion("efficiency: constant load -> 1, half duty -> 0.5, merge -> 1.0"):
        tau = {Category.VIDEO: 1.0}
        const = efficiency({Category.VIDEO: {"n": np.array([10.0, 10.0, 10.0])}}, tau)
        assert const.eta == pytest.approx(1.0, abs=1e-9)
        half = efficiency({Category.VIDEO: {"n": np.array([10.0, 0.0])}}, tau)
        assert half.eta == pytest.approx(0.5, abs=1e-9)
        split = efficiency(
            {Category.VIDEO: {"a": np.array([10.0, 0.0]), "b": np.array([0.0, 10.0])}}, tau)
        merged = efficiency({Category.VIDEO: {"ab": np.array([10.0, 10.0])}}, tau)
        assert split.eta == pytest.approx(0.5, abs=1e-9)
        assert merged.eta == pytest.approx(1.0, abs=1e-9)


def directional_trace():
    # anti-correlated diurnal peaks; video bursty, gaming flat
    cfg = SyntheticConfig(
        n_bs=300, days=3,
        peak_hours={Category.VIDEO: 21.0, Category.GAMING: 9.0,
                    Category.MAPS: 15.0, Category.OTHER: 3.0},
        amplitudes={Category.VIDEO: 0.9, Category.GAMING: 0.25,
                    Category.MAPS: 0.5, Category.OTHER: 0.6},
        bs_phase_jitter_h=3.0,
    )
    topology = build_fat_tree(generate_bs_positions(cfg, seed=2026))
    trace = aggregate(generate_synthetic_trace(cfg, seed=2026), TaggingRules.default())
    return topology, trace


def test_directional_findings():
    topology, trace = directional_trace()
    categories = (Category.VIDEO, Category.GAMING, Category.MAPS)
    series = [s for s in trace.series if s.category in categories]

    def plan(kind, mode):
        cfgs = {c: CategoryConfig(math.inf, kind, mode) for c in categories}
        return multi_category_plan(topology, series, cfgs)

    loc = plan(ScoreKind.LOCATION, Mode.ENRICHED)
    load = plan(ScoreKind.LOAD, Mode.ENRICHED)
    load_raw = plan(ScoreKind.LOAD, Mode.RAW)

    with criterion("ordering (a): load-based final efficiency >= location-based"):
        print(f"  load eta {load.efficiency.eta:.4f} vs location eta {loc.efficiency.eta:.4f}")
        assert load.efficiency.eta >= loc.efficiency.eta

    with criterion("ordering (b): location latency <= load latency at equal iterations"):
        for category in categories:
            a, b = loc.runs[category], load.runs[category]
            i = min(len(a.iterations), len(b.iterations)) - 1
            assert a.iterations[i].latency_max_ms <= b.iterations[i].latency_max_ms
            assert a.iterations[i].latency_mean_ms <= b.iterations[i].latency_mean_ms

    with criterion("ordering (c): enriched-mode final efficiency >= raw-mode (load-based)"):
        print(f"  enriched eta {load.efficiency.eta:.4f} vs raw eta {load_raw.efficiency.eta:.4f}")
        assert load.efficiency.eta >= load_raw.efficiency.eta


def test_latency_monotone_over_random_runs():
    with criterion("max latency is non-decreasing over 50 random run logs"):
        rng = np.random.default_rng(99)
        caps = [bs_latency(MODEL, 1), bs_latency(MODEL, 2), bs_latency(MODEL, 3), math.inf]
        for trial in range(50):
            n_bs = int(rng.integers(20, 201))
            cfg = SyntheticConfig(n_bs=n_bs)
            topology = build_fat_tree(generate_bs_positions(cfg, seed=5000 + trial))
            series = random_series(topology, rng, steps=16, zero_fraction=0.1)
            kind = ScoreKind.LOAD if trial % 2 else ScoreKind.LOCATION
            l_max = caps[int(rng.integers(0, len(caps)))]
            run = greedy_design(topology, series, Category.GAMING, l_max, kind, Mode.RAW,
                                exhaustive_pairs=bool(trial % 4 == 0))
            lats = [log.latency_max_ms for log in run.iterations]
            assert all(a <= b + 1e-12 for a, b in zip(lats, lats[1:]))
