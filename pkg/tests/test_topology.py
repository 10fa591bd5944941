import math

import numpy as np
import pytest

from mecplan.errors import ConfigError, InvalidAssignmentError, UnknownNodeError
from mecplan.topology import Level, Topology, build_fat_tree, load_bs_positions
from mecplan.trace import SyntheticConfig, generate_bs_positions


def grid_positions(n: int, side: float = 10_000.0):
    cols = math.ceil(math.sqrt(n))
    return [(f"bs{i:04d}", side * (i % cols), side * (i // cols)) for i in range(n)]


def bfs_ancestors(topology: Topology, node: str) -> set[str]:
    """Independent closure over the exported parent edges."""
    parents: dict[str, set[str]] = {}
    for p, c in topology.f_edges:
        parents.setdefault(c, set()).add(p)
    seen = {node}
    frontier = [node]
    while frontier:
        nxt = []
        for n in frontier:
            for p in parents.get(n, ()):  # noqa: B905
                if p not in seen:
                    seen.add(p)
                    nxt.append(p)
        frontier = nxt
    return seen


# -- construction counts -------------------------------------------------------

@pytest.mark.parametrize("n_bs,rings,pods,cores", [
    (1, 1, 1, 1),
    (10, 1, 1, 1),
    (25, 3, 1, 1),
    (100, 10, 1, 1),
    (1000, 100, 10, 1),
])
def test_level_counts(n_bs, rings, pods, cores):
    topo = build_fat_tree(grid_positions(n_bs))
    counts = topo.counts_by_level()
    assert counts[Level.BASE_STATION] == n_bs
    assert counts[Level.RING] == rings
    assert counts[Level.AGGREGATION] == pods
    assert counts[Level.CORE] == cores


def test_single_bs_chain():
    topo = build_fat_tree([("bs0", 0.0, 0.0)])
    for nid, node in topo.nodes.items():
        if node.level is not Level.CORE:
            assert len(topo.parents[nid]) == 1
    assert topo.ancestors("bs0") == ("bs0", "ring0000", "pod0000", "core0000")


def test_25_bs_each_ring_one_parent():
    topo = build_fat_tree(grid_positions(25))
    for ring in topo.nodes_at(Level.RING):
        assert len(topo.parents[ring]) == 1  # min(2, #pods) with one pod


def test_empty_input_rejected():
    with pytest.raises(ConfigError):
        build_fat_tree([])


def test_duplicate_bs_rejected():
    with pytest.raises(ConfigError):
        build_fat_tree([("bs0", 0, 0), ("bs0", 1, 1)])


# -- structural invariants -------------------------------------------------------

@pytest.mark.parametrize("n_bs,seed", [(7, 0), (50, 1), (137, 2), (400, 3)])
def test_fat_tree_invariants(n_bs, seed):
    cfg = SyntheticConfig(n_bs=n_bs)
    topo = build_fat_tree(generate_bs_positions(cfg, seed=seed))
    counts = topo.counts_by_level()
    assert counts[Level.RING] == math.ceil(n_bs / 10)
    assert counts[Level.AGGREGATION] == math.ceil(counts[Level.RING] / 10)
    assert counts[Level.CORE] == math.ceil(counts[Level.AGGREGATION] / 10)

    for parent, child in topo.f_edges:
        assert topo.nodes[parent].level == topo.nodes[child].level + 1

    n_pods, n_cores = counts[Level.AGGREGATION], counts[Level.CORE]
    for nid, node in topo.nodes.items():
        if node.level is Level.BASE_STATION:
            assert len(topo.parents[nid]) == 1  # exactly one ring group
            assert not topo.children[nid]
        elif node.level is Level.RING:
            assert len(topo.parents[nid]) == min(2, n_pods)
            assert 1 <= len(topo.children[nid]) <= 10
        elif node.level is Level.AGGREGATION:
            assert len(topo.parents[nid]) == min(2, n_cores)
            assert len(topo.children[nid]) >= 1
        else:
            assert not topo.parents[nid]
            assert len(topo.children[nid]) >= 1

    # ring groups partition the base stations
    covered = [bs for ring in topo.nodes_at(Level.RING) for bs in topo.children[ring]]
    assert sorted(covered) == list(topo.bs_ids)

    # cores are fully meshed in G but share no serving edges
    cores = topo.nodes_at(Level.CORE)
    for i, a in enumerate(cores):
        for b in cores[i + 1:]:
            assert (a, b) in topo.g_edges
    assert not any(topo.nodes[p].level is Level.CORE and topo.nodes[c].level is Level.CORE
                   for p, c in topo.f_edges)


def test_build_deterministic():
    pos = generate_bs_positions(SyntheticConfig(n_bs=120), seed=8)
    t1, t2 = build_fat_tree(pos), build_fat_tree(pos)
    assert t1.f_edges == t2.f_edges
    assert {n: (v.x, v.y) for n, v in t1.nodes.items()} == \
           {n: (v.x, v.y) for n, v in t2.nodes.items()}


def test_colocated_positions_still_valid():
    # degenerate geometry: every BS at the same point
    topo = build_fat_tree([(f"bs{i:02d}", 0.0, 0.0) for i in range(40)])
    for nid, node in topo.nodes.items():
        if node.level is not Level.BASE_STATION:
            assert len(topo.children[nid]) >= 1


# -- queries ----------------------------------------------------------------------

def test_ancestors_core_is_itself():
    topo = build_fat_tree(grid_positions(25))
    core = topo.nodes_at(Level.CORE)[0]
    assert topo.ancestors(core) == (core,)


def test_ancestors_matches_bfs_closure():
    topo = build_fat_tree(grid_positions(230))
    for bs in topo.bs_ids[::17]:
        assert set(topo.ancestors(bs)) == bfs_ancestors(topo, bs)
        levels = {topo.nodes[n].level for n in topo.ancestors(bs)}
        assert levels == {Level.BASE_STATION, Level.RING, Level.AGGREGATION, Level.CORE}


def test_ancestors_includes_both_pod_parents():
    topo = build_fat_tree(grid_positions(230))  # 23 rings -> 3 pods
    ring = topo.nodes_at(Level.RING)[0]
    assert len(topo.parents[ring]) == 2
    assert set(topo.parents[ring]) <= set(topo.ancestors(ring))


def test_ancestors_unknown_node():
    topo = build_fat_tree(grid_positions(5))
    with pytest.raises(UnknownNodeError):
        topo.ancestors("nope")


def test_distance():
    topo = build_fat_tree([("a", 0.0, 0.0), ("b", 3.0, 4.0)])
    assert topo.distance("a", "a") == 0.0
    assert topo.distance("a", "b") == pytest.approx(5.0)
    rng = np.random.default_rng(4)
    names = list(topo.nodes)
    for _ in range(10):
        n1, n2 = rng.choice(names, size=2)
        assert topo.distance(n1, n2) == topo.distance(n2, n1)
    with pytest.raises(UnknownNodeError):
        topo.distance("a", "nope")


def test_hop_count():
    topo = build_fat_tree(grid_positions(25))
    bs = topo.bs_ids[0]
    ring = topo.parents[bs][0]
    core = topo.nodes_at(Level.CORE)[0]
    assert topo.hop_count(bs, bs) == 0
    assert topo.hop_count(bs, ring) == 1
    assert topo.hop_count(bs, core) == 3


def test_hop_count_requires_ancestor():
    topo = build_fat_tree(grid_positions(25))
    b0, b1 = topo.bs_ids[0], topo.bs_ids[1]
    with pytest.raises(InvalidAssignmentError):
        topo.hop_count(b0, b1)
    with pytest.raises(UnknownNodeError):
        topo.hop_count(b0, "nope")


# -- serialization -----------------------------------------------------------------

def test_json_round_trip(tmp_path):
    topo = build_fat_tree(grid_positions(37))
    path = tmp_path / "topo.json"
    topo.to_json(path)
    loaded = Topology.from_json(path)
    assert loaded.f_edges == topo.f_edges
    assert loaded.g_edges == topo.g_edges
    assert set(loaded.nodes) == set(topo.nodes)
    assert all(loaded.nodes[n].level == topo.nodes[n].level for n in topo.nodes)


def test_positions_csv(tmp_path):
    path = tmp_path / "bs.csv"
    path.write_text("bs_id,x,y\nbs1,0.5,1.5\nbs2,2.5,3.5\n")
    assert load_bs_positions(path) == [("bs1", 0.5, 1.5), ("bs2", 2.5, 3.5)]
    bad = tmp_path / "bad.csv"
    bad.write_text("bs_id,x\nbs1,0.5\n")
    with pytest.raises(ConfigError):
        load_bs_positions(bad)
