"""Fat-tree backhaul: base stations grouped into rings, rings into aggregation
pods, pods under core switches, with fan-out-2 uplinks and a full-mesh core.

The undirected graph G carries connectivity; the serving DAG F is oriented
parent -> child and encodes which upstream nodes may serve each base station.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, InvalidAssignmentError, UnknownNodeError

RING_SIZE = 10  # base stations per ring group
GROUP_SIZE = 10  # rings per pod, pods per core
FAN_OUT = 2  # uplinks per ring and per pod


class Level(IntEnum):
    """Network levels, ranked bottom-up."""

    BASE_STATION = 0
    RING = 1
    AGGREGATION = 2
    CORE = 3

    @property
    def label(self) -> str:
        return _LEVEL_LABELS[self]

    @property
    def short(self) -> str:
        return _LEVEL_SHORT[self]


_LEVEL_LABELS = {
    Level.BASE_STATION: "bs",
    Level.RING: "ring",
    Level.AGGREGATION: "aggregation",
    Level.CORE: "core",
}
_LEVEL_SHORT = {
    Level.BASE_STATION: "bs",
    Level.RING: "ring",
    Level.AGGREGATION: "agg",
    Level.CORE: "core",
}


@dataclass(frozen=True)
class Node:
    id: str
    level: Level
    x: float  # meters
    y: float


class Topology:
    """Immutable node/edge store with ancestor and distance queries."""

    def __init__(self, nodes: Iterable[Node], f_edges: Iterable[tuple[str, str]],
                 core_mesh: bool = True):
        self.nodes: dict[str, Node] = {n.id: n for n in nodes}
        self.f_edges: list[tuple[str, str]] = sorted(set(f_edges))
        self._validate_edges()

        self.parents: dict[str, tuple[str, ...]] = {nid: () for nid in self.nodes}
        self.children: dict[str, tuple[str, ...]] = {nid: () for nid in self.nodes}
        par: dict[str, list[str]] = {nid: [] for nid in self.nodes}
        chi: dict[str, list[str]] = {nid: [] for nid in self.nodes}
        for parent, child in self.f_edges:
            par[child].append(parent)
            chi[parent].append(child)
        for nid in self.nodes:
            self.parents[nid] = tuple(sorted(par[nid]))
            self.children[nid] = tuple(sorted(chi[nid]))

        self.bs_ids: tuple[str, ...] = tuple(sorted(
            nid for nid, n in self.nodes.items() if n.level is Level.BASE_STATION))

        g: set[tuple[str, str]] = {tuple(sorted(e)) for e in self.f_edges}
        if core_mesh:
            cores = self.nodes_at(Level.CORE)
            g.update((a, b) for i, a in enumerate(cores) for b in cores[i + 1:])
        self.g_edges: list[tuple[str, str]] = sorted(g)

        self._ancestors: dict[str, tuple[str, ...]] = {
            nid: self._closure(nid) for nid in sorted(self.nodes)}
        self._ancestor_sets: dict[str, frozenset[str]] = {
            nid: frozenset(a) for nid, a in self._ancestors.items()}

    def _validate_edges(self) -> None:
        for parent, child in self.f_edges:
            if parent not in self.nodes or child not in self.nodes:
                raise ConfigError(f"serving edge ({parent}, {child}) references unknown node")
            if self.nodes[parent].level != self.nodes[child].level + 1:
                raise ConfigError(
                    f"serving edge ({parent}, {child}) must connect adjacent levels")

    def _closure(self, nid: str) -> tuple[str, ...]:
        result = [nid]
        frontier = [nid]
        while frontier:
            ups = sorted({p for n in frontier for p in self.parents[n] if p not in result})
            result.extend(ups)
            frontier = ups
        return tuple(result)

    def _require(self, nid: str) -> Node:
        node = self.nodes.get(nid)
        if node is None:
            raise UnknownNodeError(f"unknown node id {nid!r}")
        return node

    def nodes_at(self, level: Level) -> list[str]:
        return sorted(nid for nid, n in self.nodes.items() if n.level is level)

    def counts_by_level(self) -> dict[Level, int]:
        counts = {level: 0 for level in Level}
        for node in self.nodes.values():
            counts[node.level] += 1
        return counts

    def ancestors(self, node_id: str) -> tuple[str, ...]:
        """The node itself plus every upstream node that may serve it, bottom-up."""
        self._require(node_id)
        return self._ancestors[node_id]

    def is_ancestor(self, node_id: str, of: str) -> bool:
        return node_id in self._ancestor_sets[of]

    def distance(self, n1: str, n2: str) -> float:
        """Euclidean distance in meters between two nodes."""
        a, b = self._require(n1), self._require(n2)
        return float(np.hypot(a.x - b.x, a.y - b.y))

    def hop_count(self, bs_id: str, node_id: str) -> int:
        """Backhaul hops from a base station up to a serving ancestor."""
        bs, node = self._require(bs_id), self._require(node_id)
        if node_id not in self._ancestor_sets[bs_id]:
            raise InvalidAssignmentError(f"{node_id} is not an ancestor of {bs_id}")
        return int(node.level) - int(bs.level)

    # -- serialization ------------------------------------------------------

    def to_json(self, path: str | Path) -> None:
        payload = {
            "nodes": [
                {"id": n.id, "level": n.level.label, "x": n.x, "y": n.y}
                for _, n in sorted(self.nodes.items())
            ],
            "f_edges": [list(e) for e in self.f_edges],
            "g_edges": [list(e) for e in self.g_edges],
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2)
            fh.write("\n")

    @classmethod
    def from_json(cls, path: str | Path) -> "Topology":
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
        by_label = {lvl.label: lvl for lvl in Level}
        nodes = [
            Node(item["id"], by_label[item["level"]], float(item["x"]), float(item["y"]))
            for item in payload["nodes"]
        ]
        return cls(nodes, [tuple(e) for e in payload["f_edges"]])


def load_bs_positions(path: str | Path) -> list[tuple[str, float, float]]:
    """Read base-station positions from a bs_id,x,y CSV."""
    out: list[tuple[str, float, float]] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in ("bs_id", "x", "y") if c not in (reader.fieldnames or [])]
        if missing:
            raise ConfigError(f"positions file {path} missing columns: {', '.join(missing)}")
        for row in reader:
            out.append((row["bs_id"], float(row["x"]), float(row["y"])))
    return out


def _capped_kmeans(points: np.ndarray, cap: int, iters: int = 10) -> list[list[int]]:
    """Group point indices into ceil(n/cap) clusters of at most cap members.

    Lloyd iterations with a greedy capacity-respecting assignment pass; every
    tie breaks on index order, so results are deterministic for a fixed input
    order. With k = ceil(n/cap) no cluster can end up empty.
    """
    n = len(points)
    k = -(-n // cap)
    if k == 1:
        return [list(range(n))]

    centroids = points[[(i * n) // k for i in range(k)]].astype(np.float64)
    assign = np.full(n, -1, dtype=np.int64)
    prev: tuple[int, ...] | None = None
    for _ in range(iters):
        dist = np.linalg.norm(points[:, None, :] - centroids[None, :, :], axis=2)
        order = np.argsort(dist, axis=None, kind="stable")
        assign[:] = -1
        counts = np.zeros(k, dtype=np.int64)
        remaining = n
        for flat in order:
            p, c = divmod(int(flat), k)
            if assign[p] >= 0 or counts[c] >= cap:
                continue
            assign[p] = c
            counts[c] += 1
            remaining -= 1
            if remaining == 0:
                break
        current = tuple(int(a) for a in assign)
        if current == prev:
            break
        prev = current
        for c in range(k):
            members = points[assign == c]
            if len(members):
                centroids[c] = members.mean(axis=0)

    clusters: list[list[int]] = [[] for _ in range(k)]
    for p in range(n):
        clusters[int(assign[p])].append(p)
    clusters.sort(key=lambda group: group[0])
    return clusters


def _uplinks(child_pos: np.ndarray, own: int, parent_pos: np.ndarray,
             parent_ids: list[str]) -> list[str]:
    """Own-group parent plus nearest other parents, up to the fan-out.

    Keeping the own-group parent guarantees every upper-level node retains at
    least one child even on degenerate (co-located) geometries.
    """
    want = min(FAN_OUT, len(parent_ids))
    others = sorted(
        (i for i in range(len(parent_ids)) if i != own),
        key=lambda i: (float(np.hypot(*(child_pos - parent_pos[i]))), parent_ids[i]),
    )
    chosen = [own] + others[: want - 1]
    return [parent_ids[i] for i in chosen]


def build_fat_tree(bs_positions: Sequence[tuple[str, float, float]]) -> Topology:
    """Build the ring/aggregation/core hierarchy over the given base stations.

    Ring count is ceil(|B|/10), pods ceil(rings/10), cores ceil(pods/10).
    Grouping is geographic (capacity-capped k-means, seeded by sorted id);
    each upper-level node sits at the centroid of its children.
    """
    if not bs_positions:
        raise ConfigError("at least one base station position is required")
    seen: set[str] = set()
    for bs_id, _, _ in bs_positions:
        if bs_id in seen:
            raise ConfigError(f"duplicate base station id {bs_id!r}")
        seen.add(bs_id)

    ordered = sorted(bs_positions)
    bs_ids = [b[0] for b in ordered]
    bs_pos = np.array([[b[1], b[2]] for b in ordered], dtype=np.float64)

    ring_groups = _capped_kmeans(bs_pos, RING_SIZE)
    ring_ids = [f"ring{i:04d}" for i in range(len(ring_groups))]
    ring_pos = np.array([bs_pos[g].mean(axis=0) for g in ring_groups])

    pod_groups = _capped_kmeans(ring_pos, GROUP_SIZE)
    pod_ids = [f"pod{i:04d}" for i in range(len(pod_groups))]
    pod_pos = np.array([ring_pos[g].mean(axis=0) for g in pod_groups])

    core_groups = _capped_kmeans(pod_pos, GROUP_SIZE)
    core_ids = [f"core{i:04d}" for i in range(len(core_groups))]
    core_pos = np.array([pod_pos[g].mean(axis=0) for g in core_groups])

    nodes = [Node(bs_ids[i], Level.BASE_STATION, float(bs_pos[i, 0]), float(bs_pos[i, 1]))
             for i in range(len(bs_ids))]
    nodes += [Node(ring_ids[i], Level.RING, float(ring_pos[i, 0]), float(ring_pos[i, 1]))
              for i in range(len(ring_ids))]
    nodes += [Node(pod_ids[i], Level.AGGREGATION, float(pod_pos[i, 0]), float(pod_pos[i, 1]))
              for i in range(len(pod_ids))]
    nodes += [Node(core_ids[i], Level.CORE, float(core_pos[i, 0]), float(core_pos[i, 1]))
              for i in range(len(core_ids))]

    f_edges: list[tuple[str, str]] = []
    for r, group in enumerate(ring_groups):
        f_edges.extend((ring_ids[r], bs_ids[b]) for b in group)

    pod_of_ring = {r: p for p, group in enumerate(pod_groups) for r in group}
    for r in range(len(ring_ids)):
        for pod in _uplinks(ring_pos[r], pod_of_ring[r], pod_pos, pod_ids):
            f_edges.append((pod, ring_ids[r]))

    core_of_pod = {p: c for c, group in enumerate(core_groups) for p in group}
    for p in range(len(pod_ids)):
        for core in _uplinks(pod_pos[p], core_of_pod[p], core_pos, core_ids):
            f_edges.append((core, pod_ids[p]))

    return Topology(nodes, f_edges)
