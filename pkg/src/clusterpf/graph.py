"""Vertex universes, distances, neighborhoods, and the partitions built on them.

A :class:`SpatialLayout` owns a fixed, finite vertex set together with a
distance structure: either Euclidean distance computed from per-vertex
coordinates, or hop distance (shortest-path length on the adjacency graph,
``inf`` across disconnected pairs). Active-set neighborhoods, inner
boundaries, cluster partitions, and the max-type quantities consumed by the
error-bound calculators are all derived from a layout.

All types here are immutable after construction and all operations are pure
functions, so everything can be shared freely across threads.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from enum import Enum
from functools import cached_property, lru_cache
from typing import Iterable, Sequence

import numpy as np

from .errors import AdjacencyError, DomainError


class DistanceBackend(str, Enum):
    EUCLIDEAN = "euclidean"
    HOP = "hop"


@dataclass(frozen=True, eq=False)
class SpatialLayout:
    """Finite vertex universe with a symmetric adjacency and a distance rule.

    ``vertices`` is stored sorted ascending and row/column ``i`` of
    ``adjacency`` refers to ``vertices[i]``. The hop backend defines
    ``d(v, v')`` as the shortest-path length on the adjacency graph; the
    euclidean backend requires a coordinate pair for every vertex.
    """

    vertices: tuple[int, ...]
    adjacency: np.ndarray
    coordinates: dict[int, tuple[float, float]] | None = None
    distance_backend: DistanceBackend = DistanceBackend.HOP

    def __post_init__(self):
        verts = tuple(sorted(int(v) for v in self.vertices))
        if len(set(verts)) != len(verts):
            raise DomainError("duplicate vertex ids in layout")
        if verts and verts[0] < 0:
            raise DomainError("vertex ids must be non-negative")
        object.__setattr__(self, "vertices", verts)

        adj = np.asarray(self.adjacency)
        m = len(verts)
        if adj.shape != (m, m):
            raise AdjacencyError(f"adjacency must be {m}x{m}, got {adj.shape}")
        if not np.all((adj == 0) | (adj == 1)):
            i, j = np.argwhere((adj != 0) & (adj != 1))[0]
            raise AdjacencyError(f"non-binary entry at row {i}, column {j}")
        adj = adj.astype(bool)
        if m and adj.diagonal().any():
            i = int(np.flatnonzero(adj.diagonal())[0])
            raise AdjacencyError(f"nonzero diagonal at row {i}, column {i}")
        if not np.array_equal(adj, adj.T):
            i, j = np.argwhere(adj != adj.T)[0]
            raise AdjacencyError(f"asymmetric entries at row {i}, column {j}")
        adj.setflags(write=False)
        object.__setattr__(self, "adjacency", adj)

        backend = DistanceBackend(self.distance_backend)
        object.__setattr__(self, "distance_backend", backend)
        if backend is DistanceBackend.EUCLIDEAN:
            coords = self.coordinates or {}
            missing = [v for v in verts if v not in coords]
            if missing:
                raise DomainError(
                    f"euclidean backend requires coordinates for every vertex; "
                    f"missing {missing[:5]}"
                )

    def __len__(self) -> int:
        return len(self.vertices)

    def __contains__(self, v: int) -> bool:
        return v in self._index

    @cached_property
    def _index(self) -> dict[int, int]:
        return {v: i for i, v in enumerate(self.vertices)}

    @cached_property
    def _distance_matrix(self) -> np.ndarray:
        m = len(self.vertices)
        if self.distance_backend is DistanceBackend.EUCLIDEAN:
            pts = np.array([self.coordinates[v] for v in self.vertices], float)
            diff = pts[:, None, :] - pts[None, :, :]
            return np.sqrt((diff**2).sum(axis=2))
        # hop backend: BFS level sets, one source per row
        dist = np.full((m, m), np.inf)
        adj = self.adjacency
        for s in range(m):
            dist[s, s] = 0.0
            frontier = np.zeros(m, bool)
            frontier[s] = True
            seen = frontier.copy()
            level = 0
            while frontier.any():
                level += 1
                nxt = adj[frontier].any(axis=0) & ~seen
                if not nxt.any():
                    break
                dist[s, nxt] = level
                seen |= nxt
                frontier = nxt
        return dist

    def index_of(self, v: int) -> int:
        try:
            return self._index[v]
        except KeyError:
            raise DomainError(f"vertex {v} not in layout") from None

    def distance(self, v: int, w: int) -> float:
        return float(self._distance_matrix[self.index_of(v), self.index_of(w)])

    def adjacent(self, v: int, w: int) -> bool:
        return bool(self.adjacency[self.index_of(v), self.index_of(w)])

    def edge_count(self) -> int:
        return int(self.adjacency.sum()) // 2


@dataclass(frozen=True)
class Identifier:
    """The active vertex set at one time step, stored sorted ascending."""

    active: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "active", tuple(sorted(set(int(v) for v in self.active))))

    @classmethod
    def of(cls, vertices: Iterable[int]) -> "Identifier":
        return cls(tuple(vertices))

    def __contains__(self, v: int) -> bool:
        return v in self.as_set

    def __iter__(self):
        return iter(self.active)

    def __len__(self) -> int:
        return len(self.active)

    @cached_property
    def as_set(self) -> frozenset[int]:
        return frozenset(self.active)

    def intersection(self, other: Iterable[int]) -> frozenset[int]:
        return self.as_set & frozenset(other)


@dataclass(frozen=True)
class RegionalPartition:
    """Fixed, non-overlapping vertex regions covering the whole universe."""

    regions: tuple[frozenset[int], ...]

    def __post_init__(self):
        regs = tuple(frozenset(r) for r in self.regions)
        seen: set[int] = set()
        for r in regs:
            if seen & r:
                raise DomainError("regions must be pairwise disjoint")
            seen |= r
        object.__setattr__(self, "regions", regs)

    @classmethod
    def for_layout(cls, layout: SpatialLayout, sets: Sequence[Iterable[int]]) -> "RegionalPartition":
        part = cls(tuple(frozenset(s) for s in sets))
        cover = set().union(*part.regions) if part.regions else set()
        if cover != set(layout.vertices):
            raise DomainError("regions must cover the vertex universe exactly")
        return part

    @classmethod
    def single(cls, layout: SpatialLayout) -> "RegionalPartition":
        return cls((frozenset(layout.vertices),))

    @cached_property
    def _owner(self) -> dict[int, int]:
        return {v: i for i, r in enumerate(self.regions) for v in r}

    def region_of(self, v: int) -> frozenset[int]:
        try:
            return self.regions[self._owner[v]]
        except KeyError:
            raise DomainError(f"vertex {v} is in no region") from None


@dataclass(frozen=True)
class ClusterPartition:
    """Ordered, non-overlapping clusters of one identifier."""

    clusters: tuple[frozenset[int], ...]
    cluster_size: int

    def __post_init__(self):
        regs = tuple(frozenset(c) for c in self.clusters)
        seen: set[int] = set()
        for c in regs:
            if seen & c:
                raise DomainError("clusters must be pairwise disjoint")
            seen |= c
        if self.cluster_size < 1:
            raise DomainError("cluster size must be >= 1")
        object.__setattr__(self, "clusters", regs)

    def __len__(self) -> int:
        return len(self.clusters)

    @cached_property
    def members(self) -> frozenset[int]:
        return frozenset().union(*self.clusters) if self.clusters else frozenset()

    @cached_property
    def _owner(self) -> dict[int, int]:
        return {v: i for i, c in enumerate(self.clusters) for v in c}

    def index_of(self, v: int) -> int:
        try:
            return self._owner[v]
        except KeyError:
            raise DomainError(f"vertex {v} is in no cluster") from None

    def cluster_of(self, v: int) -> frozenset[int]:
        return self.clusters[self.index_of(v)]


@dataclass(frozen=True)
class GraphQuantities:
    """Max-type quantities over a history, each clamped to at least one."""

    r: int
    max_cluster_size: int
    max_degree: int
    max_region_size: int
    max_region_diameter: float

    def __post_init__(self):
        for name in ("r", "max_cluster_size", "max_degree", "max_region_size"):
            if getattr(self, name) < 1:
                raise DomainError(f"{name} must be >= 1")
        if self.max_region_diameter < 1:
            raise DomainError("max_region_diameter must be >= 1")


def neighborhood(layout: SpatialLayout, k: Identifier, v: int, r: int) -> frozenset[int]:
    """Active vertices within distance ``r`` of ``v``, excluding ``v`` itself."""
    if v not in k:
        raise DomainError(f"vertex {v} is not active")
    if r < 1:
        raise DomainError("radius must be a positive integer")
    return _neighborhood_cached(layout, k.active, v, int(r))


@lru_cache(maxsize=65536)
def _neighborhood_cached(layout: SpatialLayout, active: tuple[int, ...], v: int, r: int) -> frozenset[int]:
    dm = layout._distance_matrix
    iv = layout.index_of(v)
    out = []
    for w in active:
        if w != v and dm[iv, layout.index_of(w)] <= r:
            out.append(w)
    return frozenset(out)


def set_distance(layout: SpatialLayout, w_set: Iterable[int], w_other: Iterable[int]) -> float:
    """Minimum pairwise distance between two non-empty vertex sets."""
    a = list(w_set)
    b = list(w_other)
    if not a or not b:
        raise DomainError("set_distance requires non-empty sets")
    dm = layout._distance_matrix
    ia = [layout.index_of(v) for v in a]
    ib = [layout.index_of(v) for v in b]
    return float(dm[np.ix_(ia, ib)].min())


def inner_boundary(layout: SpatialLayout, k: Identifier, w_set: Iterable[int], r: int) -> frozenset[int]:
    """Members of ``w_set`` whose active neighborhood reaches outside of it."""
    w = frozenset(w_set)
    if not w <= k.as_set:
        raise DomainError("set must be contained in the active identifier")
    return frozenset(v for v in w if not neighborhood(layout, k, v, r) <= w)


def build_cluster_partition(k: Identifier, c: int) -> ClusterPartition:
    """Chunk the sorted active set into consecutive groups of size ``c``."""
    if c < 1:
        raise DomainError("cluster size must be >= 1")
    chunks = tuple(
        frozenset(k.active[i : i + c]) for i in range(0, len(k.active), c)
    )
    return ClusterPartition(chunks, c)


def graph_quantities(
    layout: SpatialLayout,
    regions: RegionalPartition,
    identifier_history: Sequence[Identifier],
    cluster_history: Sequence[ClusterPartition],
    r: int,
) -> GraphQuantities:
    """Max-type quantities over aligned identifier and cluster histories.

    Every field is clamped to at least one, including the degree when all
    neighborhoods are empty.
    """
    if not identifier_history or not cluster_history:
        raise DomainError("histories must be non-empty")
    if len(identifier_history) != len(cluster_history):
        raise DomainError("identifier and cluster histories must be aligned")

    max_cluster = 1
    for part in cluster_history:
        for c in part.clusters:
            max_cluster = max(max_cluster, len(c))

    max_degree = 1
    max_region_size = 1
    max_region_diameter = 1.0
    for k in identifier_history:
        for v in k:
            max_degree = max(max_degree, len(neighborhood(layout, k, v, r)))
            region = regions.region_of(v)
            max_region_size = max(max_region_size, len(region))
            for w in k:
                if w != v and w in region:
                    d = layout.distance(v, w)
                    if math.isinf(d):
                        raise DomainError(
                            f"active vertices {v} and {w} share a region but are "
                            "disconnected; region diameter is undefined"
                        )
                    max_region_diameter = max(max_region_diameter, d)

    return GraphQuantities(
        r=int(r),
        max_cluster_size=max_cluster,
        max_degree=max_degree,
        max_region_size=max_region_size,
        max_region_diameter=max_region_diameter,
    )


def complete_layout(m: int, distance_backend: DistanceBackend = DistanceBackend.HOP) -> SpatialLayout:
    """Complete graph on vertices ``1..m``."""
    adj = np.ones((m, m), dtype=bool)
    np.fill_diagonal(adj, False)
    return SpatialLayout(tuple(range(1, m + 1)), adj, distance_backend=distance_backend)


def path_layout(m: int) -> SpatialLayout:
    """Path graph 1-2-...-m, hop distances."""
    adj = np.zeros((m, m), dtype=bool)
    for i in range(m - 1):
        adj[i, i + 1] = adj[i + 1, i] = True
    return SpatialLayout(tuple(range(1, m + 1)), adj)


def sub_layout(layout: SpatialLayout, count: int) -> SpatialLayout:
    """Layout restricted to the first ``count`` vertices (leading principal block)."""
    if not 1 <= count <= len(layout):
        raise DomainError(f"sub-layout size {count} out of range 1..{len(layout)}")
    verts = layout.vertices[:count]
    adj = layout.adjacency[:count, :count]
    coords = None
    if layout.coordinates is not None:
        coords = {v: layout.coordinates[v] for v in verts}
    return SpatialLayout(verts, adj, coords, layout.distance_backend)


def load_adjacency(
    path,
    distance_backend: DistanceBackend = DistanceBackend.HOP,
    coordinates: dict[int, tuple[float, float]] | None = None,
) -> SpatialLayout:
    """Read an m x m CSV of 0/1 entries (no header) into a validated layout.

    Vertices are labelled ``1..m`` in file order. Symmetry, zero diagonal,
    and binary entries are all checked; violations name the offending cell.
    """
    with open(path, newline="") as fh:
        rows = [row for row in csv.reader(fh) if row]
    m = len(rows)
    mat = np.zeros((m, m), dtype=np.int64)
    for i, row in enumerate(rows):
        if len(row) != m:
            raise AdjacencyError(f"row {i} has {len(row)} columns, expected {m}")
        for j, cell in enumerate(row):
            try:
                val = int(cell.strip())
            except ValueError:
                raise AdjacencyError(f"non-integer entry at row {i}, column {j}") from None
            if val not in (0, 1):
                raise AdjacencyError(f"non-binary entry at row {i}, column {j}")
            mat[i, j] = val
    return SpatialLayout(tuple(range(1, m + 1)), mat, coordinates, distance_backend)


def save_adjacency(layout_or_matrix, path) -> None:
    """Write an adjacency matrix as the 0/1 CSV format read by load_adjacency."""
    mat = (
        layout_or_matrix.adjacency
        if isinstance(layout_or_matrix, SpatialLayout)
        else np.asarray(layout_or_matrix)
    )
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        for row in mat.astype(int):
            writer.writerow(list(row))


def load_coordinates(path) -> dict[int, tuple[float, float]]:
    """Read "id,x,y" rows into a coordinate map."""
    out: dict[int, tuple[float, float]] = {}
    with open(path, newline="") as fh:
        for i, row in enumerate(csv.reader(fh)):
            if not row:
                continue
            if len(row) != 3:
                raise DomainError(f"coordinate row {i} must be 'id,x,y'")
            out[int(row[0])] = (float(row[1]), float(row[2]))
    return out
