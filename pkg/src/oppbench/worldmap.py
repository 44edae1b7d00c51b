"""Weighted path-graph maps that mobility models move over.

Vertices are 2-D points in meters; edges carry their Euclidean length.
Named point sets (homes, offices, meeting spots, bus stops) mark vertices
that the movement models use as destinations.
"""

import heapq
import math
from dataclasses import dataclass, field

from .engine import RngStream

POINT_KINDS = ("homes", "offices", "meeting_spots", "bus_stops")


class MapError(ValueError):
    pass


@dataclass
class Map:
    vertices: list[tuple[float, float]]
    adjacency: list[dict[int, float]]
    points: dict[str, list[int]] = field(default_factory=dict)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_edges(self) -> int:
        return sum(len(a) for a in self.adjacency) // 2

    def edge_length(self, a: int, b: int) -> float:
        return self.adjacency[a][b]

    def bounds(self) -> tuple[float, float, float, float]:
        xs = [p[0] for p in self.vertices]
        ys = [p[1] for p in self.vertices]
        return min(xs), min(ys), max(xs), max(ys)

    def add_edge(self, a: int, b: int) -> None:
        if a == b:
            raise MapError(f"self-loop at vertex {a}")
        if not (0 <= a < self.n_vertices and 0 <= b < self.n_vertices):
            raise MapError(f"edge {a}-{b} references an unknown vertex")
        ax, ay = self.vertices[a]
        bx, by = self.vertices[b]
        length = math.dist((ax, ay), (bx, by))
        if length <= 0:
            raise MapError(f"zero-length edge {a}-{b}")
        self.adjacency[a][b] = length
        self.adjacency[b][a] = length

    def is_connected(self) -> bool:
        if not self.vertices:
            return False
        seen = {0}
        stack = [0]
        while stack:
            u = stack.pop()
            for v in self.adjacency[u]:
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
        return len(seen) == self.n_vertices

    def validate(self) -> None:
        if not self.is_connected():
            raise MapError("map graph is not connected")
        for kind, ids in self.points.items():
            for vid in ids:
                if not 0 <= vid < self.n_vertices:
                    raise MapError(f"point set {kind!r} references unknown vertex {vid}")


def build_grid_map(
    rows: int,
    cols: int,
    spacing: float,
    rng: RngStream,
    point_counts: dict[str, int] | None = None,
) -> Map:
    """Build a connected rows x cols grid with named points on distinct vertices."""
    if rows < 2 or cols < 2:
        raise MapError("grid needs at least 2 rows and 2 columns")
    if spacing <= 0:
        raise MapError("grid spacing must be positive")
    vertices = [(c * spacing, r * spacing) for r in range(rows) for c in range(cols)]
    m = Map(vertices, [dict() for _ in vertices])
    for r in range(rows):
        for c in range(cols):
            vid = r * cols + c
            if c + 1 < cols:
                m.add_edge(vid, vid + 1)
            if r + 1 < rows:
                m.add_edge(vid, vid + cols)
    point_counts = point_counts or {}
    total = sum(point_counts.values())
    if total > m.n_vertices:
        raise MapError(
            f"{total} named points requested but the map has only {m.n_vertices} vertices"
        )
    pool = rng.sample(range(m.n_vertices), total) if total else []
    cursor = 0
    for kind in POINT_KINDS:
        count = point_counts.get(kind, 0)
        m.points[kind] = pool[cursor : cursor + count]
        cursor += count
    m.validate()
    return m


def shortest_path(m: Map, a: int, b: int) -> list[int]:
    """Minimal-length path from a to b, lexicographically smallest among ties.

    Runs Dijkstra from the target, then walks greedily from the source always
    taking the smallest-id neighbor that stays on a shortest path.
    """
    if not (0 <= a < m.n_vertices and 0 <= b < m.n_vertices):
        raise MapError(f"path endpoints {a},{b} not on map")
    if a == b:
        return [a]
    dist = dijkstra(m, b)
    if math.isinf(dist[a]):
        raise MapError(f"vertices {a} and {b} are disconnected")
    path = [a]
    u = a
    while u != b:
        best = None
        for v in sorted(m.adjacency[u]):
            if math.isclose(dist[u], m.adjacency[u][v] + dist[v], rel_tol=1e-9, abs_tol=1e-9):
                best = v
                break
        assert best is not None, "shortest-path walk lost the gradient"
        path.append(best)
        u = best
    return path


def dijkstra(m: Map, source: int) -> list[float]:
    """Distances from every vertex to ``source``."""
    dist = [math.inf] * m.n_vertices
    dist[source] = 0.0
    heap = [(0.0, source)]
    while heap:
        d, u = heapq.heappop(heap)
        if d > dist[u]:
            continue
        for v, w in m.adjacency[u].items():
            nd = d + w
            if nd < dist[v]:
                dist[v] = nd
                heapq.heappush(heap, (nd, v))
    return dist


def path_length(m: Map, path: list[int]) -> float:
    return sum(m.edge_length(u, v) for u, v in zip(path, path[1:]))


def write_map(m: Map, fh) -> None:
    """Line-oriented map dump: V id x y / E a b / P kind id."""
    for vid, (x, y) in enumerate(m.vertices):
        fh.write(f"V {vid} {x:g} {y:g}\n")
    for a in range(m.n_vertices):
        for b in sorted(m.adjacency[a]):
            if a < b:
                fh.write(f"E {a} {b}\n")
    for kind in POINT_KINDS:
        for vid in m.points.get(kind, []):
            fh.write(f"P {kind} {vid}\n")


def read_map(fh) -> Map:
    vertices: list[tuple[float, float]] = []
    edges: list[tuple[int, int]] = []
    points: dict[str, list[int]] = {k: [] for k in POINT_KINDS}
    for lineno, raw in enumerate(fh, 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        try:
            if parts[0] == "V":
                vid = int(parts[1])
                if vid != len(vertices):
                    raise MapError("vertex ids must be consecutive from 0")
                vertices.append((float(parts[2]), float(parts[3])))
            elif parts[0] == "E":
                edges.append((int(parts[1]), int(parts[2])))
            elif parts[0] == "P":
                if parts[1] not in points:
                    raise MapError(f"unknown point kind {parts[1]!r}")
                points[parts[1]].append(int(parts[2]))
            else:
                raise MapError(f"unknown record {parts[0]!r}")
        except (IndexError, ValueError) as exc:
            raise MapError(f"map line {lineno}: {exc}") from exc
    m = Map(vertices, [dict() for _ in vertices], points)
    for a, b in edges:
        m.add_edge(a, b)
    m.validate()
    return m
