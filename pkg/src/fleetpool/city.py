"""Synthetic city model: zone grid, weighted road graph, distances and travel times.

The map is a rectangular grid of square zones. Graph nodes sit at zone
centers, so a "location" anywhere in the package is simply a node id
(== zone id). All-pairs shortest distances are precomputed once at build
time; everything downstream (matching radii, route costs, ETAs) reads
from that matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import shortest_path


class CityError(ValueError):
    """Raised for invalid grid configs, unknown locations or bad queries."""


@dataclass(frozen=True)
class GridConfig:
    """Parameters for the synthetic grid city.

    ``weight_jitter`` randomizes edge weights uniformly in [lo, hi] km
    (symmetric per undirected edge); None keeps every edge at cell_km.
    """

    width: int = 10
    height: int = 10
    cell_km: float = 1.0
    weight_jitter: tuple[float, float] | None = None
    seed: int = 0


class ZoneGrid:
    """Row-major partition of the map into width x height square zones.

    Zone ids are ``row * width + col``; zone 0 sits at the south-west
    corner. A point on a shared cell edge belongs to the zone with the
    smaller id, which makes the partition deterministic.
    """

    def __init__(self, width: int, height: int, cell_km: float):
        if width < 1 or height < 1:
            raise CityError(f"grid dimensions must be >= 1, got {width}x{height}")
        if cell_km <= 0:
            raise CityError(f"cell size must be > 0, got {cell_km}")
        self.width = int(width)
        self.height = int(height)
        self.cell_km = float(cell_km)

    @property
    def n_zones(self) -> int:
        return self.width * self.height

    def zone_id(self, col: int, row: int) -> int:
        if not (0 <= col < self.width and 0 <= row < self.height):
            raise CityError(f"cell ({col},{row}) outside {self.width}x{self.height} grid")
        return row * self.width + col

    def zone_rc(self, zone: int) -> tuple[int, int]:
        """(row, col) of a zone id."""
        if not (0 <= zone < self.n_zones):
            raise CityError(f"zone {zone} outside 0..{self.n_zones - 1}")
        return divmod(zone, self.width)

    def center_km(self, zone: int) -> tuple[float, float]:
        """(x_km, y_km) of the zone center."""
        row, col = self.zone_rc(zone)
        return ((col + 0.5) * self.cell_km, (row + 0.5) * self.cell_km)

    def zone_of_xy(self, x_km: float, y_km: float) -> int:
        """Zone containing a map point; edge points go to the smaller id."""
        if x_km < 0 or y_km < 0 or x_km > self.width * self.cell_km or y_km > self.height * self.cell_km:
            raise CityError(f"point ({x_km},{y_km}) outside grid bounds")
        col = max(0, math.ceil(x_km / self.cell_km) - 1)
        row = max(0, math.ceil(y_km / self.cell_km) - 1)
        return self.zone_id(min(col, self.width - 1), min(row, self.height - 1))


class RoadGraph:
    """Weighted road graph over zone centers with precomputed shortest paths.

    Attributes:
        n: node count (== grid zones)
        edges: list of (src, dst, weight_km) directed triples
        dist: (n, n) all-pairs shortest distance matrix, km
    """

    def __init__(self, n: int, edges: list[tuple[int, int, float]]):
        self.n = n
        self.edges = edges
        w = np.zeros((n, n))
        rows = [e[0] for e in edges]
        cols = [e[1] for e in edges]
        vals = [e[2] for e in edges]
        if any(v <= 0 for v in vals):
            raise CityError("edge weights must be positive")
        mat = csr_matrix((vals, (rows, cols)), shape=(n, n))
        dist, pred = shortest_path(mat, method="D", directed=True, return_predecessors=True)
        if not np.all(np.isfinite(dist)):
            raise CityError("road graph is not strongly connected")
        self.dist = dist
        self._pred = pred

    def check_node(self, node: int) -> int:
        if not (0 <= node < self.n):
            raise CityError(f"unknown location {node}")
        return int(node)

    def distance(self, a: int, b: int) -> float:
        return float(self.dist[self.check_node(a), self.check_node(b)])

    def path_nodes(self, a: int, b: int) -> list[int]:
        """Node sequence of one shortest path from a to b (inclusive)."""
        a = self.check_node(a)
        b = self.check_node(b)
        if a == b:
            return [a]
        seq = [b]
        cur = b
        while cur != a:
            cur = int(self._pred[a, cur])
            if cur < 0:
                raise CityError(f"no path {a}->{b}")
            seq.append(cur)
        seq.reverse()
        return seq


def build_grid(config: GridConfig) -> tuple[ZoneGrid, RoadGraph]:
    """Build the zone grid and its 4-neighbor road graph.

    Deterministic for a fixed config: jittered weights come from a
    dedicated RNG seeded with config.seed and are symmetric, so the
    shortest-distance matrix is symmetric too.
    """
    grid = ZoneGrid(config.width, config.height, config.cell_km)
    rng = np.random.default_rng(config.seed)
    edges: list[tuple[int, int, float]] = []
    for row in range(grid.height):
        for col in range(grid.width):
            a = grid.zone_id(col, row)
            for dc, dr in ((1, 0), (0, 1)):
                c2, r2 = col + dc, row + dr
                if c2 >= grid.width or r2 >= grid.height:
                    continue
                b = grid.zone_id(c2, r2)
                if config.weight_jitter is None:
                    w = grid.cell_km
                else:
                    lo, hi = config.weight_jitter
                    w = float(rng.uniform(lo, hi))
                edges.append((a, b, w))
                edges.append((b, a, w))
    if grid.n_zones == 1:
        # degenerate single-zone city: no edges, trivial matrix
        g = RoadGraph.__new__(RoadGraph)
        g.n = 1
        g.edges = []
        g.dist = np.zeros((1, 1))
        g._pred = np.full((1, 1), -9999, dtype=np.int32)
        return grid, g
    return grid, RoadGraph(grid.n_zones, edges)


def path_weight(graph: RoadGraph, stops: list[int]) -> float:
    """Total shortest-path length of visiting stops in order, km."""
    if len(stops) == 0:
        raise CityError("path_weight needs at least one stop")
    total = 0.0
    for a, b in zip(stops, stops[1:]):
        total += graph.distance(a, b)
    return total


def eta(graph: RoadGraph, a: int, b: int, speed_km_per_min: float) -> float:
    """Travel time estimate in minutes at a constant speed."""
    if speed_km_per_min <= 0:
        raise CityError(f"speed must be positive, got {speed_km_per_min}")
    return graph.distance(a, b) / speed_km_per_min


def zone_of(grid: ZoneGrid, location: tuple[float, float]) -> int:
    """Zone id of an (x_km, y_km) map point."""
    return grid.zone_of_xy(location[0], location[1])


def export_edge_list(graph: RoadGraph, path: str) -> None:
    """Write the directed edge list as `src dst weight_km` lines."""
    with open(path, "w", encoding="utf-8") as fh:
        for a, b, w in graph.edges:
            fh.write(f"{a} {b} {w:.6f}\n")
