import numpy as np
import pytest

from fleetpool.city import (CityError, GridConfig, ZoneGrid, build_grid, eta,
                            export_edge_list, path_weight, zone_of)


def unit_grid(w=10, h=10):
    return build_grid(GridConfig(width=w, height=h, cell_km=1.0))


def floyd_warshall_oracle(n, edges):
    """Independent all-pairs oracle: textbook O(n^3) relaxation."""
    dist = np.full((n, n), np.inf)
    np.fill_diagonal(dist, 0.0)
    for a, b, w in edges:
        dist[a, b] = min(dist[a, b], w)
    for k in range(n):
        for i in range(n):
            for j in range(n):
                via = dist[i, k] + dist[k, j]
                if via < dist[i, j]:
                    dist[i, j] = via
    return dist


class TestBuildGrid:
    def test_single_zone(self):
        grid, graph = build_grid(GridConfig(width=1, height=1, cell_km=1.0))
        assert grid.n_zones == 1
        assert graph.dist.shape == (1, 1)
        assert graph.dist[0, 0] == 0.0

    def test_straight_corridor(self):
        grid, graph = unit_grid()
        a = grid.zone_id(0, 0)
        b = grid.zone_id(0, 3)
        assert graph.distance(a, b) == pytest.approx(3.0)

    def test_jittered_weights_match_floyd_warshall(self):
        _, graph = build_grid(GridConfig(width=5, height=5, cell_km=1.0,
                                         weight_jitter=(1.0, 2.0), seed=3))
        oracle = floyd_warshall_oracle(graph.n, graph.edges)
        assert np.allclose(graph.dist, oracle, atol=1e-9)

    def test_deterministic_for_fixed_config(self):
        cfg = GridConfig(width=4, height=4, cell_km=1.0, weight_jitter=(1.0, 2.0), seed=9)
        _, g1 = build_grid(cfg)
        _, g2 = build_grid(cfg)
        assert np.array_equal(g1.dist, g2.dist)

    def test_rejects_zero_dimension(self):
        with pytest.raises(CityError):
            build_grid(GridConfig(width=0, height=5))
        with pytest.raises(CityError):
            ZoneGrid(3, 3, 0.0)

    def test_triangle_inequality_sampled(self):
        _, graph = build_grid(GridConfig(width=6, height=6, weight_jitter=(1.0, 2.0), seed=1))
        rng = np.random.default_rng(0)
        for _ in range(200):
            a, b, c = rng.integers(0, graph.n, size=3)
            assert graph.dist[a, c] <= graph.dist[a, b] + graph.dist[b, c] + 1e-9

    def test_path_nodes_walk_edges(self):
        _, graph = build_grid(GridConfig(width=5, height=5, weight_jitter=(1.0, 2.0), seed=2))
        rng = np.random.default_rng(4)
        for _ in range(30):
            a, b = rng.integers(0, graph.n, size=2)
            nodes = graph.path_nodes(a, b)
            assert nodes[0] == a and nodes[-1] == b
            total = sum(graph.distance(u, v) for u, v in zip(nodes, nodes[1:]))
            assert total == pytest.approx(graph.distance(a, b))


class TestPathWeight:
    def test_single_stop_is_zero(self):
        _, graph = unit_grid()
        assert path_weight(graph, [7]) == 0.0

    def test_out_and_back_symmetric(self):
        grid, graph = unit_grid()
        a = grid.zone_id(1, 1)
        b = grid.zone_id(4, 6)
        assert path_weight(graph, [a, b, a]) == pytest.approx(2 * graph.distance(a, b))

    def test_lattice_example(self):
        grid, graph = unit_grid()
        a = grid.zone_id(0, 0)
        b = grid.zone_id(0, 2)
        c = grid.zone_id(3, 2)
        assert path_weight(graph, [a, b, c]) == pytest.approx(5.0)

    def test_additive_under_concatenation(self):
        _, graph = unit_grid()
        rng = np.random.default_rng(5)
        for _ in range(50):
            stops = list(rng.integers(0, graph.n, size=6))
            k = int(rng.integers(1, 5))
            left = stops[:k + 1]
            right = stops[k:]
            assert path_weight(graph, left) + path_weight(graph, right) == \
                pytest.approx(path_weight(graph, stops))

    def test_unknown_location(self):
        _, graph = unit_grid()
        with pytest.raises(CityError):
            path_weight(graph, [0, 1000])


class TestEta:
    def test_identity(self):
        _, graph = unit_grid()
        assert eta(graph, 13, 13, 0.7) == 0.0

    def test_arithmetic(self):
        grid, graph = unit_grid()
        a = grid.zone_id(0, 0)
        b = grid.zone_id(5, 0)
        assert eta(graph, a, b, 0.5) == pytest.approx(10.0)

    def test_twenty_kmh_multiplier(self):
        _, graph = unit_grid()
        speed = 20.0 / 60.0  # km per minute
        rng = np.random.default_rng(11)
        for _ in range(50):
            a, b = rng.integers(0, graph.n, size=2)
            assert eta(graph, a, b, speed) == pytest.approx(graph.distance(a, b) * 3.0)

    def test_monotone_in_distance(self):
        _, graph = unit_grid()
        pairs = [(0, 1), (0, 5), (0, 55), (0, 99)]
        times = [eta(graph, a, b, 0.5) for a, b in pairs]
        dists = [graph.distance(a, b) for a, b in pairs]
        assert sorted(range(4), key=lambda i: times[i]) == sorted(range(4), key=lambda i: dists[i])

    def test_rejects_bad_speed(self):
        _, graph = unit_grid()
        with pytest.raises(CityError):
            eta(graph, 0, 1, 0.0)


class TestZoneOf:
    def test_center_round_trip(self):
        grid, _ = unit_grid()
        for zone in range(grid.n_zones):
            assert zone_of(grid, grid.center_km(zone)) == zone

    def test_origin_corner(self):
        grid, _ = unit_grid()
        assert zone_of(grid, (0.0, 0.0)) == grid.zone_id(0, 0)

    def test_random_points_nearest_center(self):
        grid, _ = unit_grid()
        rng = np.random.default_rng(21)
        centers = np.array([grid.center_km(z) for z in range(grid.n_zones)])
        for _ in range(100):
            x = float(rng.uniform(0, 10))
            y = float(rng.uniform(0, 10))
            got = zone_of(grid, (x, y))
            want = int(np.argmin(((centers - [x, y]) ** 2).sum(axis=1)))
            assert got == want

    def test_cell_edge_goes_to_smaller_id(self):
        grid, _ = unit_grid()
        # point exactly on the boundary between columns 2 and 3
        assert zone_of(grid, (3.0, 0.5)) == grid.zone_id(2, 0)
        # and between rows 4 and 5
        assert zone_of(grid, (0.5, 5.0)) == grid.zone_id(0, 4)

    def test_out_of_bounds(self):
        grid, _ = unit_grid()
        with pytest.raises(CityError):
            zone_of(grid, (-0.1, 2.0))
        with pytest.raises(CityError):
            zone_of(grid, (2.0, 10.5))


def test_export_edge_list(tmp_path):
    _, graph = build_grid(GridConfig(width=3, height=3))
    path = tmp_path / "edges.txt"
    export_edge_list(graph, str(path))
    lines = path.read_text().strip().splitlines()
    assert len(lines) == len(graph.edges)
    src, dst, w = lines[0].split()
    assert float(w) > 0
    assert 0 <= int(src) < 9 and 0 <= int(dst) < 9
