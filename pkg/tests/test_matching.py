import numpy as np
import pytest

from fleetpool.city import GridConfig, build_grid
from fleetpool.demand import Request, GOODS, PASSENGER
from fleetpool.fleet import DEFAULT_TYPES, IDLE, Vehicle
from fleetpool.matching import greedy_match

SPEED = 0.5  # km per minute


@pytest.fixture(scope="module")
def city10():
    return build_grid(GridConfig(width=10, height=10, cell_km=1.0))


def vehicle(vid, loc, vtype="sedan", allowed=None):
    v = Vehicle(vid, DEFAULT_TYPES[vtype], loc, allowed)
    v.status = IDLE
    return v


def passenger(rid, origin, dest, t=0.0, size=1):
    return Request(id=rid, kind=PASSENGER, origin=origin, dest=dest, size=size,
                   request_time=t)


def goods(rid, origin, dest, t=0.0, size=1):
    return Request(id=rid, kind=GOODS, origin=origin, dest=dest, size=size, request_time=t)


def test_unique_candidate_assigned(city10):
    grid, graph = city10
    v = vehicle(0, grid.zone_id(1, 0))
    r = passenger(1, grid.zone_id(2, 0), grid.zone_id(9, 9))
    batch = greedy_match([v], [r], graph, SPEED)
    assert batch.by_vehicle == {0: [r]}
    assert batch.unassigned == []
    assert batch.gate_km[1] == pytest.approx(1.0)


def test_reject_radius_exceeded(city10):
    grid, graph = city10
    v = vehicle(0, grid.zone_id(0, 0))
    r = passenger(1, grid.zone_id(6, 0), grid.zone_id(9, 9))  # 6 km away
    batch = greedy_match([v], [r], graph, SPEED)
    assert batch.by_vehicle == {}
    assert batch.unassigned == [r]


def test_nearest_vehicle_wins(city10):
    grid, graph = city10
    near = vehicle(5, grid.zone_id(2, 0))
    far = vehicle(2, grid.zone_id(3, 0))
    r = passenger(1, grid.zone_id(0, 0), grid.zone_id(9, 9))
    batch = greedy_match([near, far], [r], graph, SPEED)
    assert batch.by_vehicle == {5: [r]}


def test_eta_tie_breaks_by_lower_vehicle_id(city10):
    grid, graph = city10
    a = vehicle(4, grid.zone_id(2, 0))
    b = vehicle(1, grid.zone_id(0, 2))
    r = passenger(1, grid.zone_id(0, 0), grid.zone_id(9, 9))
    batch = greedy_match([a, b], [r], graph, SPEED)
    assert batch.by_vehicle == {1: [r]}


def test_matches_sequential_greedy_oracle(city10):
    # hand re-simulation of the provisional-update loop, requests in time order
    grid, graph = city10
    rng = np.random.default_rng(31)
    for trial in range(30):
        vehicles = [vehicle(i, int(rng.integers(0, 100))) for i in range(6)]
        reqs = []
        for j in range(8):
            o, d = rng.integers(0, 100, size=2)
            if o == d:
                d = (d + 1) % 100
            kind = PASSENGER if rng.random() < 0.6 else GOODS
            r = passenger(j, int(o), int(d), t=float(j)) if kind == PASSENGER \
                else goods(j, int(o), int(d), t=float(j))
            reqs.append(r)
        batch = greedy_match(vehicles, reqs, graph, SPEED)

        # oracle
        loc = {v.id: v.location for v in vehicles}
        seats = {v.id: v.vtype.seats for v in vehicles}
        trunk = {v.id: v.vtype.trunk for v in vehicles}
        want: dict[int, list[int]] = {}
        unassigned = []
        for r in sorted(reqs, key=lambda r: (r.request_time, r.id)):
            best, best_d = None, float("inf")
            for v in sorted(vehicles, key=lambda v: v.id):
                cap = seats[v.id] if r.kind == PASSENGER else trunk[v.id]
                if cap < r.size:
                    continue
                d = graph.distance(loc[v.id], r.current)
                if d > 5.0 or d >= best_d:
                    continue
                best, best_d = v.id, d
            if best is None:
                unassigned.append(r.id)
                continue
            want.setdefault(best, []).append(r.id)
            loc[best] = r.current
            if r.kind == PASSENGER:
                seats[best] -= r.size
            else:
                trunk[best] -= r.size
        got = {vid: sorted(r.id for r in lst) for vid, lst in batch.by_vehicle.items()}
        assert got == {vid: sorted(ids) for vid, ids in want.items()}
        assert sorted(r.id for r in batch.unassigned) == sorted(unassigned)


def test_capacity_gate_per_compartment(city10):
    grid, graph = city10
    v = vehicle(0, grid.zone_id(0, 0), vtype="sedan")
    v.commit(4, 0)  # seats full, trunk open
    p = passenger(1, grid.zone_id(1, 0), grid.zone_id(5, 5))
    g = goods(2, grid.zone_id(1, 0), grid.zone_id(5, 5))
    batch = greedy_match([v], [p, g], graph, SPEED)
    assert [r.id for r in batch.unassigned] == [1]
    assert [r.id for r in batch.by_vehicle[0]] == [2]


def test_kind_filter_for_partitioned_fleet(city10):
    grid, graph = city10
    vp = vehicle(0, grid.zone_id(0, 0), allowed=PASSENGER)
    vg = vehicle(1, grid.zone_id(0, 0), allowed=GOODS)
    p = passenger(1, grid.zone_id(1, 0), grid.zone_id(5, 5))
    g = goods(2, grid.zone_id(1, 0), grid.zone_id(5, 5))
    batch = greedy_match([vp, vg], [p, g], graph, SPEED)
    assert batch.by_vehicle[0] == [p]
    assert batch.by_vehicle[1] == [g]


def test_provisional_location_advances(city10):
    # one vehicle chains same-step requests; the 5 km gate applies from the
    # provisional location after each win
    grid, graph = city10
    v = vehicle(0, grid.zone_id(0, 0))
    r1 = passenger(1, grid.zone_id(4, 0), grid.zone_id(9, 9), t=0.0)
    r2 = passenger(2, grid.zone_id(8, 0), grid.zone_id(9, 9), t=1.0)
    batch = greedy_match([v], [r1, r2], graph, SPEED)
    # r2 is 8 km from the vehicle's true spot but 4 km from its provisional one
    assert [r.id for r in batch.by_vehicle[0]] == [1, 2]
    assert batch.gate_km[2] == pytest.approx(4.0)


def test_batch_sorted_by_proximity_to_vehicle(city10):
    grid, graph = city10
    v = vehicle(0, grid.zone_id(0, 0))
    far = passenger(1, grid.zone_id(3, 0), grid.zone_id(9, 9), t=0.0)
    near = passenger(2, grid.zone_id(4, 0), grid.zone_id(9, 9), t=1.0)
    # both are matched (provisional chaining), list is ordered by true proximity
    batch = greedy_match([v], [far, near], graph, SPEED)
    ids = [r.id for r in batch.by_vehicle[0]]
    assert ids == [1, 2]  # 3 km before 4 km

    v2 = vehicle(0, grid.zone_id(5, 0))
    a = passenger(1, grid.zone_id(9, 0), grid.zone_id(0, 9), t=0.0)
    b = passenger(2, grid.zone_id(6, 0), grid.zone_id(0, 9), t=1.0)
    batch = greedy_match([v2], [a, b], graph, SPEED)
    assert [r.id for r in batch.by_vehicle[0]] == [2, 1]  # 1 km before 4 km


def test_deterministic_output(city10):
    grid, graph = city10
    rng = np.random.default_rng(2)
    vehicles = [vehicle(i, int(rng.integers(0, 100))) for i in range(5)]
    reqs = [passenger(j, int(rng.integers(0, 99)), 99, t=float(j % 3)) for j in range(10)]
    b1 = greedy_match(vehicles, reqs, graph, SPEED)
    b2 = greedy_match(vehicles, list(reversed(reqs)), graph, SPEED)
    assert {k: [r.id for r in v] for k, v in b1.by_vehicle.items()} == \
        {k: [r.id for r in v] for k, v in b2.by_vehicle.items()}
