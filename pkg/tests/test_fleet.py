import numpy as np
import pytest

from fleetpool.city import GridConfig, build_grid
from fleetpool.fleet import (DEFAULT_TYPES, IDLE, INACTIVE, OCCUPIED, OnboardOrder,
                             Vehicle, available_census, capacity_feasible, fleet_state,
                             mark_idle_and_collect, occupancy_profile, project_supply,
                             remaining_route_km)
from fleetpool.routing import DROPOFF, PICKUP, RoutePlan, Stop


@pytest.fixture(scope="module")
def city10():
    return build_grid(GridConfig(width=10, height=10, cell_km=1.0))


def make_vehicle(vid=0, loc=0, vtype="sedan", status=IDLE):
    v = Vehicle(vid, DEFAULT_TYPES[vtype], loc)
    v.status = status
    return v


def route_to(zones, rid=0):
    stops = [Stop(zones[0], PICKUP, rid, 1, 0)]
    stops += [Stop(z, DROPOFF, rid, -1 if i == len(zones) - 2 else 0, 0)
              for i, z in enumerate(zones[1:])]
    return RoutePlan(stops=stops)


class TestProjectSupply:
    def test_all_idle_constant_census(self, city10):
        _, graph = city10
        vehicles = [make_vehicle(i, loc=i * 7 % 100) for i in range(5)]
        fc = project_supply(vehicles, graph, dt_min=1.0, horizon=4, speed_km_per_min=0.5)
        census = available_census(vehicles, graph.n)
        for k in range(4):
            assert np.array_equal(fc[k], census)
        assert fc.sum(axis=1).tolist() == [5.0] * 4

    def test_single_transition_appears_at_eta(self, city10):
        _, graph = city10
        v = make_vehicle(0, loc=0, status=OCCUPIED)
        # 1 km to finish at zone 9 of row 0 at 0.5 km/min -> 2 minutes -> k = 2
        v.route = RoutePlan(stops=[Stop(9, DROPOFF, 1, -1, 0)])
        v.location = 8
        v.onboard[1] = OnboardOrder(1, "passenger", 1, 0.0, 9, 2.0)
        fc = project_supply([v], graph, dt_min=1.0, horizon=5, speed_km_per_min=0.5)
        assert fc[0].sum() == 0 and fc[1].sum() == 0
        for k in (2, 3, 4):
            assert fc[k, 9] == 1.0

    def test_matches_event_replay_oracle(self, city10):
        # independent oracle: replay each vehicle's completion step directly
        _, graph = city10
        rng = np.random.default_rng(17)
        speed, dt, horizon = 0.5, 1.0, 6
        vehicles = []
        for i in range(20):
            v = make_vehicle(i, loc=int(rng.integers(0, 100)))
            if rng.random() < 0.5:
                dest = int(rng.integers(0, 100))
                mid = int(rng.integers(0, 100))
                if dest == mid:
                    dest = (dest + 1) % 100
                v.route = route_to([mid, dest], rid=i)
                v.status = OCCUPIED
            vehicles.append(v)
        fc = project_supply(vehicles, graph, dt, horizon, speed)
        oracle = np.zeros((horizon, graph.n))
        for v in vehicles:
            if not v.route.stops:
                oracle[:, v.location] += 1
                continue
            km = graph.distance(v.location, v.route.stops[0].location)
            km += sum(graph.distance(a.location, b.location)
                      for a, b in zip(v.route.stops, v.route.stops[1:]))
            k0 = int(np.ceil(km / speed / dt - 1e-9))
            if k0 < horizon:
                oracle[k0:, v.route.stops[-1].location] += 1
        assert np.array_equal(fc, oracle)

    def test_inactive_excluded(self, city10):
        _, graph = city10
        v = make_vehicle(0, loc=3, status=INACTIVE)
        fc = project_supply([v], graph, 1.0, 3, 0.5)
        assert fc.sum() == 0


class TestOccupancyProfile:
    def test_empty_route(self):
        v = make_vehicle()
        assert occupancy_profile(v, []) == []

    def test_pickup_then_drop(self):
        v = make_vehicle()
        stops = [Stop(1, PICKUP, 9, 2, 0), Stop(5, DROPOFF, 9, -2, 0)]
        assert occupancy_profile(v, stops) == [(2, 0), (0, 0)]
        assert capacity_feasible(v, stops)

    def test_overfull_leg_flagged(self):
        v = make_vehicle()  # sedan: 4 seats
        stops = [Stop(1, PICKUP, 1, 3, 0), Stop(2, PICKUP, 2, 2, 0),
                 Stop(3, DROPOFF, 1, -3, 0), Stop(4, DROPOFF, 2, -2, 0)]
        profile = occupancy_profile(v, stops)
        assert profile[1] == (5, 0)
        assert not capacity_feasible(v, stops)

    def test_accounts_for_onboard_load(self):
        v = make_vehicle()
        v.onboard[7] = OnboardOrder(7, "passenger", 3, 0.0, 5, 1.0)
        stops = [Stop(1, PICKUP, 8, 2, 0)]
        assert occupancy_profile(v, stops) == [(5, 0)]
        assert not capacity_feasible(v, stops)


class TestIdleCollection:
    def test_over_threshold_included(self):
        v = make_vehicle()
        v.idle_minutes = 11.0
        assert mark_idle_and_collect([v], 10.0) == [v]

    def test_exactly_threshold_excluded(self):
        v = make_vehicle()
        v.idle_minutes = 10.0
        assert mark_idle_and_collect([v], 10.0) == []

    def test_dispatch_resets_clock(self):
        # state-machine trace: dispatched vehicles are not idle
        v = make_vehicle()
        v.idle_minutes = 30.0
        v.status = "dispatching"
        v.idle_minutes = 0.0
        assert mark_idle_and_collect([v], 10.0) == []


class TestVehicleState:
    def test_capacity_commit_release(self):
        v = make_vehicle()
        v.commit(2, 1)
        assert v.free_seats == 2 and v.free_trunk == 4
        v.release(2, 1)
        assert v.free_seats == 4 and v.free_trunk == 5

    def test_overcommit_raises(self):
        v = make_vehicle()
        with pytest.raises(ValueError):
            v.commit(5, 0)

    def test_availability_rule(self):
        v = make_vehicle()
        assert v.is_available()
        v.commit(4, 5)
        assert not v.is_available()
        v.release(0, 1)
        assert v.is_available()  # trunk slot free again

    def test_fleet_state_snapshot(self, city10):
        v = make_vehicle(3, loc=42)
        v.onboard[11] = OnboardOrder(11, "goods", 1, 5.0, 77, 9.0)
        v.commit(0, 1)
        snap = fleet_state([v])
        assert snap == [{"vehicle": 3, "zone": 42, "free_seats": 4, "free_trunk": 4,
                         "pickup_times": [5.0], "dest_zones": [77]}]

    def test_remaining_route_km(self, city10):
        _, graph = city10
        v = make_vehicle(0, loc=0, status=OCCUPIED)
        v.route = route_to([5, 9])
        want = graph.distance(0, 5) + graph.distance(5, 9)
        assert remaining_route_km(v, graph) == pytest.approx(want)
        # partway into the first edge
        v.path_nodes = graph.path_nodes(0, 5)[1:]
        v.edge_progress_km = 0.4
        assert remaining_route_km(v, graph) == pytest.approx(want - 0.4)
