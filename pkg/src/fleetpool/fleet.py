"""Vehicle state, typed capacities, fleet snapshots and supply projection."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from fleetpool.city import RoadGraph
from fleetpool.routing import RoutePlan, Stop, load_profile

IDLE = "idle"
DISPATCHING = "dispatching"
OCCUPIED = "occupied"
INACTIVE = "inactive"


@dataclass(frozen=True)
class VehicleType:
    """Static per-class vehicle characteristics.

    ``rate_per_km`` / ``rate_per_min`` override the pricing config's
    distance and waiting weights when set; ``utility_rank`` is the
    ordinal fed to the passenger vehicle-type preference term.
    """

    name: str
    seats: int
    trunk: int
    base_price: float
    mileage: float  # km per fuel unit
    surge_coeff: float = 0.8
    utility_rank: int = 1
    rate_per_km: float | None = None
    rate_per_min: float | None = None


# Defaults bracket typical carrying capacities of 4 seats / 5 packages.
DEFAULT_TYPES: dict[str, VehicleType] = {
    "hatchback": VehicleType("hatchback", seats=4, trunk=3, base_price=1.5, mileage=12.0,
                             surge_coeff=0.8, utility_rank=1),
    "sedan": VehicleType("sedan", seats=4, trunk=5, base_price=2.0, mileage=10.0,
                         surge_coeff=0.8, utility_rank=2),
    "van": VehicleType("van", seats=6, trunk=8, base_price=2.5, mileage=7.0,
                       surge_coeff=0.9, utility_rank=3),
    "luxury": VehicleType("luxury", seats=4, trunk=3, base_price=4.0, mileage=8.0,
                          surge_coeff=1.2, utility_rank=4),
}


@dataclass
class OnboardOrder:
    request_id: int
    kind: str
    size: int
    pickup_time: float
    dest_zone: int
    solo_minutes: float  # direct travel time the order would have taken alone
    request_minute: float = 0.0


class Vehicle:
    """One fleet vehicle: capacities, route, movement and earnings state.

    Capacity is committed at assignment time: ``committed_seats`` /
    ``committed_trunk`` include both onboard orders and accepted orders
    not yet picked up, so residual capacity is safe against route growth.
    """

    def __init__(self, vid: int, vtype: VehicleType, location: int,
                 allowed_kind: str | None = None):
        self.id = vid
        self.vtype = vtype
        self.location = location
        self.allowed_kind = allowed_kind  # None = both kinds (combined load)
        self.status = INACTIVE
        self.route = RoutePlan()
        self.dispatch_target: int | None = None
        self.onboard: dict[int, OnboardOrder] = {}
        self.committed_seats = 0
        self.committed_trunk = 0
        self.idle_minutes = 0.0
        self.spawn_step: int | None = None
        # movement bookkeeping: node path toward the next stop, progress on its first edge
        self.path_nodes: list[int] = []
        self.edge_progress_km = 0.0
        # cumulative counters (monotone)
        self.earnings = 0.0
        self.fuel_cost = 0.0
        self.distance_km = 0.0
        self.cruising_min = 0.0
        self.occupied_min = 0.0
        self.working_min = 0.0

    # -- capacity -----------------------------------------------------
    @property
    def free_seats(self) -> int:
        return self.vtype.seats - self.committed_seats

    @property
    def free_trunk(self) -> int:
        return self.vtype.trunk - self.committed_trunk

    @property
    def onboard_count(self) -> int:
        return len(self.onboard)

    def is_active(self) -> bool:
        return self.status != INACTIVE

    def is_available(self) -> bool:
        """Eligible for matching: active with remaining seat or trunk capacity."""
        return self.is_active() and (self.free_seats > 0 or self.free_trunk > 0)

    def is_empty(self) -> bool:
        """No onboard orders and no planned stops (dedicated direct trips allowed)."""
        return not self.onboard and not self.route.stops

    def commit(self, seats: int, trunk: int) -> None:
        self.committed_seats += seats
        self.committed_trunk += trunk
        if self.committed_seats > self.vtype.seats or self.committed_trunk > self.vtype.trunk:
            raise ValueError(f"vehicle {self.id}: capacity overcommitted")

    def release(self, seats: int, trunk: int) -> None:
        self.committed_seats -= seats
        self.committed_trunk -= trunk
        if self.committed_seats < 0 or self.committed_trunk < 0:
            raise ValueError(f"vehicle {self.id}: capacity released below zero")

    def next_target(self) -> int | None:
        """Location the vehicle is currently driving toward, if any."""
        if self.route.stops:
            return self.route.stops[0].location
        return self.dispatch_target


def fleet_state(vehicles: list[Vehicle]) -> list[dict]:
    """Per-vehicle snapshot: zone, free capacity, onboard pickup times and destinations."""
    out = []
    for v in vehicles:
        if not v.is_active():
            continue
        out.append({
            "vehicle": v.id,
            "zone": v.location,
            "free_seats": v.free_seats,
            "free_trunk": v.free_trunk,
            "pickup_times": [o.pickup_time for o in v.onboard.values()],
            "dest_zones": [o.dest_zone for o in v.onboard.values()],
        })
    return out


def remaining_route_km(vehicle: Vehicle, graph: RoadGraph) -> float:
    """Distance left to finish the current route (or dispatch leg), km."""
    stops = vehicle.route.locations()
    if not stops:
        if vehicle.dispatch_target is None:
            return 0.0
        stops = [vehicle.dispatch_target]
    if vehicle.path_nodes:
        chain = [vehicle.location] + vehicle.path_nodes
        total = sum(graph.distance(a, b) for a, b in zip(chain, chain[1:]))
        total -= vehicle.edge_progress_km
        prev = vehicle.path_nodes[-1]  # path always ends at the first stop
        rest = stops[1:]
    else:
        total = 0.0
        prev = vehicle.location
        rest = stops
    for s in rest:
        total += graph.distance(prev, s)
        prev = s
    return max(total, 0.0)


def project_supply(vehicles: list[Vehicle], graph: RoadGraph, dt_min: float,
                   horizon: int, speed_km_per_min: float) -> np.ndarray:
    """Per-zone counts of vehicles predicted available, steps 0..horizon-1.

    Idle vehicles count at their zone for every step. A vehicle driving
    a route (or a dispatch leg) counts at its terminal zone from the
    step its remaining travel time completes.
    """
    counts = np.zeros((horizon, graph.n))
    for v in vehicles:
        if not v.is_active():
            continue
        stops = v.route.locations()
        if not stops and v.dispatch_target is None:
            counts[:, v.location] += 1.0
            continue
        terminal = stops[-1] if stops else v.dispatch_target
        eta_min = remaining_route_km(v, graph) / speed_km_per_min
        k0 = int(np.ceil(eta_min / dt_min - 1e-9))
        if k0 < horizon:
            counts[k0:, terminal] += 1.0
    return counts


def occupancy_profile(vehicle: Vehicle, stops: list[Stop] | RoutePlan) -> list[tuple[int, int]]:
    """Running (seats used, trunk used) after each stop, from current onboard load."""
    if isinstance(stops, RoutePlan):
        stops = stops.stops
    seats = sum(o.size for o in vehicle.onboard.values() if o.kind == "passenger")
    trunk = sum(o.size for o in vehicle.onboard.values() if o.kind == "goods")
    return load_profile(seats, trunk, stops)


def capacity_feasible(vehicle: Vehicle, stops: list[Stop] | RoutePlan) -> bool:
    """True when no leg of the stop sequence exceeds seat or trunk capacity."""
    for seats, trunk in occupancy_profile(vehicle, stops):
        if not (0 <= seats <= vehicle.vtype.seats and 0 <= trunk <= vehicle.vtype.trunk):
            return False
    return True


def mark_idle_and_collect(vehicles: list[Vehicle], threshold_min: float) -> list[Vehicle]:
    """Vehicles idle strictly longer than the threshold (dispatch candidates)."""
    return [v for v in vehicles if v.status == IDLE and v.idle_minutes > threshold_min]


def available_census(vehicles: list[Vehicle], n_zones: int) -> np.ndarray:
    """Current idle-vehicle count per zone (the k=0 supply row)."""
    counts = np.zeros(n_zones)
    for v in vehicles:
        if v.is_active() and not v.route.stops and v.dispatch_target is None:
            counts[v.location] += 1.0
    return counts
