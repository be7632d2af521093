"""Route-plan construction: hop-zone selection for goods and insertion planning.

A route plan is an ordered stop list; the vehicle's own location is the
implicit first vertex of every cost evaluation. Insertion places a
request's pickup and drop into the existing plan without reordering the
stops already there; the brute-force planner below is the exhaustive
reference used to measure the heuristic's optimality gap.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from fleetpool.city import RoadGraph, path_weight

PICKUP = "pickup"
DROPOFF = "dropoff"
HOP_DROP = "hop-drop"


@dataclass(frozen=True)
class Stop:
    """One route stop: where, what happens there, and the load change."""

    location: int
    action: str
    request_id: int
    seats_delta: int = 0
    trunk_delta: int = 0


@dataclass
class RoutePlan:
    """Ordered stop sequence with its cached cost from the planning location."""

    stops: list[Stop] = field(default_factory=list)
    cost_km: float = 0.0

    def locations(self) -> list[int]:
        return [s.location for s in self.stops]

    def request_ids(self) -> set[int]:
        return {s.request_id for s in self.stops}

    def copy(self) -> "RoutePlan":
        return RoutePlan(stops=list(self.stops), cost_km=self.cost_km)


@dataclass
class HopConfig:
    """Hop acceptance thresholds.

    ``d_drop_km``: within this distance of the final destination the
    package always routes direct. ``d_gain_min``: minimum fractional
    reduction of remaining distance a hop must achieve.
    """

    d_drop_km: float = 2.0
    d_gain_min: float = 0.0

    def validate(self) -> None:
        if self.d_drop_km <= 0:
            raise ValueError("d_drop_km must be > 0")


class HopZoneSet:
    """Fixed staging locations with per-zone package holding capacity."""

    def __init__(self, zones: list[int], capacity: int = 1000):
        self.zones = sorted(set(int(z) for z in zones))
        self.capacity = {z: int(capacity) for z in self.zones}
        self.held = {z: 0 for z in self.zones}

    def __len__(self) -> int:
        return len(self.zones)

    def has_space(self, zone: int) -> bool:
        return self.held[zone] < self.capacity[zone]

    def add_package(self, zone: int) -> None:
        if not self.has_space(zone):
            raise ValueError(f"hop-zone {zone} over capacity")
        self.held[zone] += 1

    def remove_package(self, zone: int) -> None:
        if self.held[zone] <= 0:
            raise ValueError(f"hop-zone {zone} has no held packages")
        self.held[zone] -= 1

    def nearest_with_space(self, to: int, graph: RoadGraph) -> int | None:
        best = None
        best_d = float("inf")
        for z in self.zones:  # sorted: ties resolve to the lower zone id
            if not self.has_space(z):
                continue
            d = graph.distance(z, to)
            if d < best_d:
                best_d = d
                best = z
        return best


def evenly_spaced_hop_zones(grid_width: int, grid_height: int, count: int,
                            capacity: int = 1000) -> HopZoneSet:
    """Spread ~count hop-zones over the grid on a regular sub-lattice."""
    count = max(1, min(count, grid_width * grid_height))
    cols = max(1, round((count * grid_width / grid_height) ** 0.5))
    rows = max(1, -(-count // cols))
    zones = []
    for i in range(rows):
        for j in range(cols):
            if len(zones) >= count:
                break
            col = int((j + 0.5) * grid_width / cols)
            row = int((i + 0.5) * grid_height / rows)
            zones.append(row * grid_width + min(col, grid_width - 1))
    return HopZoneSet(zones, capacity)


def load_hop_zones(path: str, grid, default_capacity: int = 1000) -> HopZoneSet:
    """Read hop-zones from a CSV of `x_km,y_km,capacity` rows (no header)."""
    zones = []
    caps = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#") or line.startswith("x_km"):
                continue
            parts = line.split(",")
            if len(parts) != 3:
                raise ValueError(f"{path}: line {lineno}: expected x_km,y_km,capacity")
            x, y, cap = float(parts[0]), float(parts[1]), int(parts[2])
            z = grid.zone_of_xy(x, y)
            zones.append(z)
            caps[z] = cap
    hops = HopZoneSet(zones, default_capacity)
    for z, cap in caps.items():
        hops.capacity[z] = cap
    return hops


def load_profile(start_seats: int, start_trunk: int, stops: list[Stop]) -> list[tuple[int, int]]:
    """Running (seats, trunk) load after each stop."""
    seats, trunk = start_seats, start_trunk
    out = []
    for s in stops:
        seats += s.seats_delta
        trunk += s.trunk_delta
        out.append((seats, trunk))
    return out


def _vehicle_load(vehicle) -> tuple[int, int]:
    seats = sum(o.size for o in vehicle.onboard.values() if o.kind == "passenger")
    trunk = sum(o.size for o in vehicle.onboard.values() if o.kind == "goods")
    return seats, trunk


def _feasible(vehicle, stops: list[Stop]) -> bool:
    seats0, trunk0 = _vehicle_load(vehicle)
    for seats, trunk in load_profile(seats0, trunk0, stops):
        if not (0 <= seats <= vehicle.vtype.seats and 0 <= trunk <= vehicle.vtype.trunk):
            return False
    return True


def route_cost(graph: RoadGraph, vehicle_location: int, route: RoutePlan | list[Stop]) -> float:
    """Path weight of the route starting from the vehicle's location, km."""
    stops = route.stops if isinstance(route, RoutePlan) else route
    return path_weight(graph, [vehicle_location] + [s.location for s in stops])


def request_stops(request, target_dest: int) -> tuple[Stop, Stop]:
    """Pickup/drop pair for one leg of a request toward ``target_dest``."""
    seats = request.size if request.kind == "passenger" else 0
    trunk = request.size if request.kind == "goods" else 0
    pickup = Stop(request.current, PICKUP, request.id, seats, trunk)
    action = DROPOFF if target_dest == request.dest else HOP_DROP
    drop = Stop(target_dest, action, request.id, -seats, -trunk)
    return pickup, drop


def insertion_candidates(stops: list[Stop], pickup: Stop, drop: Stop):
    """Yield (x, y, candidate_stops) for every order-preserving placement.

    x is the pickup insertion index into ``stops`` and y the drop index
    into the pickup-extended list, y > x; existing stop order is never
    changed. For a 1-request route this enumerates exactly the six
    two-request interleavings.
    """
    n = len(stops)
    for x in range(n + 1):
        with_pickup = stops[:x] + [pickup] + stops[x:]
        for y in range(x + 1, n + 2):
            yield x, y, with_pickup[:y] + [drop] + with_pickup[y:]


def insert_request(vehicle, route: RoutePlan, request, target_dest: int,
                   graph: RoadGraph) -> tuple[RoutePlan, float] | None:
    """Place a request's pickup and drop at minimum added route cost.

    Returns (new plan, incremental km), or None when no capacity-feasible
    placement exists (the caller re-queues the request). Cost ties break
    on the earliest (pickup, drop) position pair.
    """
    pickup, drop = request_stops(request, target_dest)
    old_cost = route_cost(graph, vehicle.location, route) if route.stops else 0.0
    if not route.stops:
        stops = [pickup, drop]
        if not _feasible(vehicle, stops):
            return None
        cost = route_cost(graph, vehicle.location, stops)
        return RoutePlan(stops, cost), cost
    best = None
    best_cost = float("inf")
    for _x, _y, cand in insertion_candidates(route.stops, pickup, drop):
        cost = route_cost(graph, vehicle.location, cand)
        if cost < best_cost - 1e-12 and _feasible(vehicle, cand):
            best_cost = cost
            best = cand
    if best is None:
        return None
    return RoutePlan(best, best_cost), best_cost - old_cost


def assign_hop_zone(request, route: RoutePlan, hops: HopZoneSet, cfg: HopConfig,
                    graph: RoadGraph) -> int:
    """Pick the next destination for a goods request: a hop-zone or the final stop.

    A hop-zone is chosen near the route stop that is already closest to
    the final destination, and only accepted when it strictly shrinks the
    remaining distance by at least the configured fraction. Everything
    else falls back to direct delivery.
    """
    dest = request.dest
    d0 = graph.distance(request.current, dest)
    if d0 < cfg.d_drop_km:
        return dest
    # anchor: the existing stop already closest to the final destination
    anchor = request.current
    best_d = float("inf")
    for s in route.stops:
        d = graph.distance(s.location, dest)
        if d < best_d:
            best_d = d
            anchor = s.location
    hop = hops.nearest_with_space(anchor, graph) if len(hops) else None
    if hop is None:
        return dest
    gain = (d0 - graph.distance(hop, dest)) / d0
    if graph.distance(hop, dest) < cfg.d_drop_km:
        return dest
    if gain < cfg.d_gain_min or gain <= 0.0:
        # a hop must make strict progress toward the destination
        return dest
    return hop


def brute_force_plan(vehicle, requests: list, graph: RoadGraph) -> tuple[RoutePlan, float]:
    """Exhaustive minimum-cost plan for up to 3 requests from an empty route.

    Enumerates every stop ordering with each pickup before its drop,
    filters capacity-infeasible sequences, and returns the cheapest. Test
    oracle only; cost grows factorially with request count.
    """
    if len(requests) > 3:
        raise ValueError("brute_force_plan supports at most 3 requests")
    pairs = [request_stops(r, r.dest) for r in requests]
    best: list[Stop] | None = None
    best_cost = float("inf")

    def extend(seq: list[Stop], pending_pick: set[int], pending_drop: set[int]):
        nonlocal best, best_cost
        if not pending_pick and not pending_drop:
            cost = route_cost(graph, vehicle.location, seq)
            if cost < best_cost - 1e-12 and _feasible(vehicle, seq):
                best_cost = cost
                best = list(seq)
            return
        for i in sorted(pending_pick):
            seq.append(pairs[i][0])
            extend(seq, pending_pick - {i}, pending_drop | {i})
            seq.pop()
        for i in sorted(pending_drop):
            seq.append(pairs[i][1])
            extend(seq, pending_pick, pending_drop - {i})
            seq.pop()

    extend([], set(range(len(requests))), set())
    if best is None:
        raise ValueError("no capacity-feasible ordering exists")
    return RoutePlan(best, best_cost), best_cost
