"""Request generation and demand forecasting.

Covers three demand sources that can be mixed freely in one scenario:
CSV trip replay, Poisson goods synthesis around fixed service locations,
and Poisson passenger synthesis around hotspot zones. Forecasting uses a
historical step-of-day average per zone.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from fleetpool.city import RoadGraph, ZoneGrid

PASSENGER = "passenger"
GOODS = "goods"

# lifecycle states
PENDING = "pending"
ASSIGNED = "assigned"
ONBOARD = "onboard"
AT_HOP = "at-hop-zone"
DELIVERED = "delivered"
REJECTED = "rejected"

_TRANSITIONS = {
    PENDING: {ASSIGNED, REJECTED},
    ASSIGNED: {ONBOARD, PENDING},
    ONBOARD: {DELIVERED, AT_HOP},
    AT_HOP: {PENDING},
    DELIVERED: set(),
    REJECTED: set(),
}


class DemandError(ValueError):
    """Raised for malformed trip files or invalid workload configs."""


@dataclass
class Request:
    """A passenger trip or goods delivery demand.

    ``current`` tracks the pickup point of the active leg: it equals
    ``origin`` until the request is staged at a hop-zone, after which it
    becomes that hop-zone. ``hops`` only ever increases.
    """

    id: int
    kind: str
    origin: int
    dest: int
    size: int
    request_time: float
    current: int = -1
    state: str = PENDING
    hops: int = 0
    flexibility: float = 0.45
    accepted: bool = False
    pickup_time: float | None = None
    delivery_time: float | None = None
    active_price: float = 0.0
    assigned_vehicle: int | None = None

    def __post_init__(self):
        if self.size < 1:
            raise DemandError(f"request {self.id}: size must be >= 1")
        if self.origin == self.dest:
            raise DemandError(f"request {self.id}: origin equals destination")
        if self.current < 0:
            self.current = self.origin

    def set_state(self, new: str) -> None:
        if new not in _TRANSITIONS[self.state]:
            raise DemandError(f"request {self.id}: illegal transition {self.state} -> {new}")
        self.state = new

    def stage_at_hop(self, hop_zone: int) -> None:
        """Drop at a hop-zone: request re-enters the pool for its next leg."""
        self.set_state(AT_HOP)
        self.hops += 1
        self.current = hop_zone
        self.assigned_vehicle = None
        self.set_state(PENDING)

    def age(self, now: float) -> float:
        return now - self.request_time


@dataclass
class GoodsWorkloadConfig:
    """Poisson goods synthesis around fixed service locations.

    ``rates`` maps a service zone to its mean requests per simulation
    step. Drop-offs are sampled uniformly over zones within
    ``radius_km`` (graph distance) of the service zone.
    """

    rates: dict[int, float] = field(default_factory=dict)
    radius_km: float = 8.05
    size_choices: tuple[int, ...] = (1, 1, 1, 2)

    def validate(self) -> None:
        if self.radius_km <= 0:
            raise DemandError("goods radius must be > 0")
        for zone, lam in self.rates.items():
            if lam < 0:
                raise DemandError(f"negative goods rate at zone {zone}")


@dataclass
class PassengerWorkloadConfig:
    """Poisson passenger synthesis with hotspot origin zones.

    Destinations are uniform over all other zones; sizes are drawn from
    ``size_choices`` with equal probability per entry.
    """

    rates: dict[int, float] = field(default_factory=dict)
    size_choices: tuple[int, ...] = (1, 1, 1, 2)

    def validate(self) -> None:
        for zone, lam in self.rates.items():
            if lam < 0:
                raise DemandError(f"negative passenger rate at zone {zone}")


class GoodsGenerator:
    """Seeded per-step goods request source (one instance per run)."""

    def __init__(self, config: GoodsWorkloadConfig, graph: RoadGraph, rng: np.random.Generator,
                 id_start: int = 0):
        config.validate()
        self.config = config
        self.graph = graph
        self.rng = rng
        self.next_id = id_start
        # precompute eligible drop zones per service location
        self._drop_zones: dict[int, np.ndarray] = {}
        for zone in sorted(config.rates):
            within = np.where(graph.dist[zone] <= config.radius_km)[0]
            within = within[within != zone]
            if len(within) == 0:
                # radius smaller than the nearest neighbor: fall back to it
                order = np.argsort(graph.dist[zone])
                within = np.array([z for z in order if z != zone][:1])
            self._drop_zones[zone] = within

    def step(self, step_index: int, now_min: float) -> list[Request]:
        out: list[Request] = []
        for zone in sorted(self.config.rates):
            lam = self.config.rates[zone]
            if lam <= 0:
                continue
            count = int(self.rng.poisson(lam))
            for _ in range(count):
                dest = int(self.rng.choice(self._drop_zones[zone]))
                size = int(self.rng.choice(self.config.size_choices))
                out.append(Request(id=self.next_id, kind=GOODS, origin=zone, dest=dest,
                                   size=size, request_time=now_min))
                self.next_id += 1
        return out


class PassengerGenerator:
    """Seeded per-step passenger request source."""

    def __init__(self, config: PassengerWorkloadConfig, n_zones: int, rng: np.random.Generator,
                 id_start: int = 0):
        config.validate()
        self.config = config
        self.n_zones = n_zones
        self.rng = rng
        self.next_id = id_start

    def step(self, step_index: int, now_min: float) -> list[Request]:
        out: list[Request] = []
        for zone in sorted(self.config.rates):
            lam = self.config.rates[zone]
            if lam <= 0:
                continue
            count = int(self.rng.poisson(lam))
            for _ in range(count):
                dest = int(self.rng.integers(0, self.n_zones - 1))
                if dest >= zone:
                    dest += 1
                size = int(self.rng.choice(self.config.size_choices))
                out.append(Request(id=self.next_id, kind=PASSENGER, origin=zone, dest=dest,
                                   size=size, request_time=now_min))
                self.next_id += 1
        return out


def generate_goods_requests(config: GoodsWorkloadConfig, graph: RoadGraph, n_steps: int,
                            dt_min: float, seed: int | np.random.Generator = 0):
    """Yield the full goods request stream for a run, in time order."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    gen = GoodsGenerator(config, graph, rng)
    for tau in range(n_steps):
        yield from gen.step(tau, tau * dt_min)


CSV_HEADER = ["time_min", "kind", "size", "origin_x", "origin_y", "dest_x", "dest_y"]


def load_requests(path: str, grid: ZoneGrid, id_start: int = 0) -> list[Request]:
    """Parse a trip CSV into Requests sorted by request time.

    Schema: ``time_min,kind,size,origin_x,origin_y,dest_x,dest_y`` with
    kind in {passenger, goods} and coordinates in km within grid bounds.
    Malformed rows raise DemandError naming the offending line number.
    """
    requests: list[Request] = []
    next_id = id_start
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DemandError(f"{path}: empty file, expected header {','.join(CSV_HEADER)}")
        if [h.strip() for h in header] != CSV_HEADER:
            raise DemandError(f"{path}: bad header {header!r}, expected {CSV_HEADER}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(CSV_HEADER):
                raise DemandError(f"{path}: line {lineno}: expected {len(CSV_HEADER)} fields, got {len(row)}")
            try:
                t = float(row[0])
                kind = row[1].strip()
                size = int(row[2])
                ox, oy, dx, dy = (float(v) for v in row[3:7])
            except ValueError as exc:
                raise DemandError(f"{path}: line {lineno}: {exc}") from None
            if kind not in (PASSENGER, GOODS):
                raise DemandError(f"{path}: line {lineno}: unknown kind {kind!r}")
            if t < 0:
                raise DemandError(f"{path}: line {lineno}: negative time {t}")
            try:
                origin = grid.zone_of_xy(ox, oy)
                dest = grid.zone_of_xy(dx, dy)
            except Exception as exc:
                raise DemandError(f"{path}: line {lineno}: {exc}") from None
            if origin == dest:
                raise DemandError(f"{path}: line {lineno}: origin and destination share zone {origin}")
            requests.append(Request(id=next_id, kind=kind, origin=origin, dest=dest,
                                    size=size, request_time=t))
            next_id += 1
    requests.sort(key=lambda r: (r.request_time, r.id))
    return requests


def write_requests_csv(path: str, requests: list[Request], grid: ZoneGrid) -> None:
    """Materialize requests back to the trip CSV schema (zone centers as coordinates)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for r in sorted(requests, key=lambda r: (r.request_time, r.id)):
            ox, oy = grid.center_km(r.origin)
            dx, dy = grid.center_km(r.dest)
            writer.writerow([f"{r.request_time:.3f}", r.kind, r.size,
                             f"{ox:.3f}", f"{oy:.3f}", f"{dx:.3f}", f"{dy:.3f}"])


def predict_demand(history: np.ndarray, t: int, horizon: int, steps_per_day: int) -> np.ndarray:
    """Historical-average forecast of per-zone request counts.

    ``history`` holds one row per elapsed step (shape: steps_so_far x
    zones). The forecast for step t+k is the mean observed count at the
    same step-of-day over all fully elapsed prior days; zones (or steps)
    with no history forecast 0.
    """
    history = np.asarray(history, dtype=float)
    n_zones = history.shape[1] if history.ndim == 2 and history.shape[0] > 0 else history.shape[-1]
    out = np.zeros((horizon, n_zones))
    if history.shape[0] == 0:
        return out
    for k in range(horizon):
        target = t + k
        sod = target % steps_per_day
        rows = np.arange(sod, history.shape[0], steps_per_day)
        rows = rows[rows < t - (t % steps_per_day)]  # only fully elapsed days
        if len(rows):
            out[k] = history[rows].mean(axis=0)
    return out
