"""Scenario configuration: one structured YAML file with a section per subsystem.

Unknown keys anywhere are hard errors so typos never silently fall back
to defaults. A resolved copy of the config is embedded in every run's
manifest for provenance.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field, asdict

import yaml

from fleetpool.demand import GoodsWorkloadConfig, PassengerWorkloadConfig
from fleetpool.fleet import VehicleType, DEFAULT_TYPES
from fleetpool.pricing import PricingConfig, PassengerProfile
from fleetpool.routing import HopConfig
from fleetpool.dispatch import RewardWeights


class ConfigError(ValueError):
    """Raised for unknown keys, bad values or inconsistent sections."""


VARIANTS = ("combined_dmh", "combined", "independent_dmh", "independent")

# named RNG streams fanned out from the master seed
STREAMS = {"demand": 0, "fleet-init": 1, "exploration": 2, "flexibility": 3,
           "net-init": 4, "replay": 5}


@dataclass
class SimSection:
    days: float = 7.0
    dt_min: float = 1.0
    speed_kmh: float = 20.0
    seed: int = 7
    max_request_age_min: float = 30.0
    variant: str = "combined_dmh"
    independent_passenger_fraction: float = 0.5
    drain: bool = False
    drain_cap_min: float = 720.0
    audit: bool = False

    @property
    def speed_km_per_min(self) -> float:
        return self.speed_kmh / 60.0

    @property
    def steps_per_day(self) -> int:
        return int(round(24 * 60 / self.dt_min))

    @property
    def total_steps(self) -> int:
        return int(round(self.days * self.steps_per_day))


@dataclass
class GridSection:
    width: int = 10
    height: int = 10
    cell_km: float = 1.0
    weight_jitter: list[float] | None = None
    seed: int = 0


@dataclass
class FleetSection:
    size: int = 50
    entry_fraction: float = 0.1
    idle_threshold_min: float = 10.0
    type_mix: dict[str, float] = field(default_factory=lambda: {
        "hatchback": 0.25, "sedan": 0.40, "van": 0.25, "luxury": 0.10})
    types: dict[str, VehicleType] = field(default_factory=lambda: dict(DEFAULT_TYPES))


@dataclass
class DemandSection:
    passenger_rates: dict[int, float] = field(default_factory=dict)
    goods_rates: dict[int, float] = field(default_factory=dict)
    goods_radius_km: float = 8.05
    trips_csv: str | None = None


@dataclass
class HopSection:
    count: int = 20
    capacity: int = 1000
    d_drop_km: float = 2.0
    d_gain_min: float = 0.0
    csv: str | None = None

    def hop_config(self) -> HopConfig:
        cfg = HopConfig(d_drop_km=self.d_drop_km, d_gain_min=self.d_gain_min)
        cfg.validate()
        return cfg


@dataclass
class DispatchSection:
    horizon: int = 3
    hidden: list[int] = field(default_factory=lambda: [64, 64])
    neighborhood_radius: int = 3
    lr: float = 1e-3
    replay_capacity: int = 5000
    batch_size: int = 64
    train_every_steps: int = 2
    eps_start: float = 1.0
    eps_final: float = 0.05
    ranking_refresh_min: float = 5.0
    transition_cap_min: float = 60.0
    supply_scale: float = 10.0
    demand_scale: float = 5.0
    rewards: RewardWeights = field(default_factory=RewardWeights)


@dataclass
class ScenarioConfig:
    """Validated bundle of every subsystem's settings for one run."""

    sim: SimSection = field(default_factory=SimSection)
    grid: GridSection = field(default_factory=GridSection)
    fleet: FleetSection = field(default_factory=FleetSection)
    demand: DemandSection = field(default_factory=DemandSection)
    hops: HopSection = field(default_factory=HopSection)
    pricing: PricingConfig = field(default_factory=PricingConfig)
    passenger_profile: PassengerProfile = field(default_factory=PassengerProfile)
    dispatch: DispatchSection = field(default_factory=DispatchSection)

    def validate(self) -> None:
        s = self.sim
        if s.days <= 0 or s.dt_min <= 0 or s.speed_kmh <= 0:
            raise ConfigError("sim: days, dt_min and speed_kmh must be positive")
        if s.variant not in VARIANTS:
            raise ConfigError(f"sim.variant must be one of {VARIANTS}, got {s.variant!r}")
        if not (0.0 <= s.independent_passenger_fraction <= 1.0):
            raise ConfigError("sim.independent_passenger_fraction must lie in [0, 1]")
        if self.grid.width < 1 or self.grid.height < 1 or self.grid.cell_km <= 0:
            raise ConfigError("grid: dimensions must be >= 1 and cell_km positive")
        f = self.fleet
        if f.size < 0 or not (0.0 < f.entry_fraction <= 1.0):
            raise ConfigError("fleet: size must be >= 0 and entry_fraction in (0, 1]")
        for name in f.type_mix:
            if name not in f.types:
                raise ConfigError(f"fleet.type_mix references unknown type {name!r}")
        if f.type_mix and abs(sum(f.type_mix.values()) - 1.0) > 1e-6:
            raise ConfigError("fleet.type_mix fractions must sum to 1")
        n_zones = self.grid.width * self.grid.height
        for zone in list(self.demand.passenger_rates) + list(self.demand.goods_rates):
            if not (0 <= zone < n_zones):
                raise ConfigError(f"demand: zone {zone} outside the grid")
        if self.demand.goods_radius_km <= 0:
            raise ConfigError("demand.goods_radius_km must be positive")
        if self.hops.count < 0 or self.hops.capacity < 1:
            raise ConfigError("hops: count must be >= 0 and capacity >= 1")
        self.hops.hop_config()
        self.pricing.validate()
        self.passenger_profile.validate()
        d = self.dispatch
        if d.horizon < 1 or d.neighborhood_radius < 0:
            raise ConfigError("dispatch: horizon must be >= 1 and radius >= 0")
        if d.replay_capacity < 1 or d.batch_size < 1 or d.train_every_steps < 1:
            raise ConfigError("dispatch: replay/batch/train cadence must be >= 1")
        d.rewards.validate()

    def to_dict(self) -> dict:
        out = asdict(self)
        out["fleet"]["types"] = {k: asdict(v) for k, v in self.fleet.types.items()}
        return out

    def copy(self) -> "ScenarioConfig":
        return copy.deepcopy(self)


def _take(section: dict, name: str, known: set[str]) -> None:
    unknown = set(section) - known
    if unknown:
        raise ConfigError(f"{name}: unknown keys {sorted(unknown)}")


def _zone_rates(raw, grid: GridSection, name: str) -> dict[int, float]:
    """Accept either {zone_id: rate} or a list of [col, row, rate] triples."""
    out: dict[int, float] = {}
    if isinstance(raw, dict):
        for k, v in raw.items():
            out[int(k)] = float(v)
    elif isinstance(raw, list):
        for entry in raw:
            if not isinstance(entry, (list, tuple)) or len(entry) != 3:
                raise ConfigError(f"{name}: entries must be [col, row, rate]")
            col, row, rate = entry
            if not (0 <= int(col) < grid.width and 0 <= int(row) < grid.height):
                raise ConfigError(f"{name}: cell ({col},{row}) outside the grid")
            out[int(row) * grid.width + int(col)] = float(rate)
    else:
        raise ConfigError(f"{name}: expected mapping or list of [col, row, rate]")
    return out


def from_dict(raw: dict) -> ScenarioConfig:
    """Build and validate a ScenarioConfig from parsed YAML."""
    if not isinstance(raw, dict):
        raise ConfigError("top level of the scenario file must be a mapping")
    _take(raw, "scenario", {"sim", "grid", "fleet", "demand", "hops", "pricing",
                            "passenger", "dispatch"})
    cfg = ScenarioConfig()

    sim = dict(raw.get("sim", {}))
    _take(sim, "sim", {"days", "dt_min", "speed_kmh", "seed", "max_request_age_min",
                       "variant", "independent_passenger_fraction", "drain",
                       "drain_cap_min", "audit"})
    for k, v in sim.items():
        setattr(cfg.sim, k, v)

    grid = dict(raw.get("grid", {}))
    _take(grid, "grid", {"width", "height", "cell_km", "weight_jitter", "seed"})
    for k, v in grid.items():
        setattr(cfg.grid, k, v)

    fleet = dict(raw.get("fleet", {}))
    _take(fleet, "fleet", {"size", "entry_fraction", "idle_threshold_min",
                           "type_mix", "types"})
    if "types" in fleet:
        types = {}
        for name, spec in fleet.pop("types").items():
            spec = dict(spec)
            _take(spec, f"fleet.types.{name}",
                  {"seats", "trunk", "base_price", "mileage", "surge_coeff",
                   "utility_rank", "rate_per_km", "rate_per_min"})
            base = DEFAULT_TYPES.get(name)
            merged = {
                "seats": spec.get("seats", base.seats if base else 4),
                "trunk": spec.get("trunk", base.trunk if base else 4),
                "base_price": spec.get("base_price", base.base_price if base else 2.0),
                "mileage": spec.get("mileage", base.mileage if base else 10.0),
                "surge_coeff": spec.get("surge_coeff", base.surge_coeff if base else 0.8),
                "utility_rank": spec.get("utility_rank", base.utility_rank if base else 1),
                "rate_per_km": spec.get("rate_per_km", base.rate_per_km if base else None),
                "rate_per_min": spec.get("rate_per_min", base.rate_per_min if base else None),
            }
            types[name] = VehicleType(name=name, **merged)
        cfg.fleet.types = {**DEFAULT_TYPES, **types}
    for k, v in fleet.items():
        setattr(cfg.fleet, k, v)

    demand = dict(raw.get("demand", {}))
    _take(demand, "demand", {"passenger_rates", "goods_rates", "goods_radius_km",
                             "trips_csv"})
    if "passenger_rates" in demand:
        cfg.demand.passenger_rates = _zone_rates(demand.pop("passenger_rates"),
                                                 cfg.grid, "demand.passenger_rates")
    if "goods_rates" in demand:
        cfg.demand.goods_rates = _zone_rates(demand.pop("goods_rates"),
                                             cfg.grid, "demand.goods_rates")
    for k, v in demand.items():
        setattr(cfg.demand, k, v)

    hops = dict(raw.get("hops", {}))
    _take(hops, "hops", {"count", "capacity", "d_drop_km", "d_gain_min", "csv"})
    for k, v in hops.items():
        setattr(cfg.hops, k, v)

    pricing = dict(raw.get("pricing", {}))
    _take(pricing, "pricing", {"w_distance", "w_fuel", "w_wait", "gas_price",
                               "top_zones", "accept_on_utility_ge",
                               "delta_low", "delta_high"})
    for k, v in pricing.items():
        setattr(cfg.pricing, k, v)

    passenger = dict(raw.get("passenger", {}))
    _take(passenger, "passenger", {"w_sharing", "w_waiting", "w_vehicle"})
    for k, v in passenger.items():
        setattr(cfg.passenger_profile, k, v)

    dispatch = dict(raw.get("dispatch", {}))
    _take(dispatch, "dispatch", {"horizon", "hidden", "neighborhood_radius", "lr",
                                 "replay_capacity", "batch_size", "train_every_steps",
                                 "eps_start", "eps_final", "ranking_refresh_min",
                                 "transition_cap_min", "supply_scale", "demand_scale",
                                 "rewards"})
    if "rewards" in dispatch:
        rw = dict(dispatch.pop("rewards"))
        _take(rw, "dispatch.rewards", {"service", "detour", "delay", "profit",
                                       "activation", "gamma", "urgency_passenger",
                                       "urgency_goods", "printed_signs"})
        cfg.dispatch.rewards = RewardWeights(**rw)
    for k, v in dispatch.items():
        setattr(cfg.dispatch, k, v)

    cfg.validate()
    return cfg


def load_config(path: str) -> ScenarioConfig:
    with open(path, encoding="utf-8") as fh:
        raw = yaml.safe_load(fh) or {}
    return from_dict(raw)


def default_scenario() -> ScenarioConfig:
    """Desk-scale default: 10x10 km grid, 50 vehicles, mixed workload."""
    cfg = ScenarioConfig()
    g = cfg.grid
    # passenger hotspots cluster mid-grid; goods depots sit off-center
    cfg.demand.passenger_rates = _zone_rates(
        [[2, 2, 0.06], [3, 2, 0.05], [2, 3, 0.05], [7, 7, 0.06], [6, 7, 0.05],
         [7, 6, 0.05], [5, 4, 0.04]], g, "default")
    cfg.demand.goods_rates = _zone_rates(
        [[1, 8, 0.05], [8, 1, 0.05], [4, 5, 0.04], [8, 8, 0.03]], g, "default")
    cfg.passenger_profile = PassengerProfile(w_sharing=2.0, w_waiting=20.0, w_vehicle=2.0)
    return cfg
