"""Platform pricing, vehicle surge proposals and the passenger decision rule.

The platform quotes an initial price from route cost shared across
co-riders; vehicles add a surcharge when the trip ends outside the
currently hot zones; passengers accept when their utility clears the
price scaled by a personal flexibility factor. Goods always pay the
initial price.
"""

from __future__ import annotations

from dataclasses import dataclass

WAIT_GUARD_MIN = 1.0  # keeps the waiting term finite for instant pickups


@dataclass
class PricingConfig:
    """Platform-side pricing weights and negotiation parameters."""

    w_distance: float = 1.0     # price per shared km
    w_fuel: float = 0.5         # fuel surcharge factor
    w_wait: float = 0.05        # waiting compensation per minute
    gas_price: float = 2.0      # money per fuel unit
    top_zones: int = 10         # hot-zone set size exempt from surcharges
    accept_on_utility_ge: bool = True  # False flips the comparator
    delta_low: float = 0.3
    delta_high: float = 0.6

    def validate(self) -> None:
        if self.w_distance < 0 or self.w_fuel < 0 or self.gas_price < 0:
            raise ValueError("pricing weights must be nonnegative")
        if self.top_zones < 1:
            raise ValueError("top_zones must be >= 1")
        if not (0 < self.delta_low <= self.delta_high):
            raise ValueError("flexibility range must satisfy 0 < low <= high")


@dataclass
class PassengerProfile:
    """Passenger preference weights plus the personal flexibility factor."""

    w_sharing: float = 1.0
    w_waiting: float = 4.0
    w_vehicle: float = 1.0
    flexibility: float = 0.45

    def validate(self) -> None:
        if min(self.w_sharing, self.w_waiting, self.w_vehicle) < 0:
            raise ValueError("profile weights must be nonnegative")
        if self.flexibility <= 0:
            raise ValueError("flexibility must be positive")


@dataclass(frozen=True)
class PriceQuote:
    """Record of one quoted trip, logged for every priced request."""

    request_id: int
    initial: float
    proposed: float
    route_cost_km: float
    sharing: int


def initial_price(route_cost_km: float, occupancy: int, vehicle, wait_min: float,
                  cfg: PricingConfig) -> float:
    """Platform initial price: base fare + shared distance + fuel - waiting credit.

    The shared cost is the updated route cost divided by the number of
    requests sharing it (this one included). Never drops below the
    vehicle's base fare.
    """
    if occupancy < 1:
        raise ValueError("occupancy must be >= 1")
    if route_cost_km < 0 or wait_min < 0:
        raise ValueError("route cost and wait must be nonnegative")
    vt = vehicle.vtype
    w_km = vt.rate_per_km if vt.rate_per_km is not None else cfg.w_distance
    w_wait = vt.rate_per_min if vt.rate_per_min is not None else cfg.w_wait
    shared = route_cost_km / occupancy
    price = vt.base_price + w_km * shared + cfg.w_fuel * shared * (cfg.gas_price / vt.mileage) \
        - w_wait * wait_min
    return max(price, vt.base_price)


def proposed_price(p_init: float, dest_zone: int, ranking, vehicle) -> float:
    """Vehicle counter-offer: surcharge grows with the destination's rank deficit.

    Destinations inside the hot set ride at the initial price; otherwise
    the rank position (normalized by zone count) scales a per-type surge
    coefficient. Always >= the initial price.
    """
    if ranking is None or ranking.is_hot(dest_zone):
        return p_init
    alpha_norm = ranking.rank_of(dest_zone) / max(ranking.n_zones, 1)
    return p_init * (1.0 + (alpha_norm / 2.0) * vehicle.vtype.surge_coeff)


def passenger_utility(profile: PassengerProfile, occupancy: int, type_rank: int,
                      wait_min: float) -> float:
    """Utility of the offer: solitude, quick pickup and vehicle class all help."""
    if occupancy < 1 or type_rank < 1:
        raise ValueError("occupancy and vehicle type rank must be >= 1")
    if wait_min < 0:
        raise ValueError("wait must be nonnegative")
    return (profile.w_sharing / occupancy
            + profile.w_waiting / max(wait_min, WAIT_GUARD_MIN)
            + profile.w_vehicle / type_rank)


def decide(utility: float, price: float, flexibility: float,
           accept_on_utility_ge: bool = True) -> bool:
    """Passenger verdict on a proposed price (boundary counts as accept)."""
    if flexibility <= 0:
        raise ValueError("flexibility must be positive")
    accept = utility >= price * flexibility
    return accept if accept_on_utility_ge else not accept
