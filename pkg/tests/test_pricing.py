import numpy as np
import pytest

from fleetpool.dispatch import HotspotRanking
from fleetpool.fleet import Vehicle, VehicleType
from fleetpool.pricing import (PassengerProfile, PricingConfig, decide, initial_price,
                               passenger_utility, proposed_price)


def vehicle(base=2.0, mileage=10.0, surge=0.8, rank=1):
    vt = VehicleType("test", seats=4, trunk=4, base_price=base, mileage=mileage,
                     surge_coeff=surge, utility_rank=rank)
    return Vehicle(0, vt, 0)


class TestInitialPrice:
    def test_degenerate_trip_is_base_fare(self):
        cfg = PricingConfig()
        assert initial_price(0.0, 1, vehicle(base=2.0), 0.0, cfg) == 2.0

    def test_worked_substitution(self):
        # 2 + 1*(6/2) + 0.5*(6/2)*0.2 - 0.05*4 = 5.1
        cfg = PricingConfig(w_distance=1.0, w_fuel=0.5, w_wait=0.05, gas_price=2.0)
        v = vehicle(base=2.0, mileage=10.0)
        assert initial_price(6.0, 2, v, 4.0, cfg) == pytest.approx(5.1)

    def test_floor_at_base_fare(self):
        cfg = PricingConfig(w_wait=0.05)
        v = vehicle(base=2.0)
        assert initial_price(1.0, 1, v, 10_000.0, cfg) == 2.0

    def test_monotone_in_route_cost(self):
        cfg = PricingConfig()
        v = vehicle()
        prices = [initial_price(c, 1, v, 3.0, cfg) for c in (0.0, 2.0, 5.0, 9.0)]
        assert prices == sorted(prices)

    def test_nonincreasing_in_wait(self):
        cfg = PricingConfig()
        v = vehicle()
        prices = [initial_price(8.0, 1, v, w, cfg) for w in (0.0, 5.0, 20.0, 100.0)]
        assert prices == sorted(prices, reverse=True)

    def test_type_rate_overrides_config(self):
        cfg = PricingConfig(w_distance=1.0)
        vt = VehicleType("custom", 4, 4, base_price=0.0, mileage=10.0, rate_per_km=2.0)
        v = Vehicle(0, vt, 0)
        got = initial_price(4.0, 1, v, 0.0, cfg)
        base = initial_price(4.0, 1, vehicle(base=0.0), 0.0, cfg)
        assert got == pytest.approx(base + 4.0)  # one extra unit/km over the default

    def test_rejects_bad_occupancy(self):
        with pytest.raises(ValueError):
            initial_price(1.0, 0, vehicle(), 0.0, PricingConfig())


class TestProposedPrice:
    def ranking(self, order, top):
        return HotspotRanking(order=order, top=set(top))

    def test_hot_destination_keeps_initial(self):
        r = self.ranking(list(range(10)), top=[0, 1])
        assert proposed_price(5.0, 1, r, vehicle()) == 5.0

    def test_best_rank_zero_surcharge(self):
        r = self.ranking(list(range(10)), top=[9])  # zone 0 ranked first but not hot
        assert proposed_price(5.0, 0, r, vehicle()) == pytest.approx(5.0)

    def test_worked_substitution(self):
        # alpha_norm 0.5, surge 0.8 -> 5.1 * 1.2 = 6.12
        order = list(range(10))
        r = self.ranking(order, top=[0])
        v = vehicle(surge=0.8)
        assert proposed_price(5.1, 5, r, v) == pytest.approx(6.12)

    def test_never_below_initial(self):
        rng = np.random.default_rng(2)
        order = list(rng.permutation(20))
        r = self.ranking(order, top=order[:3])
        v = vehicle(surge=1.1)
        for z in range(20):
            assert proposed_price(4.0, z, r, v) >= 4.0 - 1e-12

    def test_no_ranking_means_initial(self):
        assert proposed_price(3.0, 7, None, vehicle()) == 3.0


class TestPassengerUtility:
    def test_zero_weights(self):
        p = PassengerProfile(w_sharing=0, w_waiting=0, w_vehicle=0)
        assert passenger_utility(p, 2, 1, 5.0) == 0.0

    def test_worked_substitution(self):
        p = PassengerProfile(w_sharing=1.0, w_waiting=4.0, w_vehicle=1.0)
        assert passenger_utility(p, 2, 1, 4.0) == pytest.approx(2.5)

    def test_zero_wait_uses_guard(self):
        p = PassengerProfile(w_sharing=0.0, w_waiting=4.0, w_vehicle=0.0)
        assert passenger_utility(p, 1, 1, 0.0) == pytest.approx(4.0)

    def test_decreasing_in_occupancy_and_rank(self):
        p = PassengerProfile()
        u = [passenger_utility(p, occ, 1, 5.0) for occ in (1, 2, 4)]
        assert u == sorted(u, reverse=True)
        u = [passenger_utility(p, 1, rank, 5.0) for rank in (1, 2, 4)]
        assert u == sorted(u, reverse=True)


class TestDecide:
    def test_zero_utility_rejects(self):
        assert not decide(0.0, 1.0, 0.5)

    def test_boundary_accepts(self):
        assert decide(2.5, 5.0, 0.5)

    def test_above_price_rejects(self):
        assert not decide(2.5, 6.0, 0.5)

    def test_monotone_in_price(self):
        # raising the price never flips reject into accept
        prev = True
        for p in np.linspace(0.0, 20.0, 50):
            cur = decide(3.0, float(p), 0.4)
            assert prev or not cur
            prev = cur

    def test_flipped_comparator(self):
        assert decide(2.5, 6.0, 0.5, accept_on_utility_ge=False)
        assert not decide(2.5, 5.0, 0.5, accept_on_utility_ge=False)
