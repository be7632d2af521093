"""Simulation engine: the per-step orchestration loop, movement and metrics.

Each step runs the same phase order so runs are deterministic per seed:
spawn -> dispatch new vehicles -> fetch demand -> greedy matching ->
per-vehicle planning and pricing (vehicle-id order) -> movement with
pickup/drop events -> idle-vehicle dispatch -> reward bookkeeping ->
metrics. Four baseline variants share one demand stream per seed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from fleetpool import city, demand as dm, fleet as fl, matching, pricing, routing, dispatch as dp
from fleetpool.city import GridConfig, build_grid
from fleetpool.config import ScenarioConfig, STREAMS, ConfigError
from fleetpool.demand import (Request, GoodsWorkloadConfig, PassengerWorkloadConfig,
                              GoodsGenerator, PassengerGenerator, load_requests,
                              PASSENGER, GOODS, PENDING, ASSIGNED, REJECTED)
from fleetpool.dispatch import (ActionGrid, DqnPolicy, NearestDemandPolicy, QFunction,
                                RandomPolicy, ReplayBuffer, StateEncoder, StepSummary,
                                Transition, compute_reward, demand_ranking, rank_zones)
from fleetpool.routing import DROPOFF, HOP_DROP, PICKUP, HopZoneSet, RoutePlan


ROW_FIELDS = ["step", "generated", "accepted", "rejected", "delivered", "occupied",
              "active", "pending", "staged", "distance_km", "cruising_min",
              "occupied_min", "working_min", "earnings", "fuel", "profit"]


@dataclass
class MetricsReport:
    """Per-step rows plus run-level aggregates; reproducible from the event log."""

    rows: list[dict] = field(default_factory=list)
    hop_histogram: dict[int, int] = field(default_factory=dict)
    fleet_size: int = 0
    days: float = 0.0

    def summary(self) -> dict:
        tot = {k: 0.0 for k in ROW_FIELDS if k not in ("step", "occupied", "active",
                                                       "pending", "staged")}
        for row in self.rows:
            for k in tot:
                tot[k] += row[k]
        generated = tot["generated"]
        accepted = tot["accepted"]
        working = tot["working_min"]
        out = {
            "steps": len(self.rows),
            "generated": int(generated),
            "accepted": int(accepted),
            "rejected": int(tot["rejected"]),
            "delivered": int(tot["delivered"]),
            "accept_rate": accepted / generated if generated else 0.0,
            "distance_km": tot["distance_km"],
            "cruising_min": tot["cruising_min"],
            "occupied_min": tot["occupied_min"],
            "working_min": working,
            "occupancy_rate": tot["occupied_min"] / working if working else 0.0,
            "earnings": tot["earnings"],
            "fuel": tot["fuel"],
            "profit": tot["profit"],
            "avg_daily_profit_per_vehicle": (tot["profit"] / (self.fleet_size * self.days)
                                             if self.fleet_size and self.days else 0.0),
            "mean_cruising_min_per_vehicle": (tot["cruising_min"] / self.fleet_size
                                              if self.fleet_size else 0.0),
        }
        for h in sorted(self.hop_histogram):
            out[f"hops_{h}"] = self.hop_histogram[h]
        return out

    def to_csv(self, path: str) -> None:
        """One row per step plus a `#`-prefixed summary footer block."""
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(",".join(ROW_FIELDS) + "\n")
            for row in self.rows:
                fh.write(",".join(repr(row[k]) if isinstance(row[k], float) else str(row[k])
                                  for k in ROW_FIELDS) + "\n")
            for k, v in self.summary().items():
                fh.write(f"# {k} = {v!r}\n")


def replay_metrics(events: list[dict], fleet_size: int, days: float) -> MetricsReport:
    """Rebuild the metrics report from an event stream (step rows + deliveries)."""
    report = MetricsReport(fleet_size=fleet_size, days=days)
    for ev in events:
        if ev["type"] == "step":
            report.rows.append(dict(ev["payload"]))
        elif ev["type"] == "dropoff" and ev["payload"].get("final"):
            h = ev["payload"]["hops"]
            report.hop_histogram[h] = report.hop_histogram.get(h, 0) + 1
    return report


def load_events(path: str) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


class Engine:
    """Owns all mutable run state; one instance per scenario run."""

    def __init__(self, cfg: ScenarioConfig, policy=None, policy_name: str = "nearest-demand",
                 q: QFunction | None = None, training: bool = False, event_sink=None):
        cfg.validate()
        self.cfg = cfg
        self.training = training
        self.event_sink = event_sink
        jitter = tuple(cfg.grid.weight_jitter) if cfg.grid.weight_jitter else None
        self.grid, self.graph = build_grid(GridConfig(cfg.grid.width, cfg.grid.height,
                                                      cfg.grid.cell_km, jitter, cfg.grid.seed))
        self.speed = cfg.sim.speed_km_per_min
        self.dt = cfg.sim.dt_min
        self.now = 0.0

        # named RNG streams so toggling one subsystem leaves the others alone
        master = cfg.sim.seed
        self.rng = {name: np.random.default_rng(np.random.SeedSequence(master, spawn_key=(k,)))
                    for name, k in STREAMS.items()}

        # hop zones
        if cfg.hops.csv:
            self.hops = routing.load_hop_zones(cfg.hops.csv, self.grid, cfg.hops.capacity)
        else:
            self.hops = routing.evenly_spaced_hop_zones(cfg.grid.width, cfg.grid.height,
                                                        cfg.hops.count, cfg.hops.capacity)
        self.hop_cfg = cfg.hops.hop_config()
        self.dmh_enabled = cfg.sim.variant.endswith("_dmh")
        self.combined = cfg.sim.variant.startswith("combined")

        # fleet
        self.vehicles = self._build_fleet()
        self._spawned = 0

        # demand sources
        self.requests: dict[int, Request] = {}
        self.pending: list[Request] = []
        self._trips: list[Request] = []
        if cfg.demand.trips_csv:
            self._trips = load_requests(cfg.demand.trips_csv, self.grid)
            for r in self._trips:
                self._draw_flexibility(r)
        self._trip_cursor = 0
        goods_cfg = GoodsWorkloadConfig(rates=dict(cfg.demand.goods_rates),
                                        radius_km=cfg.demand.goods_radius_km)
        pass_cfg = PassengerWorkloadConfig(rates=dict(cfg.demand.passenger_rates))
        self._goods_gen = GoodsGenerator(goods_cfg, self.graph, self.rng["demand"],
                                         id_start=1_000_000)
        self._pass_gen = PassengerGenerator(pass_cfg, self.grid.n_zones, self.rng["demand"],
                                            id_start=2_000_000)
        self.demand_history = np.zeros((0, self.grid.n_zones))
        self._staged_entries: list[int] = []  # zones of legs staged since last fetch

        # dispatch machinery
        d = cfg.dispatch
        self.encoder = StateEncoder(cfg.grid.width, cfg.grid.height, d.horizon,
                                    max_seats=max(t.seats for t in cfg.fleet.types.values()),
                                    max_trunk=max(t.trunk for t in cfg.fleet.types.values()),
                                    supply_scale=d.supply_scale, demand_scale=d.demand_scale)
        self.action_grid = ActionGrid(cfg.grid.width, cfg.grid.height, d.neighborhood_radius)
        if policy is not None:
            self.policy = policy
        elif policy_name == "dqn":
            if q is None:
                q = QFunction(self.encoder.length, self.action_grid.n_actions,
                              hidden=tuple(d.hidden), lr=d.lr,
                              seed=int(self.rng["net-init"].integers(0, 2**31 - 1)))
            self.policy = DqnPolicy(q, self.encoder, self.action_grid)
        elif policy_name == "random":
            self.policy = RandomPolicy(self.action_grid)
        elif policy_name == "nearest-demand":
            self.policy = NearestDemandPolicy(self.action_grid)
        else:
            raise ConfigError(f"unknown policy {policy_name!r}")
        self.q = getattr(self.policy, "q", None)
        self.replay = ReplayBuffer(d.replay_capacity)
        self._open_transitions: dict[int, list] = {}
        self.loss_log: list[tuple[int, float]] = []
        self.ranking = None
        self._supply = np.zeros((d.horizon, self.grid.n_zones))
        self._demand_fc = np.zeros((d.horizon, self.grid.n_zones))

        # metrics
        self.report = MetricsReport(fleet_size=cfg.fleet.size, days=cfg.sim.days)
        self.audit_violations: list[str] = []
        self._acc: dict[str, float] = {}
        self._profit_base: dict[int, float] = {}
        self._detour_min: dict[int, float] = {}
        self._activated: set[int] = set()

    # ------------------------------------------------------------------
    # setup helpers
    # ------------------------------------------------------------------
    def _build_fleet(self) -> list[fl.Vehicle]:
        cfg = self.cfg
        rng = np.random.default_rng(np.random.SeedSequence(cfg.sim.seed,
                                                           spawn_key=(STREAMS["fleet-init"],)))
        names = sorted(cfg.fleet.type_mix)
        probs = np.array([cfg.fleet.type_mix[n] for n in names])
        probs = probs / probs.sum() if probs.sum() else np.ones(len(names)) / max(len(names), 1)
        frac = cfg.sim.independent_passenger_fraction
        vehicles = []
        n_pass = 0
        for i in range(cfg.fleet.size):
            name = names[int(rng.choice(len(names), p=probs))] if names else "sedan"
            vtype = cfg.fleet.types[name]
            loc = int(rng.integers(0, self.grid.n_zones))
            allowed = None
            if not self.combined:
                # interleave the passenger-only / goods-only split evenly
                want_pass = int(np.floor((i + 1) * frac)) > n_pass
                allowed = PASSENGER if want_pass else GOODS
                n_pass += 1 if want_pass else 0
            vehicles.append(fl.Vehicle(i, vtype, loc, allowed))
        return vehicles

    def _draw_flexibility(self, req: Request) -> None:
        if req.kind == PASSENGER:
            lo, hi = self.cfg.pricing.delta_low, self.cfg.pricing.delta_high
            req.flexibility = float(self.rng["flexibility"].uniform(lo, hi))

    # ------------------------------------------------------------------
    # events
    # ------------------------------------------------------------------
    def _emit(self, etype: str, step: int, vehicle=None, request=None, zone=None,
              payload: dict | None = None, **kw):
        if self.event_sink is None:
            return
        p = dict(payload) if payload else {}
        p.update(kw)
        self.event_sink({"step": step, "type": etype, "vehicle": vehicle,
                         "request": request, "zone": zone, "payload": p})

    # ------------------------------------------------------------------
    # main loop
    # ------------------------------------------------------------------
    def run(self) -> MetricsReport:
        total = self.cfg.sim.total_steps
        for tau in range(total):
            self.step(tau)
        if self.cfg.sim.drain:
            cap = int(self.cfg.sim.drain_cap_min / self.dt)
            tau = total
            while tau < total + cap and not self._drained():
                self.step(tau, generate=False)
                tau += 1
        return self.report

    def _drained(self) -> bool:
        if self.pending:
            return False
        return all(not v.route.stops for v in self.vehicles)

    def step(self, tau: int, generate: bool = True) -> None:
        cfg = self.cfg
        self.now = tau * self.dt
        self._acc = {k: 0 for k in ("generated", "accepted", "rejected", "delivered")}
        self._profit_base = {v.id: v.earnings - v.fuel_cost for v in self.vehicles}
        base_tot = self._totals()
        self._detour_min = {}
        self._activated = set()

        new_vehicles = self._spawn(tau) if generate else []
        self._fetch_demand(tau, generate)
        self._forecast(tau)
        if new_vehicles:
            self._dispatch(new_vehicles, tau)
        self._match_and_plan(tau)
        for v in self.vehicles:
            if v.is_active():
                self._step_vehicle(v, tau)
        idle = fl.mark_idle_and_collect(self.vehicles, cfg.fleet.idle_threshold_min)
        if idle:
            # forecasts refresh so late-step decisions see post-movement supply
            self._forecast(tau, demand_too=False)
            self._dispatch(idle, tau)
        self._rewards_and_training(tau)
        self._metrics_row(tau, base_tot)
        if cfg.sim.audit:
            self._audit(tau)

    # ------------------------------------------------------------------
    # phases
    # ------------------------------------------------------------------
    def _spawn(self, tau: int) -> list[fl.Vehicle]:
        cfg = self.cfg
        if self._spawned >= cfg.fleet.size:
            return []
        batch = int(np.ceil(cfg.fleet.size * cfg.fleet.entry_fraction))
        batch = min(batch, cfg.fleet.size - self._spawned)
        out = []
        for v in self.vehicles[self._spawned:self._spawned + batch]:
            v.status = fl.IDLE
            v.spawn_step = tau
            v.idle_minutes = 0.0
            self._activated.add(v.id)
            out.append(v)
            self._emit("spawn", tau, vehicle=v.id, zone=v.location, type_name=v.vtype.name)
        self._spawned += batch
        return out

    def _fetch_demand(self, tau: int, generate: bool) -> None:
        cfg = self.cfg
        # age out never-accepted requests
        keep = []
        for r in self.pending:
            if not r.accepted and r.age(self.now) > cfg.sim.max_request_age_min:
                r.set_state(REJECTED)
                self._acc["rejected"] += 1
                self._emit("reject", tau, request=r.id, zone=r.current,
                           reason="max-age", waited=r.age(self.now))
            else:
                keep.append(r)
        self.pending = keep

        row = np.zeros(self.grid.n_zones)
        for z in self._staged_entries:
            row[z] += 1.0
        self._staged_entries = []
        new: list[Request] = []
        if generate:
            while (self._trip_cursor < len(self._trips)
                   and self._trips[self._trip_cursor].request_time < self.now + self.dt):
                new.append(self._trips[self._trip_cursor])
                self._trip_cursor += 1
            new.extend(self._goods_gen.step(tau, self.now))
            new.extend(self._pass_gen.step(tau, self.now))
        for r in new:
            if r.kind == PASSENGER and r.id >= 1_000_000:
                self._draw_flexibility(r)  # trip-file passengers drew at load time
            self.requests[r.id] = r
            row[r.current] += 1.0
            self._acc["generated"] += 1
        self.pending.extend(new)
        self.demand_history = np.vstack([self.demand_history, row])

    def _forecast(self, tau: int, demand_too: bool = True) -> None:
        cfg = self.cfg
        self._supply = fl.project_supply(self.vehicles, self.graph, self.dt,
                                         cfg.dispatch.horizon, self.speed)
        if demand_too:
            self._demand_fc = dm.predict_demand(self.demand_history, tau,
                                                cfg.dispatch.horizon, cfg.sim.steps_per_day)
            refresh = max(1, int(round(cfg.dispatch.ranking_refresh_min / self.dt)))
            if self.ranking is None or tau % refresh == 0:
                if self.q is not None:
                    self.ranking = rank_zones(self.q, self.encoder, self.action_grid,
                                              self.encoder.max_seats, self.encoder.max_trunk,
                                              self._supply, self._demand_fc,
                                              cfg.pricing.top_zones)
                else:
                    self.ranking = demand_ranking(self._demand_fc, cfg.pricing.top_zones)

    def _epsilon(self, tau: int) -> float:
        if not self.training:
            return 0.0
        d = self.cfg.dispatch
        half = max(1, self.cfg.sim.total_steps // 2)
        frac = min(tau / half, 1.0)
        return d.eps_start + (d.eps_final - d.eps_start) * frac

    def _dispatch(self, vehicles: list[fl.Vehicle], tau: int) -> None:
        eps = self._epsilon(tau)
        choices = dp.dispatch_idle(vehicles, self.policy, self._supply, self._demand_fc,
                                   eps, self.rng["exploration"])
        by_id = {v.id: v for v in vehicles}
        for vid in sorted(choices):
            v = by_id[vid]
            target, state, action = choices[vid]
            if self.training and self.q is not None and state is not None:
                self._close_transition(v, state)
                self._open_transitions[vid] = [state, action, 0.0, 0]
            v.idle_minutes = 0.0
            if target != v.location:
                v.dispatch_target = target
                v.status = fl.DISPATCHING
                self._retarget(v)
            self._emit("dispatch", tau, vehicle=vid, zone=target)

    def _close_transition(self, v: fl.Vehicle, next_state: np.ndarray) -> None:
        open_tr = self._open_transitions.pop(v.id, None)
        if open_tr is None:
            return
        state, action, reward, _steps = open_tr
        self.replay.push(Transition(state, action, reward, next_state,
                                    self.action_grid.valid_mask(v.location)))

    # -- matching and planning -----------------------------------------
    def _match_and_plan(self, tau: int) -> None:
        available = [v for v in self.vehicles if v.is_available()]
        batch = matching.greedy_match(available, self.pending, self.graph, self.speed)
        for reqs in batch.by_vehicle.values():
            for r in reqs:
                r.set_state(ASSIGNED)
        self.pending = list(batch.unassigned)
        requeued: list[Request] = []
        by_id = {v.id: v for v in self.vehicles}
        for vid in sorted(batch.by_vehicle):
            v = by_id[vid]
            for req in batch.by_vehicle[vid]:
                self._emit("assign", tau, vehicle=vid, request=req.id, zone=req.current,
                           gate_km=batch.gate_km[req.id])
                if self.cfg.sim.audit and batch.gate_km[req.id] > matching.REJECT_RADIUS_KM + 1e-9:
                    self.audit_violations.append(
                        f"step {tau}: request {req.id} matched beyond the reject radius")
                if req.kind == PASSENGER:
                    ok = self._plan_passenger(v, req, tau)
                else:
                    ok = self._plan_goods(v, req, tau)
                if not ok:
                    req.set_state(PENDING)
                    requeued.append(req)
        self.pending.extend(requeued)

    def _pickup_wait_min(self, v: fl.Vehicle, plan: RoutePlan, req: Request) -> float:
        dist = 0.0
        prev = v.location
        for s in plan.stops:
            dist += self.graph.distance(prev, s.location)
            prev = s.location
            if s.request_id == req.id and s.action == PICKUP:
                break
        return (self.now - req.request_time) + dist / self.speed

    def _plan_passenger(self, v: fl.Vehicle, req: Request, tau: int) -> bool:
        if v.free_seats < req.size:
            self._emit("requeue", tau, vehicle=v.id, request=req.id, reason="no-seats")
            return False
        res = routing.insert_request(v, v.route, req, req.dest, self.graph)
        if res is None:
            self._emit("requeue", tau, vehicle=v.id, request=req.id, reason="infeasible")
            return False
        plan, _incr = res
        occupancy = len(plan.request_ids())
        wait = self._pickup_wait_min(v, plan, req)
        p_init = pricing.initial_price(plan.cost_km, occupancy, v, wait, self.cfg.pricing)
        prop = pricing.proposed_price(p_init, req.dest, self.ranking, v)
        profile = self.cfg.passenger_profile
        prof = pricing.PassengerProfile(profile.w_sharing, profile.w_waiting,
                                        profile.w_vehicle, req.flexibility)
        utility = pricing.passenger_utility(prof, occupancy, v.vtype.utility_rank, wait)
        self._emit("quote", tau, vehicle=v.id, request=req.id, zone=req.dest,
                   initial=p_init, proposed=prop, route_cost_km=plan.cost_km,
                   sharing=occupancy, utility=utility, flexibility=req.flexibility)
        if self.cfg.sim.audit and prop < p_init - 1e-9:
            self.audit_violations.append(f"step {tau}: proposed < initial for {req.id}")
        if not pricing.decide(utility, prop, req.flexibility,
                              self.cfg.pricing.accept_on_utility_ge):
            self._emit("requeue", tau, vehicle=v.id, request=req.id, reason="negotiation")
            return False
        self._commit(v, req, plan, prop, tau)
        return True

    def _plan_goods(self, v: fl.Vehicle, req: Request, tau: int) -> bool:
        if v.free_trunk < req.size:
            self._emit("requeue", tau, vehicle=v.id, request=req.id, reason="no-trunk")
            return False
        if self.dmh_enabled and not v.is_empty():
            target = routing.assign_hop_zone(req, v.route, self.hops, self.hop_cfg, self.graph)
        else:
            target = req.dest
        res = routing.insert_request(v, v.route, req, target, self.graph)
        if res is None and target != req.dest:
            target = req.dest
            res = routing.insert_request(v, v.route, req, target, self.graph)
        if res is None:
            self._emit("requeue", tau, vehicle=v.id, request=req.id, reason="infeasible")
            return False
        plan, _incr = res
        occupancy = len(plan.request_ids())
        wait = self._pickup_wait_min(v, plan, req)
        p_init = pricing.initial_price(plan.cost_km, occupancy, v, wait, self.cfg.pricing)
        self._emit("quote", tau, vehicle=v.id, request=req.id, zone=target,
                   initial=p_init, proposed=p_init, route_cost_km=plan.cost_km,
                   sharing=occupancy)
        if target != req.dest:
            self.hops.add_package(target)
        self._commit(v, req, plan, p_init, tau)
        return True

    def _commit(self, v: fl.Vehicle, req: Request, plan: RoutePlan, price: float,
                tau: int) -> None:
        v.route = plan
        if req.kind == PASSENGER:
            v.commit(req.size, 0)
        else:
            v.commit(0, req.size)
        req.active_price = price
        req.assigned_vehicle = v.id
        if not req.accepted:
            req.accepted = True
            self._acc["accepted"] += 1
        v.status = fl.OCCUPIED
        v.dispatch_target = None
        v.idle_minutes = 0.0
        self._retarget(v)
        self._emit("commit", tau, vehicle=v.id, request=req.id, zone=req.current,
                   price=price, cost_km=plan.cost_km)

    # -- movement --------------------------------------------------------
    def _retarget(self, v: fl.Vehicle) -> None:
        target = v.next_target()
        if target is None:
            v.path_nodes = []
            v.edge_progress_km = 0.0
            return
        if v.edge_progress_km > 1e-9 and v.path_nodes:
            head = v.path_nodes[0]  # finish the edge already started
            v.path_nodes = [head] + self.graph.path_nodes(head, target)[1:]
        else:
            v.path_nodes = self.graph.path_nodes(v.location, target)[1:]
            v.edge_progress_km = 0.0

    def _step_vehicle(self, v: fl.Vehicle, tau: int) -> None:
        v.working_min += self.dt
        budget = self.speed * self.dt
        spent = 0.0
        gas = self.cfg.pricing.gas_price / v.vtype.mileage
        while True:
            target = v.next_target()
            if target is None:
                v.idle_minutes += (budget - spent) / self.speed
                if v.status != fl.IDLE:
                    v.status = fl.IDLE
                break
            if v.location == target and not v.path_nodes:
                self._arrive(v, tau, self.now + spent / self.speed)
                continue
            if not v.path_nodes:
                self._retarget(v)
                continue
            if spent >= budget - 1e-9:
                break
            nxt = v.path_nodes[0]
            edge = self.graph.distance(v.location, nxt)
            move = min(budget - spent, edge - v.edge_progress_km)
            minutes = move / self.speed
            v.distance_km += move
            v.fuel_cost += move * gas
            if v.onboard:
                v.occupied_min += minutes
            else:
                v.cruising_min += minutes
            if v.route.stops and v.route.stops[0].action in (PICKUP, HOP_DROP) and v.onboard:
                self._detour_min[v.id] = self._detour_min.get(v.id, 0.0) + minutes
            spent += move
            v.edge_progress_km += move
            if v.edge_progress_km >= edge - 1e-9:
                v.location = nxt
                v.path_nodes.pop(0)
                v.edge_progress_km = 0.0

    def _arrive(self, v: fl.Vehicle, tau: int, minute: float) -> None:
        if v.route.stops and v.route.stops[0].location == v.location:
            while v.route.stops and v.route.stops[0].location == v.location:
                stop = v.route.stops.pop(0)
                self._process_stop(v, stop, tau, minute)
            if v.route.stops:
                v.route.cost_km = routing.route_cost(self.graph, v.location, v.route)
                self._retarget(v)
            else:
                v.route.cost_km = 0.0
                v.path_nodes = []
                v.status = fl.IDLE
                v.idle_minutes = 0.0
            return
        if v.dispatch_target is not None and v.location == v.dispatch_target:
            v.dispatch_target = None
            v.status = fl.IDLE
            v.idle_minutes = 0.0
            return
        # target changed under us; recompute the path
        self._retarget(v)

    def _process_stop(self, v: fl.Vehicle, stop: routing.Stop, tau: int, minute: float) -> None:
        req = self.requests[stop.request_id]
        if stop.action == PICKUP:
            if req.hops > 0:
                self.hops.remove_package(req.current)
            req.set_state(dm.ONBOARD)
            req.pickup_time = minute
            leg_dest = self._leg_target_after_pop(v, req.id)
            solo = city.eta(self.graph, stop.location, leg_dest, self.speed)
            v.onboard[req.id] = fl.OnboardOrder(req.id, req.kind, req.size, minute,
                                                req.dest, solo, req.request_time)
            self._emit("pickup", tau, vehicle=v.id, request=req.id, zone=stop.location,
                       waited=minute - req.request_time)
            return
        # drop of some kind
        order = v.onboard.pop(req.id)
        if req.kind == PASSENGER:
            v.release(order.size, 0)
        else:
            v.release(0, order.size)
        v.earnings += req.active_price
        if stop.action == DROPOFF:
            req.set_state(dm.DELIVERED)
            req.delivery_time = minute
            self.report.hop_histogram[req.hops] = self.report.hop_histogram.get(req.hops, 0) + 1
            self._acc["delivered"] += 1
            self._emit("dropoff", tau, vehicle=v.id, request=req.id, zone=stop.location,
                       hops=req.hops, final=True, price=req.active_price)
        else:  # hop drop: stage and requeue the remaining leg
            if self.cfg.sim.audit:
                before = self.graph.distance(req.current, req.dest)
                after = self.graph.distance(stop.location, req.dest)
                if after >= before - 1e-9:
                    self.audit_violations.append(
                        f"step {tau}: hop of request {req.id} did not shrink distance")
            req.stage_at_hop(stop.location)
            self.pending.append(req)
            self._staged_entries.append(stop.location)
            self._emit("hop-drop", tau, vehicle=v.id, request=req.id, zone=stop.location,
                       hops=req.hops, final=False, price=req.active_price)

    def _leg_target_after_pop(self, v: fl.Vehicle, rid: int) -> int:
        for s in v.route.stops:
            if s.request_id == rid and s.action in (DROPOFF, HOP_DROP):
                return s.location
        raise RuntimeError(f"vehicle {v.id}: no drop stop for request {rid}")

    # -- rewards / training ----------------------------------------------
    def _extra_time_min(self, v: fl.Vehicle) -> float:
        if not v.onboard:
            return 0.0
        rw = self.cfg.dispatch.rewards
        remaining: dict[int, float] = {}
        dist = -v.edge_progress_km
        prev = v.location
        chain = v.path_nodes[:1] if v.path_nodes else []
        for node in chain:
            dist += self.graph.distance(prev, node)
            prev = node
        for s in v.route.stops:
            dist += self.graph.distance(prev, s.location)
            prev = s.location
            if s.request_id in v.onboard and s.request_id not in remaining \
                    and s.action in (DROPOFF, HOP_DROP):
                remaining[s.request_id] = dist / self.speed
        now_end = self.now + self.dt
        total = 0.0
        for rid, order in v.onboard.items():
            delta = (now_end - order.request_minute) + remaining.get(rid, 0.0) - order.solo_minutes
            w = rw.urgency_passenger if order.kind == PASSENGER else rw.urgency_goods
            total += w * delta
        return total

    def _rewards_and_training(self, tau: int) -> None:
        if not (self.training and self.q is not None):
            return
        d = self.cfg.dispatch
        cap_steps = max(1, int(round(d.transition_cap_min / self.dt)))
        for v in self.vehicles:
            if not v.is_active():
                continue
            summary = StepSummary(
                passengers=sum(o.size for o in v.onboard.values() if o.kind == PASSENGER),
                packages=sum(o.size for o in v.onboard.values() if o.kind == GOODS),
                detour_min=self._detour_min.get(v.id, 0.0),
                extra_time_min=self._extra_time_min(v),
                profit=(v.earnings - v.fuel_cost) - self._profit_base.get(v.id, 0.0),
                activated=v.id in self._activated,
            )
            reward, _parts = compute_reward(summary, d.rewards)
            tr = self._open_transitions.get(v.id)
            if tr is not None:
                tr[2] += reward
                tr[3] += 1
                if tr[3] >= cap_steps:
                    state = self.encoder.encode(v.location, v.free_seats, v.free_trunk,
                                                self._supply, self._demand_fc)
                    self._close_transition(v, state)
        if tau % d.train_every_steps == 0 and len(self.replay) >= d.batch_size:
            batch = self.replay.sample(d.batch_size, self.rng["replay"])
            loss = self.q.train_step(batch, d.rewards.gamma)
            self.loss_log.append((tau, loss))

    # -- metrics -----------------------------------------------------------
    def _totals(self) -> dict:
        return {
            "distance_km": sum(v.distance_km for v in self.vehicles),
            "cruising_min": sum(v.cruising_min for v in self.vehicles),
            "occupied_min": sum(v.occupied_min for v in self.vehicles),
            "working_min": sum(v.working_min for v in self.vehicles),
            "earnings": sum(v.earnings for v in self.vehicles),
            "fuel": sum(v.fuel_cost for v in self.vehicles),
        }

    def _metrics_row(self, tau: int, base: dict) -> None:
        cur = self._totals()
        row = {
            "step": tau,
            "generated": int(self._acc["generated"]),
            "accepted": int(self._acc["accepted"]),
            "rejected": int(self._acc["rejected"]),
            "delivered": int(self._acc["delivered"]),
            "occupied": sum(1 for v in self.vehicles if v.onboard),
            "active": sum(1 for v in self.vehicles if v.is_active()),
            "pending": len(self.pending),
            "staged": sum(self.hops.held.values()),
        }
        for k in ("distance_km", "cruising_min", "occupied_min", "working_min",
                  "earnings", "fuel"):
            row[k] = cur[k] - base[k]
        row["profit"] = row["earnings"] - row["fuel"]
        self.report.rows.append(row)
        self._emit("step", tau, payload=row)

    # -- invariant audit ----------------------------------------------------
    def _audit(self, tau: int) -> None:
        acc = sum(1 for r in self.requests.values() if r.accepted)
        rej = sum(1 for r in self.requests.values() if r.state == REJECTED)
        pend = sum(1 for r in self.requests.values()
                   if not r.accepted and r.state == PENDING)
        if acc + rej + pend != len(self.requests):
            self.audit_violations.append(
                f"step {tau}: conservation {acc}+{rej}+{pend} != {len(self.requests)}")
        for v in self.vehicles:
            if not fl.capacity_feasible(v, v.route):
                self.audit_violations.append(f"step {tau}: vehicle {v.id} route infeasible")
            if not (0 <= v.committed_seats <= v.vtype.seats
                    and 0 <= v.committed_trunk <= v.vtype.trunk):
                self.audit_violations.append(f"step {tau}: vehicle {v.id} capacity out of range")
        for z, held in self.hops.held.items():
            if held > self.hops.capacity[z] or held < 0:
                self.audit_violations.append(f"step {tau}: hop-zone {z} held {held}")
        row = self.report.rows[-1]
        if row["working_min"] > 0 and not (0 <= row["occupied_min"] <= row["working_min"] + 1e-9):
            self.audit_violations.append(f"step {tau}: occupancy outside [0,1]")


def run(cfg: ScenarioConfig, policy_name: str = "nearest-demand", q: QFunction | None = None,
        training: bool = False, event_sink=None) -> MetricsReport:
    """Execute one scenario end to end and return its metrics report."""
    return Engine(cfg, policy_name=policy_name, q=q, training=training,
                  event_sink=event_sink).run()


def run_baseline_matrix(cfg: ScenarioConfig, policy_name: str = "nearest-demand",
                        q: QFunction | None = None,
                        variants: tuple[str, ...] = ("combined_dmh", "combined",
                                                     "independent_dmh", "independent"),
                        drain: bool = True) -> dict[str, MetricsReport]:
    """Run the 2x2 baseline grid (combined/independent x hop routing on/off).

    Every variant reuses the same master seed, so the generated demand
    stream is identical across the four runs.
    """
    out = {}
    for variant in variants:
        c = cfg.copy()
        c.sim.variant = variant
        c.sim.drain = drain
        engine = Engine(c, policy_name=policy_name, q=q)
        out[variant] = engine.run()
    return out
