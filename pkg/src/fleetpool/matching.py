"""Greedy initial request-to-vehicle assignment.

Requests are handled in arrival order; each goes to the closest vehicle
(by ETA) within the reject radius that still has residual capacity of
the right compartment. Winners advance a provisional location and
consume provisional capacity so one matching pass stays consistent for
same-step requests.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from fleetpool.city import RoadGraph, eta
from fleetpool.demand import Request, PASSENGER

REJECT_RADIUS_KM = 5.0


@dataclass
class AssignmentBatch:
    """Per-vehicle assignment lists, each sorted by proximity to the vehicle."""

    by_vehicle: dict[int, list[Request]] = field(default_factory=dict)
    unassigned: list[Request] = field(default_factory=list)
    gate_km: dict[int, float] = field(default_factory=dict)  # request id -> match distance

    def total_assigned(self) -> int:
        return sum(len(v) for v in self.by_vehicle.values())


def greedy_match(available: list, pending: list[Request], graph: RoadGraph,
                 speed_km_per_min: float, radius_km: float = REJECT_RADIUS_KM) -> AssignmentBatch:
    """Assign each pending request to the nearest compatible vehicle.

    Candidates must be within ``radius_km`` of the request's pickup
    point (provisional location) and hold residual capacity for the
    request's compartment; minimum ETA wins, ties to the lower vehicle
    id. Requests without a candidate stay in ``unassigned``.
    """
    prov_loc = {v.id: v.location for v in available}
    prov_seats = {v.id: v.free_seats for v in available}
    prov_trunk = {v.id: v.free_trunk for v in available}
    vehicles = sorted(available, key=lambda v: v.id)
    batch = AssignmentBatch()
    for req in sorted(pending, key=lambda r: (r.request_time, r.id)):
        best = None
        best_eta = float("inf")
        best_d = 0.0
        for v in vehicles:
            if v.allowed_kind is not None and v.allowed_kind != req.kind:
                continue
            cap = prov_seats[v.id] if req.kind == PASSENGER else prov_trunk[v.id]
            if cap < req.size:
                continue
            d = graph.distance(prov_loc[v.id], req.current)
            if d > radius_km:
                continue
            t = eta(graph, prov_loc[v.id], req.current, speed_km_per_min)
            if t < best_eta - 1e-12:
                best_eta = t
                best = v
                best_d = d
        if best is None:
            batch.unassigned.append(req)
            continue
        batch.by_vehicle.setdefault(best.id, []).append(req)
        batch.gate_km[req.id] = best_d
        prov_loc[best.id] = req.current
        if req.kind == PASSENGER:
            prov_seats[best.id] -= req.size
        else:
            prov_trunk[best.id] -= req.size
    # each vehicle works its list in ascending proximity to its true location
    loc = {v.id: v.location for v in available}
    for vid, reqs in batch.by_vehicle.items():
        reqs.sort(key=lambda r: (graph.distance(loc[vid], r.current), r.id))
    return batch
