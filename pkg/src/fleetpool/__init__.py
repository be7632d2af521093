"""fleetpool: discrete-event simulation and policies for mixed passenger/goods fleets."""

__version__ = "0.1.0"

from fleetpool.city import ZoneGrid, RoadGraph, build_grid, path_weight, eta, zone_of
from fleetpool.demand import Request
from fleetpool.fleet import Vehicle, VehicleType
from fleetpool.routing import RoutePlan, Stop, HopZoneSet

__all__ = [
    "ZoneGrid",
    "RoadGraph",
    "build_grid",
    "path_weight",
    "eta",
    "zone_of",
    "Request",
    "Vehicle",
    "VehicleType",
    "RoutePlan",
    "Stop",
    "HopZoneSet",
]
