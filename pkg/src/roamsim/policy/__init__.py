from .engine import PolicyDecision, PolicyState, Reason, apply_hysteresis, evaluate, first_match
from .geofence import (
    Circle,
    FootprintCell,
    GeofenceError,
    GeofenceSpec,
    Polygon,
    footprint_trigger,
    geofence_contains,
    geofence_from_dict,
    point_in_polygon_ray,
    point_in_polygon_winding,
)
from .profile import (
    ProfileEntry,
    ProfileError,
    RadioPreferenceProfile,
    emit_profile_payload,
    emit_profile_text,
    parse_profile,
)

__all__ = [
    "PolicyDecision", "PolicyState", "Reason", "apply_hysteresis", "evaluate", "first_match",
    "Circle", "FootprintCell", "GeofenceError", "GeofenceSpec", "Polygon", "footprint_trigger",
    "geofence_contains", "geofence_from_dict", "point_in_polygon_ray", "point_in_polygon_winding",
    "ProfileEntry", "ProfileError", "RadioPreferenceProfile", "emit_profile_payload",
    "emit_profile_text", "parse_profile",
]
