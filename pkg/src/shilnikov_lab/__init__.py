"""Numerical laboratory for the Shilnikov saddle-focus return map.

Local flow near the saddle-focus, sections and charts, inner and outer
maps, calibration of the symbolic-dynamics constants and the nested
curve refinement that realizes prescribed itineraries.
"""
from .errors import ShilnikovError
from .fields import Eigentriple, FieldSpec, Nonlinearity, check_hypotheses
from .geometry import PlanePoint, chart_K, chart_K_inverse
from .kernel import BACKEND
from .maps import OuterBackend, ScenarioConfig, calibrate, inner_map, return_map, travel_time
from .symbolic import (
    ItineraryBuilder,
    Membership,
    SymbolSequence,
    angle_gap,
    build_forward_itinerary,
    build_window_trajectory,
    find_crossings,
    membership,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "Eigentriple",
    "FieldSpec",
    "ItineraryBuilder",
    "Membership",
    "Nonlinearity",
    "OuterBackend",
    "PlanePoint",
    "ScenarioConfig",
    "ShilnikovError",
    "SymbolSequence",
    "angle_gap",
    "build_forward_itinerary",
    "build_window_trajectory",
    "calibrate",
    "chart_K",
    "chart_K_inverse",
    "check_hypotheses",
    "find_crossings",
    "inner_map",
    "membership",
    "return_map",
    "travel_time",
]
