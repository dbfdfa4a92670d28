"""Multi-target tracking with unscented auxiliary-particle CPHD filters."""

from .auxiliary import UAcphdFilter, UAphdFilter
from .models import BirthModel, MotionModel, SensorModel, TrackingModels
from .scenario import load_scenario, simulate
from .smc import SmcCphdFilter, SmcPhdFilter

FILTERS = {
    "smc-phd": SmcPhdFilter,
    "smc-cphd": SmcCphdFilter,
    "u-aphd": UAphdFilter,
    "u-acphd": UAcphdFilter,
}

__all__ = [
    "FILTERS",
    "BirthModel",
    "MotionModel",
    "SensorModel",
    "TrackingModels",
    "SmcPhdFilter",
    "SmcCphdFilter",
    "UAphdFilter",
    "UAcphdFilter",
    "load_scenario",
    "simulate",
]
