"""Receding-horizon controllers over OPOM models."""

from opom_mpc.controllers.base import Controller, Strategy
from opom_mpc.controllers.setpoint import SetpointController, SetpointSolution, SetpointSpec
from opom_mpc.controllers.zone import ZoneController, ZoneSolution, ZoneSpec

__all__ = (
    "Controller",
    "SetpointController",
    "SetpointSolution",
    "SetpointSpec",
    "Strategy",
    "ZoneController",
    "ZoneSolution",
    "ZoneSpec",
)


def controller_for(spec):
    """Return the controller class instance matching ``spec``."""
    if isinstance(spec, ZoneSpec):
        return ZoneController(spec)
    return SetpointController(spec)
