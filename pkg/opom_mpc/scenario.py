"""Scenario documents: validation, "auto" weight resolution and writing.

A scenario is one JSON document describing the model, the controller configuration and the
run length. ``ScenarioKeeper`` validates it field by field the way a record keeper ensures
each object exists before the next one depends on it; every violation is collected and
reported together.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at
  http://www.apache.org/licenses/LICENSE-2.0
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from . import SETTINGS
from .certificates import certify_setpoint, certify_zone
from .choices import ControllerChoices
from .constants import (
    AUTO_WEIGHTS,
    CERTIFICATE_KEYS,
    DEFAULT_STEPS,
    INTEGER_CERTIFICATE_KEYS,
    MODEL_MATRICES,
    RECTANGLE_NAMES,
    SCENARIO_KEYS,
    TOLERANCE_KEYS,
    WEIGHT_NAMES,
)
from .controllers import SetpointSpec, ZoneSpec, controller_for
from .exceptions import MpcException
from .helpers import Rectangle, as_vector
from .opom import Mode, OpomModel, PlantState, build_from_modes
from .serializers import decode_matrix, encode_matrix, encode_vector, read_json, write_json

logger = logging.getLogger(SETTINGS["logger_name"])


@dataclass(eq=False)
class Scenario:  # pylint: disable=too-many-instance-attributes
    """A validated scenario with its controller spec and certificate bundle."""

    controller: str
    model: OpomModel
    horizon: int
    weights: dict
    rectangles: dict
    target: np.ndarray
    steps: int = DEFAULT_STEPS
    initial_state: PlantState = None
    tolerances: dict = field(default_factory=dict)
    overrides: dict = field(default_factory=dict)
    certificate_mode: bool = True
    auto: tuple = ()
    spec: object = None
    certificates: object = None

    def build_controller(self):
        """Return the controller of this scenario."""
        return controller_for(self.spec)


def weight_from(value, name, size):
    """Return a weight matrix from a list of rows, a matrix document or a scalar c (meaning c·I)."""
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value) * np.eye(size)
    matrix = decode_matrix(value, name)
    if matrix.shape != (size, size):
        raise MpcException(reason="fail-config", message=f"{name} has shape {matrix.shape}, expected ({size}, {size})")
    return matrix


def _complex(value, name):
    if isinstance(value, (list, tuple)):
        if len(value) != 2:
            raise MpcException(reason="fail-config", message=f"{name} must be a number or [real, imag]")
        return complex(float(value[0]), float(value[1]))
    return complex(float(value))


class ScenarioKeeper:
    """Validate a scenario document and build the Scenario it describes."""

    def __init__(self, document, source="<document>"):
        """Init the keeper with the parsed document."""
        self.document = document if isinstance(document, dict) else {}
        self.source = source
        self.errors = []
        self.controller = None
        self.model = None
        self.horizon = None
        self.weights = {}
        self.auto = ()
        self.rectangles = {}
        self.target = None
        self.steps = DEFAULT_STEPS
        self.initial_state = None
        self.tolerances = {}
        self.overrides = {}
        self.certificate_mode = True
        self.spec = None
        self.certificates = None
        if not isinstance(document, dict):
            self.errors.append("document: expected a JSON object")

    def _fail(self, name, exc):
        message = exc.message if isinstance(exc, MpcException) else str(exc)
        self.errors.append(f"{name}: {message}")
        logger.warning("CHECK: %s: %s: %s", self.source, name, message)

    def ensure_known_keys(self):
        """Reject keys that are not part of the document schema."""
        for key in self.document:
            if key not in SCENARIO_KEYS:
                self.errors.append(f"{key}: unknown field")

    def ensure_controller(self):
        """Ensure the controller kind is one of ControllerChoices."""
        value = self.document.get("controller")
        if value not in ControllerChoices.values():
            self.errors.append(f"controller: must be one of {ControllerChoices.values()}, got {value!r}")
            return
        self.controller = value

    def ensure_model(self):
        """Ensure the model is given either by its four matrices or by D0 and a list of modes."""
        value = self.document.get("model")
        if not isinstance(value, dict) or "D0" not in value:
            self.errors.append("model: expected an object with D0 and either F, Dd, Psi or modes")
            return
        try:
            if "modes" in value:
                modes = [
                    Mode(
                        pole=_complex(mode["pole"], f"model.modes[{index}].pole"),
                        output_index=int(mode.get("output", 0)),
                        input_index=int(mode.get("input", 0)),
                        residue=_complex(mode.get("residue", 1.0), f"model.modes[{index}].residue"),
                    )
                    for index, mode in enumerate(value["modes"])
                ]
                self.model = build_from_modes(decode_matrix(value["D0"], "model.D0"), modes)
            else:
                matrices = {name: decode_matrix(value[name], f"model.{name}") for name in MODEL_MATRICES}
                self.model = OpomModel(**matrices)
        except (AttributeError, KeyError, TypeError, ValueError, MpcException) as exc:
            self._fail("model", exc)

    def ensure_horizon(self):
        """Ensure the horizon is an integer m >= 1."""
        value = self.document.get("horizon")
        if isinstance(value, bool) or not isinstance(value, int) or value < 1:
            self.errors.append(f"horizon: must be an integer >= 1, got {value!r}")
            return
        self.horizon = value

    def ensure_weights(self):
        """Ensure every weight of the controller is present; the auto weight may be "auto"."""
        if self.controller is None or self.model is None:
            return
        value = self.document.get("weights")
        if not isinstance(value, dict):
            self.errors.append("weights: expected an object")
            return
        sizes = {"Q": self.model.ny, "S": self.model.ny, "Qy": self.model.ny, "Sy": self.model.ny}
        auto = []
        for name in WEIGHT_NAMES[self.controller]:
            weight = value.get(name, "auto" if name == AUTO_WEIGHTS[self.controller] else None)
            if weight is None:
                self.errors.append(f"weights.{name}: missing")
            elif weight == "auto" and name == AUTO_WEIGHTS[self.controller]:
                auto.append(name)
            else:
                try:
                    self.weights[name] = weight_from(weight, f"weights.{name}", sizes.get(name, self.model.nu))
                except MpcException as exc:
                    self._fail(f"weights.{name}", exc)
        for name in value:
            if name not in WEIGHT_NAMES[self.controller]:
                self.errors.append(f"weights.{name}: not a {self.controller} weight")
        self.auto = tuple(auto)

    def ensure_rectangles(self):
        """Ensure the input, move (and output) boxes fit the model and contain the origin."""
        if self.controller is None or self.model is None:
            return
        sizes = {"U": self.model.nu, "dU": self.model.nu, "Y": self.model.ny}
        for name in RECTANGLE_NAMES[self.controller]:
            value = self.document.get(name)
            try:
                if not isinstance(value, dict):
                    raise MpcException(reason="fail-config", message="expected an object with lo and hi")
                box = Rectangle(lo=value["lo"], hi=value["hi"])
                if box.dim != sizes[name]:
                    raise MpcException(reason="fail-config", message=f"must have {sizes[name]} coordinates")
                self.rectangles[name] = box
            except KeyError as exc:
                self._fail(name, MpcException(reason="fail-config", message=f"missing {exc}"))
            except MpcException as exc:
                self._fail(name, exc)

    def ensure_target(self):
        """Ensure the set-point reference r (ny) or the zone input target u_des (nu)."""
        if self.controller is None or self.model is None:
            return
        if self.controller == ControllerChoices.CONTROLLER_SETPOINT:
            name, size = "reference", self.model.ny
        else:
            name, size = "target", self.model.nu
        if name not in self.document:
            self.errors.append(f"{name}: missing")
            return
        try:
            self.target = as_vector(self.document[name], name, size)
        except MpcException as exc:
            self._fail(name, exc)

    def ensure_steps(self):
        """Ensure the number of closed-loop steps is an integer >= 1."""
        value = self.document.get("steps", DEFAULT_STEPS)
        if isinstance(value, bool) or not isinstance(value, int) or value < 1:
            self.errors.append(f"steps: must be an integer >= 1, got {value!r}")
            return
        self.steps = value

    def ensure_initial_state(self):
        """Ensure the initial state; the origin steady state when absent."""
        if self.model is None:
            return
        value = self.document.get("initial_state")
        if value is None:
            self.initial_state = self.model.origin()
            return
        try:
            self.initial_state = PlantState(
                xs=value.get("xs", np.zeros(self.model.ny)),
                xd=value.get("xd", np.zeros(self.model.nd)),
                u=value.get("u", np.zeros(self.model.nu)),
            ).check(self.model)
        except AttributeError:
            self.errors.append("initial_state: expected an object with xs, xd and u")
        except MpcException as exc:
            self._fail("initial_state", exc)

    def ensure_tolerances(self):
        """Ensure analyzer tolerance overrides are known positive numbers."""
        value = self.document.get("tolerances", {})
        if not isinstance(value, dict):
            self.errors.append("tolerances: expected an object")
            return
        for name, tol in value.items():
            if name not in TOLERANCE_KEYS:
                self.errors.append(f"tolerances.{name}: unknown tolerance")
            elif isinstance(tol, bool) or not isinstance(tol, (int, float)) or tol <= 0:
                self.errors.append(f"tolerances.{name}: must be a positive number")
            else:
                self.tolerances[name] = float(tol)

    def ensure_certificates(self):
        """Ensure certificate overrides, resolve "auto" weights and build the controller spec."""
        value = self.document.get("certificates", {})
        self.certificate_mode = self.document.get("certificate_mode", True)
        if not isinstance(self.certificate_mode, bool):
            self.errors.append("certificate_mode: must be true or false")
        if not isinstance(value, dict):
            self.errors.append("certificates: expected an object")
            return
        if self.controller is None:
            return
        for name, knob in value.items():
            if name not in CERTIFICATE_KEYS[self.controller]:
                self.errors.append(f"certificates.{name}: not a {self.controller} certificate override")
            elif isinstance(knob, bool) or not isinstance(knob, (int, float)) or not np.isfinite(knob):
                self.errors.append(f"certificates.{name}: must be a finite number")
            elif name in INTEGER_CERTIFICATE_KEYS and (
                not float(knob).is_integer() or knob < INTEGER_CERTIFICATE_KEYS[name]
            ):
                self.errors.append(f"certificates.{name}: must be an integer >= {INTEGER_CERTIFICATE_KEYS[name]}")
            elif name in INTEGER_CERTIFICATE_KEYS:
                self.overrides[name] = int(knob)
            else:
                self.overrides[name] = knob
        if self.errors:
            return

        try:
            if self.controller == ControllerChoices.CONTROLLER_SETPOINT:
                self._certify_setpoint()
            else:
                self._certify_zone()
        except MpcException as exc:
            self._fail("certificates", exc)

    def _certify_setpoint(self):
        weights, boxes = self.weights, self.rectangles
        knobs = dict(self.overrides)
        bundle = certify_setpoint(
            self.model,
            weights["Q"],
            weights["R"],
            self.horizon,
            boxes["U"],
            self.target,
            phi=knobs.pop("phi", None),
            beta=knobs.pop("beta", None),
            **knobs,
        )
        if "S" in self.auto:
            weights["S"] = bundle.S
            logger.info("COLLECT: S resolved to %.6g·Ŝ", bundle.beta)
        self.certificates = bundle
        self.spec = SetpointSpec(
            model=self.model,
            m=self.horizon,
            Q=weights["Q"],
            R=weights["R"],
            S=weights["S"],
            U=boxes["U"],
            dU=boxes["dU"],
            r=self.target,
            phi=bundle.phi,
        )

    def _certify_zone(self):
        weights, boxes = self.weights, self.rectangles
        bundle = certify_zone(
            self.model,
            weights["Qy"],
            weights["Qu"],
            weights["R"],
            self.horizon,
            boxes["U"],
            boxes["Y"],
            self.target,
            Su=weights.get("Su"),
            **self.overrides,
        )
        if "Su" in self.auto:
            weights["Su"] = bundle.Su
            logger.info("COLLECT: Su resolved to H + %.6g·I", self.overrides.get("su_shift", SETTINGS["su_shift"]))
        self.certificates = bundle
        self.spec = ZoneSpec(
            model=self.model,
            m=self.horizon,
            Qy=weights["Qy"],
            Qu=weights["Qu"],
            R=weights["R"],
            Sy=weights["Sy"],
            Su=weights["Su"],
            U=boxes["U"],
            dU=boxes["dU"],
            Y=boxes["Y"],
            u_des=self.target,
            certificate_mode=self.certificate_mode,
        )

    def ensure_scenario(self):
        """Run every check and return the Scenario.

        Raises:
          MpcException("fail-config"):
            When any field is invalid; ``details`` lists every violation
        """
        if isinstance(self.document, dict) and self.document:
            self.ensure_known_keys()
            self.ensure_controller()
            self.ensure_model()
            self.ensure_horizon()
            self.ensure_weights()
            self.ensure_rectangles()
            self.ensure_target()
            self.ensure_steps()
            self.ensure_initial_state()
            self.ensure_tolerances()
            self.ensure_certificates()
        elif not self.errors:
            self.errors.append("document: empty")

        if self.errors:
            raise MpcException(
                reason="fail-config",
                message=f"{self.source}: {len(self.errors)} invalid field(s): " + "; ".join(self.errors),
                details=self.errors,
            )
        return Scenario(
            controller=self.controller,
            model=self.model,
            horizon=self.horizon,
            weights=self.weights,
            rectangles=self.rectangles,
            target=self.target,
            steps=self.steps,
            initial_state=self.initial_state,
            tolerances=self.tolerances,
            overrides=self.overrides,
            certificate_mode=self.certificate_mode,
            auto=self.auto,
            spec=self.spec,
            certificates=self.certificates,
        )


def load_scenario(path):
    """Read, validate and resolve the scenario document at ``path``.

    Raises:
      MpcException("fail-io"):
        When the file cannot be read
      MpcException("fail-config"):
        When the document does not parse or does not validate
    """
    logger.info("START: load scenario %s", path)
    scenario = ScenarioKeeper(read_json(path), source=str(path)).ensure_scenario()
    model = scenario.model
    logger.info("FINISH: %s scenario, ny=%s nu=%s nd=%s", scenario.controller, model.ny, model.nu, model.nd)
    return scenario


def scenario_document(scenario):
    """Return the resolved document of ``scenario``: explicit model matrices and weights.

    Set-point documents pin the resolved β and φ so reloading does not sample again.
    """
    model = scenario.model
    document = {
        "controller": scenario.controller,
        "model": {name: encode_matrix(getattr(model, name)) for name in MODEL_MATRICES},
        "horizon": scenario.horizon,
        "weights": {name: encode_matrix(scenario.weights[name]) for name in WEIGHT_NAMES[scenario.controller]},
    }
    for name in RECTANGLE_NAMES[scenario.controller]:
        box = scenario.rectangles[name]
        document[name] = {"lo": encode_vector(box.lo), "hi": encode_vector(box.hi)}
    target = "reference" if scenario.controller == ControllerChoices.CONTROLLER_SETPOINT else "target"
    document[target] = encode_vector(scenario.target)
    document["steps"] = scenario.steps
    state = scenario.initial_state
    document["initial_state"] = {name: encode_vector(getattr(state, name)) for name in ("xs", "xd", "u")}
    document["tolerances"] = dict(scenario.tolerances)

    overrides = dict(scenario.overrides)
    if scenario.controller == ControllerChoices.CONTROLLER_SETPOINT and scenario.certificates is not None:
        overrides["beta"] = scenario.certificates.beta
        overrides["phi"] = scenario.certificates.phi
    document["certificates"] = overrides
    document["certificate_mode"] = scenario.certificate_mode
    return document


def write_scenario(scenario, path):
    """Write the resolved scenario document; loading it reproduces every numeric field."""
    write_json(scenario_document(scenario), path)
    logger.info("COLLECT: wrote scenario %s", path)
