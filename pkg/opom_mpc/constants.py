"""Constants for the opom_mpc scenario documents."""

from .choices import ControllerChoices

SCENARIO_KEYS = (
    "controller",
    "model",
    "horizon",
    "weights",
    "U",
    "dU",
    "Y",
    "reference",
    "target",
    "steps",
    "initial_state",
    "tolerances",
    "certificates",
    "certificate_mode",
)

WEIGHT_NAMES = {
    ControllerChoices.CONTROLLER_SETPOINT: ("Q", "R", "S"),
    ControllerChoices.CONTROLLER_ZONE: ("Qy", "Qu", "R", "Sy", "Su"),
}

# Weights that may be given as "auto" and are then taken from the certificates
AUTO_WEIGHTS = {
    ControllerChoices.CONTROLLER_SETPOINT: "S",
    ControllerChoices.CONTROLLER_ZONE: "Su",
}

RECTANGLE_NAMES = {
    ControllerChoices.CONTROLLER_SETPOINT: ("U", "dU"),
    ControllerChoices.CONTROLLER_ZONE: ("U", "dU", "Y"),
}

MODEL_MATRICES = ("F", "D0", "Dd", "Psi")

TOLERANCE_KEYS = ("monotone_tol", "convergence_tol", "limit_tol", "bound_tol", "target_tol")

CERTIFICATE_KEYS = {
    ControllerChoices.CONTROLLER_SETPOINT: ("beta", "phi", "margin", "n_samples", "safety", "seed"),
    ControllerChoices.CONTROLLER_ZONE: ("su_shift",),
}

# Certificate overrides that must be integers, with their smallest allowed value
INTEGER_CERTIFICATE_KEYS = {"n_samples": 1, "seed": 0}

DEFAULT_STEPS = 100
