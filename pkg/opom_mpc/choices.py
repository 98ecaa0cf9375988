"""ChoiceSet classes for opom_mpc.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at
  http://www.apache.org/licenses/LICENSE-2.0
"""


class ChoiceSet:
    """Base class for a fixed set of (value, label) pairs."""

    CHOICES = ()

    @classmethod
    def values(cls):
        """Return the accepted values in declaration order."""
        return [value for value, _ in cls.CHOICES]


class QpStatusChoices(ChoiceSet):
    """Valid values for QpSolution "status"."""

    STATUS_OPTIMAL = "optimal"
    STATUS_INFEASIBLE = "infeasible"
    STATUS_NUMERICAL_FAILURE = "numerical-failure"

    CHOICES = (
        (STATUS_OPTIMAL, "optimal"),
        (STATUS_INFEASIBLE, "infeasible"),
        (STATUS_NUMERICAL_FAILURE, "numerical-failure"),
    )


class ControllerChoices(ChoiceSet):
    """Valid values for the scenario "controller" field."""

    CONTROLLER_SETPOINT = "setpoint"
    CONTROLLER_ZONE = "zone"

    CHOICES = (
        (CONTROLLER_SETPOINT, "setpoint"),
        (CONTROLLER_ZONE, "zone"),
    )


class FailChoices(ChoiceSet):
    """Valid values for MpcException "reason"."""

    FAIL_DIMENSION = "fail-dimension"
    FAIL_UNSTABLE = "fail-unstable"
    FAIL_DOMAIN = "fail-domain"
    FAIL_RANK = "fail-rank"
    FAIL_INFEASIBLE_REFERENCE = "fail-infeasible-reference"
    FAIL_SAMPLES = "fail-samples"
    FAIL_STATE_MISMATCH = "fail-state-mismatch"
    FAIL_NOT_APPLICABLE = "fail-not-applicable"
    FAIL_INFEASIBLE = "fail-infeasible"
    FAIL_NUMERICAL = "fail-numerical"
    FAIL_UNSUPPORTED = "fail-unsupported"
    FAIL_CONFIG = "fail-config"
    FAIL_IO = "fail-io"

    CHOICES = (
        (FAIL_DIMENSION, "fail-dimension"),
        (FAIL_UNSTABLE, "fail-unstable"),
        (FAIL_DOMAIN, "fail-domain"),
        (FAIL_RANK, "fail-rank"),
        (FAIL_INFEASIBLE_REFERENCE, "fail-infeasible-reference"),
        (FAIL_SAMPLES, "fail-samples"),
        (FAIL_STATE_MISMATCH, "fail-state-mismatch"),
        (FAIL_NOT_APPLICABLE, "fail-not-applicable"),
        (FAIL_INFEASIBLE, "fail-infeasible"),
        (FAIL_NUMERICAL, "fail-numerical"),
        (FAIL_UNSUPPORTED, "fail-unsupported"),
        (FAIL_CONFIG, "fail-config"),
        (FAIL_IO, "fail-io"),
    )
