"""Exceptions.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at
  http://www.apache.org/licenses/LICENSE-2.0
"""


class MpcException(Exception):
    """A failure occurred while building, certifying, solving or simulating a controller.

    The exception includes a reason "slug" from ``opom_mpc.choices.FailChoices`` as well as a humanized message.
    Validators attach every violation they found as ``details``.
    """

    def __init__(self, reason, message, **kwargs):
        """Exception Init."""
        super().__init__(kwargs)
        self.reason = reason
        self.message = message
        self.details = list(kwargs.get("details", []))
        self.trace = kwargs.get("trace")

    def __str__(self):
        """Exception __str__."""
        return f"{self.__class__.__name__}: {self.reason}: {self.message}"
