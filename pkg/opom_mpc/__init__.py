"""Package declaration for opom_mpc.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at
  http://www.apache.org/licenses/LICENSE-2.0
"""

__version__ = "1.0.0"


class MpcConfig:
    """Library configuration for the opom_mpc package."""

    name = "opom_mpc"
    verbose_name = "OPOM infinite-horizon MPC"
    version = __version__
    description = "Infinite-horizon and zone-control MPC over OPOM models with stability certificates."
    default_settings = {
        # linear algebra
        "rank_tol": 1e-10,
        # quadratic programming
        "qp_tol": 1e-9,
        "qp_max_iter": 500,
        "brute_force_resolution": 11,
        # controller solution validation
        "terminal_tol": 1e-8,
        "box_tol": 1e-9,
        "admissibility_tol": 1e-8,
        # certificates
        "phi_samples": 100000,
        "phi_safety": 0.9,
        "phi_seed": 0,
        "beta_margin": 0.1,
        "su_shift": 2.0,
        # trace analysis
        "monotone_tol": 1e-8,
        "identity_tol": 1e-9,
        "convergence_tol": 1e-6,
        "limit_tol": 1e-5,
        # serialization
        "csv_digits": 17,
        "logger_name": "opom_mpc",
    }


SETTINGS = dict(MpcConfig.default_settings)
