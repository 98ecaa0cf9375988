"""Tasks for use with Invoke.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at
  http://www.apache.org/licenses/LICENSE-2.0
Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
"""

import os
from invoke import task

PACKAGE = "opom_mpc"
SCENARIOS = "docs/scenarios"
# Prefix for every command, e.g. "poetry run" when the virtualenv is not active
RUNNER = os.getenv("OPOM_MPC_RUNNER", "")


def run(context, command, **kwargs):
    """Run ``command`` through the configured runner."""
    return context.run(f"{RUNNER} {command}".strip(), **kwargs)


# ------------------------------------------------------------------------------
# SCENARIOS
# ------------------------------------------------------------------------------
@task
def simulate(context, scenario=f"{SCENARIOS}/setpoint_scalar.json", out="", steps=0):
    """Run the closed loop of a scenario.

    Args:
        context (obj): Used to run specific commands
        scenario (str): Scenario document to simulate
        out (str): Trace CSV to write
        steps (int): Override of the scenario step count
    """
    command = f"opom-mpc simulate {scenario}"
    if out:
        command += f" --out {out}"
    if steps:
        command += f" --steps {steps}"
    run(context, command, pty=True)


@task
def certify(context, scenario=f"{SCENARIOS}/setpoint_scalar.json"):
    """Compute and check the certificates of a scenario.

    Args:
        context (obj): Used to run specific commands
        scenario (str): Scenario document to certify
    """
    run(context, f"opom-mpc certify {scenario}", pty=True)


@task
def qp_verify(context, instances=500, seed=0):
    """Compare the QP solver against the brute-force oracle.

    Args:
        context (obj): Used to run specific commands
        instances (int): Number of random programs
        seed (int): Random seed
    """
    run(context, f"opom-mpc qp-verify --instances {instances} --seed {seed}", pty=True)


# ------------------------------------------------------------------------------
# TESTS / LINTING
# ------------------------------------------------------------------------------
@task
def unittest(context, label=""):
    """Run the unit tests of the package.

    Args:
        context (obj): Used to run specific commands
        label (str): Dotted test module, class or method to run instead of the whole suite
    """
    if label:
        run(context, f"python -m unittest {label}", pty=True)
    else:
        run(context, f"python -m unittest discover --start-directory {PACKAGE}/tests --top-level-directory .", pty=True)


@task
def pylint(context):
    """Run pylint code analysis.

    Args:
        context (obj): Used to run specific commands
    """
    run(context, f"pylint {PACKAGE} tasks.py", pty=True)


@task
def black(context):
    """Run black to check that Python files adhere to its style standards.

    Args:
        context (obj): Used to run specific commands
    """
    run(context, "black --check --diff .", pty=True)


@task
def blacken(context):
    """Run black to format Python files to adhere to its style standards.

    Args:
        context (obj): Used to run specific commands
    """
    run(context, "black .", pty=True)


@task
def pydocstyle(context):
    """Run pydocstyle to validate docstring formatting adheres to NTC defined standards.

    Args:
        context (obj): Used to run specific commands
    """
    run(context, f"pydocstyle {PACKAGE}", pty=True)


@task
def flake8(context):
    """Run flake8 on the package and the task file.

    Args:
        context (obj): Used to run specific commands
    """
    run(context, f"flake8 --max-line-length 120 {PACKAGE} tasks.py", pty=True)


@task
def bandit(context):
    """Run bandit to validate basic static code security analysis.

    Args:
        context (obj): Used to run specific commands
    """
    run(context, f"bandit --recursive {PACKAGE} --exclude {PACKAGE}/tests", pty=True)


@task
def tests(context):
    """Run all tests for this package.

    Args:
        context (obj): Used to run specific commands
    """
    # Sorted loosely from fastest to slowest
    print("Running black...")
    black(context)
    print("Running bandit...")
    bandit(context)
    print("Running pydocstyle...")
    pydocstyle(context)
    print("Running flake8...")
    flake8(context)
    # print("Running pylint...")
    # pylint(context)
    print("Running unit tests...")
    unittest(context)
    print("All tests have passed!")
