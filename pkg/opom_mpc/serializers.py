"""Serializers for matrices, closed-loop traces and certificate documents.

Documents are JSON. Floats are written with their shortest round-trip representation and
matrices as ``{"shape": [rows, cols], "data": [row-major values]}``, so reloading reproduces
every value exactly. Traces are CSV with ``%.17g`` numbers.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at
  http://www.apache.org/licenses/LICENSE-2.0
"""

import csv
import json
import logging

import numpy as np

from . import SETTINGS
from .certificates import CertificateBundle
from .choices import ControllerChoices
from .exceptions import MpcException
from .opom import output, plant_step
from .simulator import ClosedLoopTrace, StepRecord

logger = logging.getLogger(SETTINGS["logger_name"])

MATRIX_FIELDS = ("Qbar", "G", "Z", "S_hat", "S", "H", "Su")
VECTOR_FIELDS = ("u_r",)


def encode_matrix(matrix):
    """Return the document form of a 2-D array."""
    matrix = np.asarray(matrix, dtype=float)
    return {"shape": list(matrix.shape), "data": [float(value) for value in matrix.reshape(-1)]}


def decode_matrix(value, name):
    """Return a 2-D array from its document form or from a list of rows.

    Raises:
      MpcException("fail-config"):
        When the value is neither form or the data does not fill the shape
    """
    try:
        if isinstance(value, dict):
            rows, cols = (int(size) for size in value["shape"])
            return np.array(value["data"], dtype=float).reshape(rows, cols)
        matrix = np.array(value, dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise MpcException(reason="fail-config", message=f"{name}: not a matrix ({exc})")
    if matrix.ndim != 2:
        raise MpcException(reason="fail-config", message=f"{name}: expected a list of rows")
    return matrix


def encode_vector(vector):
    """Return a vector as a list of floats."""
    return [float(value) for value in np.asarray(vector, dtype=float).reshape(-1)]


def write_json(document, path):
    """Write ``document`` as indented JSON.

    Raises:
      MpcException("fail-io"):
        When the file cannot be written
    """
    try:
        with open(path, "w", encoding="utf-8") as handle:
            json.dump(document, handle, indent=2, allow_nan=False)
            handle.write("\n")
    except OSError as exc:
        raise MpcException(reason="fail-io", message=f"cannot write {path}: {exc}")


def read_json(path):
    """Return the parsed JSON document at ``path``.

    Raises:
      MpcException("fail-io"):
        When the file cannot be read
      MpcException("fail-config"):
        When the file is not valid JSON; the message names line and column
    """
    try:
        with open(path, "r", encoding="utf-8") as handle:
            return json.load(handle)
    except OSError as exc:
        raise MpcException(reason="fail-io", message=f"cannot read {path}: {exc}")
    except json.JSONDecodeError as exc:
        raise MpcException(
            reason="fail-config", message=f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}"
        )


def trace_header(controller):
    """Return the CSV column names for traces of ``controller``."""
    model = controller.model
    columns = ["k", "V_star", "kkt_residual"]
    columns += [f"y_{i}" for i in range(model.ny)]
    columns += [f"u_{i}" for i in range(model.nu)]
    columns += [f"du_{j}_{i}" for j in range(controller.spec.m) for i in range(model.nu)]
    if controller.kind == ControllerChoices.CONTROLLER_SETPOINT:
        columns += [f"delta_{i}" for i in range(model.ny)]
    else:
        columns += [f"y_sp_{i}" for i in range(model.ny)]
        columns += [f"delta_y_{i}" for i in range(model.ny)]
        columns += [f"delta_u_{i}" for i in range(model.nu)]
    return columns


def write_trace(trace, path, digits=SETTINGS["csv_digits"]):
    """Write one CSV row per record; ``u_*`` is the input applied at step k.

    Raises:
      MpcException("fail-io"):
        When the file cannot be written
    """
    controller = trace.controller
    fmt = f"{{:.{digits}g}}".format
    try:
        with open(path, "w", encoding="utf-8", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(trace_header(controller))
            for record in trace.records:
                values = [record.V_star, record.kkt_residual]
                values += list(record.y) + list(record.state.u + record.du0) + list(np.reshape(record.du, -1))
                for name in controller.slack_names:
                    values += list(record.slacks[name])
                writer.writerow([record.k] + [fmt(float(value)) for value in values])
    except OSError as exc:
        raise MpcException(reason="fail-io", message=f"cannot write {path}: {exc}")
    logger.info("COLLECT: wrote %s trace rows to %s", len(trace), path)


def read_trace(path, scenario):
    """Rebuild a trace from its CSV by replaying the recorded moves from the scenario initial state.

    Raises:
      MpcException("fail-io"):
        When the file cannot be read or its header does not fit the scenario
      MpcException("fail-state-mismatch"):
        When the recorded outputs or inputs do not follow from the replayed states
    """
    controller = scenario.build_controller()
    model = controller.model
    header = trace_header(controller)
    try:
        with open(path, "r", encoding="utf-8", newline="") as handle:
            rows = [row for row in csv.reader(handle) if row]
    except (OSError, UnicodeDecodeError, csv.Error) as exc:
        raise MpcException(reason="fail-io", message=f"cannot read {path}: {exc}")
    if not rows or rows[0] != header:
        raise MpcException(reason="fail-io", message=f"{path}: header does not match the scenario controller")

    trace = ClosedLoopTrace(controller=controller, initial_state=scenario.initial_state)
    state = scenario.initial_state
    for line, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise MpcException(
                reason="fail-io", message=f"{path}: row {line}: expected {len(header)} columns, got {len(row)}"
            )
        try:
            values = dict(zip(header, [int(row[0])] + [float(value) for value in row[1:]]))
        except ValueError as exc:
            raise MpcException(reason="fail-io", message=f"{path}: row {line}: {exc}")

        du = np.array([[values[f"du_{j}_{i}"] for i in range(model.nu)] for j in range(controller.spec.m)])
        slacks = {}
        for name in controller.slack_names:
            size = model.nu if name == "delta_u" else model.ny
            slacks[name] = np.array([values[f"{name}_{i}"] for i in range(size)])
        y = np.array([values[f"y_{i}"] for i in range(model.ny)])
        u = np.array([values[f"u_{i}"] for i in range(model.nu)])
        expected_y = output(model, state)
        if not np.allclose(y, expected_y, rtol=1e-12, atol=1e-12) or not np.allclose(
            u, state.u + du[0], rtol=1e-12, atol=1e-12
        ):
            raise MpcException(
                reason="fail-state-mismatch", message=f"{path}: row {line}: row does not follow from the moves"
            )

        trace.records.append(
            StepRecord(
                k=values["k"],
                state=state,
                du=du,
                slacks=slacks,
                y=expected_y,
                V_star=values["V_star"],
                kkt_residual=values["kkt_residual"],
            )
        )
        state = plant_step(model, state, du[0])
    return trace


def certificates_document(bundle):
    """Return the JSON document of a CertificateBundle (unset fields are null)."""
    document = {}
    for name, value in vars(bundle).items():
        if value is None:
            document[name] = None
        elif name in MATRIX_FIELDS:
            document[name] = encode_matrix(value)
        elif name in VECTOR_FIELDS:
            document[name] = encode_vector(value)
        elif isinstance(value, (bool, np.bool_)):
            document[name] = bool(value)
        elif isinstance(value, str):
            document[name] = value
        else:
            document[name] = float(value)
    return document


def write_certificates(bundle, path):
    """Write a certificate document."""
    write_json(certificates_document(bundle), path)


def read_certificates(path):
    """Reload a certificate document written by ``write_certificates``.

    Raises:
      MpcException("fail-config"):
        When a field is missing or malformed
    """
    document = read_json(path)
    values = {}
    try:
        for name, value in document.items():
            if value is None:
                values[name] = None
            elif name in MATRIX_FIELDS:
                values[name] = decode_matrix(value, name)
            elif name in VECTOR_FIELDS:
                values[name] = np.array(value, dtype=float)
            else:
                values[name] = value
        return CertificateBundle(**values)
    except (AttributeError, TypeError) as exc:
        raise MpcException(reason="fail-config", message=f"{path}: not a certificate document ({exc})")
