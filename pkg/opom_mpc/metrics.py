"""Prometheus metrics for QP solves, closed-loop steps and trace analysis.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at
  http://www.apache.org/licenses/LICENSE-2.0
"""
from prometheus_client import Counter, Summary

qp_results_counter = Counter(
    name="opom_mpc_qp_results_total", documentation="Count of QP solves by final status", labelnames=("status",)
)

analysis_checks_counter = Counter(
    name="opom_mpc_analysis_checks_total",
    documentation="Count of trace analyzer checks by outcome",
    labelnames=("check", "result"),
)

STEP_TIME = Summary("opom_mpc_closed_loop_step_seconds", "Time spent solving one receding-horizon step")
