"""Federated cache telemetry: traces, simulation, workloads and forecasting."""

__version__ = "0.1.0"
