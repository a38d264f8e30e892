"""Deterministic federated-learning simulator with feature-alignment
backdoor attacks and robust-aggregation defenses."""

__version__ = "0.1.0"
