"""Tri-graph information propagation for drug-pair side-effect prediction."""

__version__ = "0.1.0"
