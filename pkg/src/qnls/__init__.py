"""Numerical laboratory for coupled Schrodinger systems with quadratic-type
nonlinearities: potential parsing and hypothesis certificates, ground states
and the sharp interpolation constant, conservative split-step evolution,
virial/averaging identity verification, and initial-data classification."""

__version__ = "0.1.0"
