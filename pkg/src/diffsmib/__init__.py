"""Differentiable modeling benchmark for the SMIB power system.

Implements three paradigms — physics-informed networks, neural ODEs, and
differentiable programming through an ODE solver — for trajectory
prediction, inertia/damping identification, and LQR control synthesis.
"""

__version__ = "0.1.0"
