"""Equilibrium molecular dynamics and linearized generalized hydrodynamics
for the Volterra lattice."""

__version__ = "0.1.0"
