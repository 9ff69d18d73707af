"""Ensemble finite-element solver for Boussinesq natural convection with a shared per-step matrix."""

__version__ = "0.1.0"
