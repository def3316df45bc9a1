"""Delayed Poissonian mean-field dynamics solved through a time change.

The public entry points are :func:`solve_dynamics` for the mean-field
solution across blowups, the density and audit helpers in
:mod:`dpmf.density`, and the particle simulator in :mod:`dpmf.particle`.
"""
__version__ = "0.1.0"

from .blowup import BlowupEvent, Dynamics, solve_dynamics
from .core import Atom, GriddedDensity, GridSpec, InitialCondition, ModelParams, build_initial
from .density import conservation_audit, duhamel_density, pull_back
from .kernels import fp_cdf, fp_pdf, fp_pdf_dt, heat_kernel

__all__ = [
    "Atom", "BlowupEvent", "Dynamics", "GridSpec", "GriddedDensity", "InitialCondition",
    "ModelParams", "build_initial", "conservation_audit", "duhamel_density", "fp_cdf", "fp_pdf",
    "fp_pdf_dt", "heat_kernel", "pull_back", "solve_dynamics",
]
