"""Minimizing-movement and finite-difference solvers for sticky diffusion."""
from .domain import DomainKind, DomainSpec, Discretization, build_discretization, chord_vs_intrinsic_gap
from .measure import (DecomposedMeasure, FunctionalReport, entropy, fisher, trace_gap, dissipation,
                      tv_distance, rel_entropy_stationary, ckp_check, functional_report)

__version__ = "0.1.0"
