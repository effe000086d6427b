"""Reference finite-volume solvers and the synthetic experiment generator."""

from . import dataset, euler, mhd, reactions
from .euler import Grid1D, rusanov_flux, solve_euler, step_first_order, step_muscl
from .reactions import ReactionParams, brusselator_source, well_mixed_reactor

__all__ = [
    "dataset",
    "euler",
    "mhd",
    "reactions",
    "Grid1D",
    "rusanov_flux",
    "solve_euler",
    "step_first_order",
    "step_muscl",
    "ReactionParams",
    "brusselator_source",
    "well_mixed_reactor",
]
