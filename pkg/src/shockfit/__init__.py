"""shockfit: residual-minimizing neural PDE solvers for shock problems,
plus the exact-Riemann / finite-volume reference stack used to score them."""

from . import autodiff, exceptions, fvm, harness, network, optimizer, problems, riemann
from .network import GatedConfig, MlpConfig, ParamVector

__all__ = [
    "autodiff",
    "exceptions",
    "fvm",
    "harness",
    "network",
    "optimizer",
    "problems",
    "riemann",
    "MlpConfig",
    "GatedConfig",
    "ParamVector",
]

__version__ = "0.1.0"
