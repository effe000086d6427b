"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid or inconsistent configuration (bad keys, dimension mismatch)."""


class NumericOverflowError(FloatingPointError):
    """Non-finite value produced during evaluation; message names the site."""


class TapeUsageError(RuntimeError):
    """A tape/graph operation was used outside its contract."""


class VacuumError(ValueError):
    """Riemann data admits no positive star pressure (vacuum generation)."""


class PositivityError(ValueError):
    """A finite-volume state lost positive density or pressure."""


class StepSizeError(ValueError):
    """Requested time step violates the stability (CFL/diffusion) bound."""


class TrainingDivergedError(RuntimeError):
    """Training loss became non-finite; a checkpoint was dumped before abort."""
