"""Stochastic optimization: SGD and Adam steps, step-decay learning rate,
stagewise viscosity annealing, and the training loop over resampled batches."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import network as networks
from . import problems as prob
from .exceptions import ConfigError, TrainingDivergedError

__all__ = [
    "AdamState",
    "LrSchedule",
    "AnnealSchedule",
    "TrainConfig",
    "sgd_step",
    "adam_step",
    "lr_at",
    "tau_at",
    "train",
    "write_history_csv",
    "HISTORY_COLUMNS",
]


@dataclass
class AdamState:
    """First/second moment accumulators with the standard bias correction."""

    m: np.ndarray
    v: np.ndarray
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, n_params: int, **kw) -> "AdamState":
        return cls(m=np.zeros(n_params), v=np.zeros(n_params), **kw)


@dataclass(frozen=True)
class LrSchedule:
    """initial * decay_factor ** floor(iteration / decay_every)."""

    initial: float = 1e-4
    decay_factor: float = 0.1
    decay_every: int = 25000

    def __post_init__(self):
        if self.initial <= 0 or not (0 < self.decay_factor <= 1):
            raise ConfigError("need initial > 0 and 0 < decay_factor <= 1")
        if self.decay_every < 1:
            raise ConfigError("decay_every must be >= 1")


# Stagewise factors for the annealed viscosity; the product over completed
# stages multiplies tau_smooth, ending near the smooth-run target 0.005.
ANNEAL_FACTORS = (1.0, 0.2, 0.9, 0.77, 0.714)


@dataclass(frozen=True)
class AnnealSchedule:
    """tau0(stage) = tau_smooth * prod(factors[: stage + 1]), clamped at the end.

    ``literal`` mode instead applies factors[stage] alone; it is kept for
    comparison and is not the default because it is non-monotone.
    """

    tau_smooth: float = 0.05
    stage_length: int = 12000
    factors: tuple[float, ...] = ANNEAL_FACTORS
    mode: str = "cumulative_product"

    def __post_init__(self):
        if self.tau_smooth <= 0 or any(f <= 0 for f in self.factors):
            raise ConfigError("tau_smooth and all factors must be positive")
        if self.mode not in ("cumulative_product", "literal"):
            raise ConfigError(f"unknown annealing mode {self.mode!r}")


def lr_at(schedule: LrSchedule, iteration: int) -> float:
    if iteration < 0:
        raise ConfigError("iteration must be >= 0")
    return schedule.initial * schedule.decay_factor ** (iteration // schedule.decay_every)


def tau_at(schedule: AnnealSchedule, iteration: int) -> float:
    if iteration < 0:
        raise ConfigError("iteration must be >= 0")
    stage = min(iteration // schedule.stage_length, len(schedule.factors) - 1)
    if schedule.mode == "literal":
        return schedule.tau_smooth * schedule.factors[stage]
    return schedule.tau_smooth * math.prod(schedule.factors[: stage + 1])


def sgd_step(params: networks.ParamVector, grad: np.ndarray,
             lr: float) -> networks.ParamVector:
    """params - lr * grad; aborts on non-finite gradient entries."""
    _check_grad(params, grad)
    return networks.ParamVector(params.values - lr * grad, params.layout)


def adam_step(state: AdamState, params: networks.ParamVector, grad: np.ndarray,
              lr: float) -> tuple[AdamState, networks.ParamVector]:
    """One bias-corrected Adam update; returns the advanced (state, params)."""
    _check_grad(params, grad)
    t = state.t + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    v = state.beta2 * state.v + (1.0 - state.beta2) * grad * grad
    m_hat = m / (1.0 - state.beta1**t)
    v_hat = v / (1.0 - state.beta2**t)
    new_values = params.values - lr * m_hat / (np.sqrt(v_hat) + state.eps)
    new_state = AdamState(m=m, v=v, t=t, beta1=state.beta1, beta2=state.beta2,
                          eps=state.eps)
    return new_state, networks.ParamVector(new_values, params.layout)


def _check_grad(params, grad):
    if len(grad) != len(params.values):
        raise ConfigError("gradient length does not match parameter vector")
    if not np.all(np.isfinite(grad)):
        bad = int(np.flatnonzero(~np.isfinite(grad))[0])
        raise TrainingDivergedError(f"non-finite gradient entry at index {bad}")


@dataclass
class TrainConfig:
    """Everything the training loop needs besides the problem and network."""

    iterations: int
    batch_counts: tuple[int, int, int] = (5000, 500, 500)
    lr: LrSchedule = field(default_factory=LrSchedule)
    optimizer: str = "adam"               # adam | sgd
    anneal: AnnealSchedule | None = None
    seed: int = 0
    checkpoint_every: int = 5000
    checkpoint_path: str | None = None
    record_every: int = 100
    chunk_size: int = 1250

    def __post_init__(self):
        if self.iterations < 0:
            raise ConfigError("iterations must be >= 0")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")


HISTORY_COLUMNS = ("iteration", "j_pde", "j_bc", "j_ic", "j_data", "j_reg",
                   "total", "lr", "tau")


def train(spec: prob.ProblemSpec, net, config: TrainConfig,
          params: networks.ParamVector | None = None,
          callback=None) -> tuple[networks.ParamVector, list[tuple]]:
    """Minimize the composite objective by resampled-batch gradient descent.

    Every iteration draws a fresh batch, evaluates the loss and its exact
    reverse-mode gradient, and applies one optimizer step with the scheduled
    learning rate (and annealed viscosity when configured).  Loss components
    are recorded every ``record_every`` iterations as HISTORY_COLUMNS rows.
    Deterministic under ``config.seed`` in single-threaded runs.

    Returns the final parameters and the recorded history.
    """
    if params is None:
        params = networks.init_xavier_uniform(net, config.seed)
    rng = np.random.default_rng(config.seed)
    state = AdamState.zeros(len(params)) if config.optimizer == "adam" else None
    history: list[tuple] = []

    def checkpoint(iteration):
        if config.checkpoint_path is not None:
            networks.save_checkpoint(config.checkpoint_path, net, params,
                                     seed=config.seed, iteration=iteration)

    for k in range(config.iterations):
        lr = lr_at(config.lr, k)
        tau_k = tau_at(config.anneal, k) if config.anneal is not None else None
        batch = prob.sample_batch(spec.domain, config.batch_counts, rng,
                                  supervision=spec.supervision)
        breakdown, grad = prob.loss_and_grad(spec, net, params, batch,
                                             tau_override=tau_k,
                                             chunk_size=config.chunk_size)
        if not math.isfinite(breakdown.total):
            checkpoint(k)
            raise TrainingDivergedError(
                f"loss became non-finite at iteration {k}; checkpoint dumped")
        if k % config.record_every == 0:
            row = (k, breakdown.j_pde, breakdown.j_bc, breakdown.j_ic,
                   breakdown.j_data, breakdown.j_reg, breakdown.total, lr,
                   tau_k if tau_k is not None else spec.tau)
            history.append(row)
            if callback is not None:
                callback(k, breakdown, params)
        if config.optimizer == "adam":
            state, params = adam_step(state, params, grad, lr)
        else:
            params = sgd_step(params, grad, lr)
        if config.checkpoint_every and (k + 1) % config.checkpoint_every == 0:
            checkpoint(k + 1)
    checkpoint(config.iterations)
    return params, history


def write_history_csv(path, history, header_comment: str | None = None):
    """Loss history as CSV with the HISTORY_COLUMNS header."""
    with open(path, "w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        writer = csv.writer(fh)
        writer.writerow(HISTORY_COLUMNS)
        for row in history:
            writer.writerow([row[0]] + [repr(float(v)) for v in row[1:]])
