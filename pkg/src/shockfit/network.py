"""Trainable function representations: plain MLP and a gated LSTM-like net.

Both architectures are evaluated through the channel-stack machinery in
:mod:`shockfit.autodiff`, so a single forward pass yields values together
with first/second input-derivative channels, all taped for reverse-mode
parameter gradients.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .exceptions import ConfigError

__all__ = [
    "MlpConfig",
    "GatedConfig",
    "ParamVector",
    "init_xavier_uniform",
    "forward_batch",
    "forward_values",
    "forward_mlp",
    "forward_gated",
    "count_dofs_mlp",
    "count_dofs_gated",
    "match_width",
    "save_checkpoint",
    "load_checkpoint",
]


@dataclass(frozen=True)
class MlpConfig:
    """Feed-forward network: affine layers with elementwise activations.

    ``widths`` holds one entry per hidden layer; the output layer is affine.
    """

    d_in: int
    d_out: int
    widths: tuple[int, ...]
    activation: str = "tanh"

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        if self.d_in < 1 or self.d_out < 1:
            raise ConfigError("d_in and d_out must be >= 1")
        if len(self.widths) < 1 or any(w < 1 for w in self.widths):
            raise ConfigError("need at least one hidden layer, all widths >= 1")
        if self.activation not in ("tanh", "sigmoid"):
            raise ConfigError(f"unsupported activation {self.activation!r}")

    @classmethod
    def uniform(cls, d_in: int, d_out: int, depth: int, width: int,
                activation: str = "tanh") -> "MlpConfig":
        return cls(d_in, d_out, (width,) * depth, activation)

    @property
    def depth(self) -> int:
        return len(self.widths)


@dataclass(frozen=True)
class GatedConfig:
    """Gated architecture with residual skip path and multiplicative gates.

    One input layer producing S^0 followed by ``depth`` gated blocks, i.e.
    depth+1 hidden layers of uniform ``width``.  Gates use sigmoid, the
    transforms use tanh.
    """

    d_in: int
    d_out: int
    depth: int
    width: int

    def __post_init__(self):
        if self.d_in < 1 or self.d_out < 1:
            raise ConfigError("d_in and d_out must be >= 1")
        if self.depth < 1 or self.width < 1:
            raise ConfigError("depth and width must be >= 1")


_GATES = ("z", "g", "r", "h")


def _mlp_layout(cfg: MlpConfig):
    entries = []
    offset = 0

    def push(name, shape):
        nonlocal offset
        entries.append((name, shape, offset))
        offset += int(np.prod(shape))

    prev = cfg.d_in
    for i, w in enumerate(cfg.widths):
        push(f"W{i}", (w, prev))
        push(f"b{i}", (w,))
        prev = w
    push("W_out", (cfg.d_out, prev))
    push("b_out", (cfg.d_out,))
    return tuple(entries), offset


def _gated_layout(cfg: GatedConfig):
    entries = []
    offset = 0

    def push(name, shape):
        nonlocal offset
        entries.append((name, shape, offset))
        offset += int(np.prod(shape))

    n, d = cfg.width, cfg.d_in
    push("W_in", (n, d))
    push("b_in", (n,))
    for layer in range(cfg.depth):
        for gate in _GATES:
            push(f"U_{gate}{layer}", (n, d))
            push(f"W_{gate}{layer}", (n, n))
            push(f"b_{gate}{layer}", (n,))
    push("W_out", (cfg.d_out, n))
    push("b_out", (cfg.d_out,))
    return tuple(entries), offset


def layout_of(config):
    if isinstance(config, MlpConfig):
        return _mlp_layout(config)
    if isinstance(config, GatedConfig):
        return _gated_layout(config)
    raise ConfigError(f"unknown network config type {type(config).__name__}")


class ParamVector:
    """Flat, ordered storage of all trainable weights and biases.

    The layout maps each tensor name to a contiguous slice; the flat length
    always equals the architecture's closed-form degree-of-freedom count.
    """

    def __init__(self, values: np.ndarray, layout):
        self.values = np.asarray(values, dtype=np.float64)
        self.layout = tuple(layout)
        total = sum(int(np.prod(shape)) for _, shape, _ in self.layout)
        if self.values.ndim != 1 or len(self.values) != total:
            raise ConfigError("parameter vector length does not match layout")
        self._index = {name: (shape, offset) for name, shape, offset in self.layout}

    def __len__(self):
        return len(self.values)

    def tensor(self, name: str) -> np.ndarray:
        shape, offset = self._index[name]
        return self.values[offset : offset + int(np.prod(shape))].reshape(shape)

    def copy(self) -> "ParamVector":
        return ParamVector(self.values.copy(), self.layout)

    @classmethod
    def zeros(cls, config) -> "ParamVector":
        layout, total = layout_of(config)
        return cls(np.zeros(total), layout)


def init_xavier_uniform(config, seed: int) -> ParamVector:
    """Xavier-uniform weights, zero biases, deterministic under ``seed``.

    Each weight matrix entry is drawn from U(-a, a) with
    a = sqrt(6 / (fan_in + fan_out)); bias vectors start at zero.
    """
    rng = np.random.default_rng(seed)
    layout, total = layout_of(config)
    values = np.zeros(total)
    for name, shape, offset in layout:
        if len(shape) == 2:
            fan_out, fan_in = shape
            a = math.sqrt(6.0 / (fan_in + fan_out))
            size = fan_out * fan_in
            values[offset : offset + size] = rng.uniform(-a, a, size=size)
    return ParamVector(values, layout)


# ---------------------------------------------------------------------------
# Forward evaluation
# ---------------------------------------------------------------------------


def _leaf_map(tape: ad.Tape, params: ParamVector):
    leaves = tape.param_leaves(params)
    return {entry[0]: leaf for entry, leaf in zip(params.layout, leaves)}


def _mlp_stack(cfg: MlpConfig, lv, x, track, check_finite):
    h = x
    for i in range(cfg.depth):
        z = ad.affine_stack(h, lv[f"W{i}"], lv[f"b{i}"], name=f"layer{i}")
        h = ad.activation_stack(z, cfg.activation, track, name=f"act{i}")
        if check_finite:
            ad.check_stack_finite(h, f"hidden layer {i}")
    out = ad.affine_stack(h, lv["W_out"], lv["b_out"], name="output")
    if check_finite:
        ad.check_stack_finite(out, "output layer")
    return out


def _gated_stack(cfg: GatedConfig, lv, zeta, track, check_finite):
    s = ad.activation_stack(
        ad.affine_stack(zeta, lv["W_in"], lv["b_in"], name="S0"), "tanh", track)
    if check_finite:
        ad.check_stack_finite(s, "gated layer S0")
    for layer in range(cfg.depth):
        def gate(kind, source, act):
            pre = ad.add(ad.affine_stack(source, lv[f"W_{kind}{layer}"],
                                         lv[f"b_{kind}{layer}"]),
                         ad.affine_stack(zeta, lv[f"U_{kind}{layer}"], None))
            return ad.activation_stack(pre, act, track, name=f"{kind}{layer}")

        z = gate("z", s, "sigmoid")
        g = gate("g", s, "sigmoid")
        r = gate("r", s, "tanh")
        h = gate("h", ad.hadamard_stack(s, r, track), "tanh")
        s = ad.add(ad.hadamard_stack(ad.one_minus_stack(g), h, track),
                   ad.hadamard_stack(z, s, track))
        if check_finite:
            ad.check_stack_finite(s, f"gated layer {layer}")
    out = ad.affine_stack(s, lv["W_out"], lv["b_out"], name="output")
    if check_finite:
        ad.check_stack_finite(out, "output layer")
    return out


def forward_batch(config, params: ParamVector, points: np.ndarray,
                  track: ad.TrackSpec, tape: ad.Tape | None = None,
                  check_finite: bool = False) -> list[ad.TangentBundle]:
    """Evaluate a network on a batch of points with derivative channels.

    Returns one TangentBundle per output component; channel arrays have shape
    ``(batch,)``.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != config.d_in:
        raise ConfigError(f"points must have shape (batch, {config.d_in})")
    expected = count_dofs(config)
    if len(params) != expected:
        raise ConfigError(f"parameter vector has {len(params)} entries, "
                          f"architecture needs {expected}")
    if tape is None:
        tape = ad.Tape()
    lv = _leaf_map(tape, params)
    x = ad.input_stack(tape, pts, track)
    if isinstance(config, MlpConfig):
        stack = _mlp_stack(config, lv, x, track, check_finite)
    else:
        stack = _gated_stack(config, lv, x, track, check_finite)
    return ad.bundles_from_stack(stack, track, config.d_out)


def forward_values(config, params: ParamVector, points: np.ndarray) -> np.ndarray:
    """Plain forward pass: output values of shape (batch, d_out), untaped."""
    bundles = forward_batch(config, params, points, ad.TrackSpec())
    return np.stack([b.value.value for b in bundles], axis=1)


def forward_mlp(config: MlpConfig, params, point, tracked,
                tape: ad.Tape | None = None):
    """Single-point MLP evaluation; see autodiff.eval_with_derivs."""
    if not isinstance(config, MlpConfig):
        raise ConfigError("forward_mlp expects an MlpConfig")
    return ad.eval_with_derivs(config, params, point, tracked, tape=tape)


def forward_gated(config: GatedConfig, params, point, tracked,
                  tape: ad.Tape | None = None):
    """Single-point gated-network evaluation; see autodiff.eval_with_derivs."""
    if not isinstance(config, GatedConfig):
        raise ConfigError("forward_gated expects a GatedConfig")
    return ad.eval_with_derivs(config, params, point, tracked, tape=tape)


# ---------------------------------------------------------------------------
# Degree-of-freedom accounting
# ---------------------------------------------------------------------------


def count_dofs_mlp(config: MlpConfig) -> int:
    """Closed-form parameter count N1(d_in+1) + d_out(N_L+1) + sum N_{l+1}(N_l+1)."""
    w = config.widths
    total = w[0] * (config.d_in + 1) + config.d_out * (w[-1] + 1)
    total += sum(w[i + 1] * (w[i] + 1) for i in range(len(w) - 1))
    return total


def count_dofs_gated(config: GatedConfig) -> int:
    """Closed-form 4LN^2 + (4L(d_in+1) + d_in + d_out + 1)N + d_out."""
    n, l = config.width, config.depth
    return (4 * l * n * n
            + (4 * l * (config.d_in + 1) + config.d_in + config.d_out + 1) * n
            + config.d_out)


def count_dofs(config) -> int:
    if isinstance(config, MlpConfig):
        return count_dofs_mlp(config)
    return count_dofs_gated(config)


def match_width(n_gated: int) -> int:
    """Plain-MLP width whose DoF count first reaches a gated net of width n.

    Evaluates ceil((-7 + sqrt(16 n^2 + 72 n + 49)) / 2) exactly in integer
    arithmetic (the radicand comes from equating the two DoF formulas at
    d_in=2, d_out=3).
    """
    if n_gated < 1:
        raise ConfigError("width must be >= 1")
    v = 16 * n_gated * n_gated + 72 * n_gated + 49
    # ceil((-7 + sqrt(v)) / 2) == (t - 6) // 2 for t the smallest integer
    # with t^2 >= v
    t = math.isqrt(v - 1) + 1
    return (t - 6) // 2


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

_MAGIC = b"#shockfit-checkpoint-v1\n"


def save_checkpoint(path, config, params: ParamVector, seed=None,
                    iteration: int = 0):
    """Write a checkpoint: JSON header line, then float64-LE parameters."""
    if isinstance(config, MlpConfig):
        header = {"kind": "mlp", "d_in": config.d_in, "d_out": config.d_out,
                  "L": config.depth, "widths": list(config.widths),
                  "activation": config.activation}
    else:
        header = {"kind": "gated", "d_in": config.d_in, "d_out": config.d_out,
                  "L": config.depth, "widths": [config.width] * (config.depth + 1),
                  "width": config.width, "activation": "tanh"}
    header["seed"] = seed
    header["iteration"] = int(iteration)
    header["n_params"] = len(params)
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        fh.write(params.values.astype("<f8").tobytes())


def load_checkpoint(path):
    """Read a checkpoint; returns (config, ParamVector, header dict)."""
    with open(path, "rb") as fh:
        magic = fh.readline()
        if magic != _MAGIC:
            raise ConfigError(f"{path} is not a shockfit checkpoint")
        header = json.loads(fh.readline().decode())
        raw = fh.read()
    if header["kind"] == "mlp":
        config = MlpConfig(header["d_in"], header["d_out"],
                           tuple(header["widths"]), header["activation"])
    elif header["kind"] == "gated":
        config = GatedConfig(header["d_in"], header["d_out"], header["L"],
                             header["width"])
    else:
        raise ConfigError(f"unknown architecture kind {header['kind']!r}")
    values = np.frombuffer(raw, dtype="<f8").astype(np.float64)
    if len(values) != header["n_params"]:
        raise ConfigError("checkpoint payload length mismatch")
    layout, total = layout_of(config)
    if total != len(values):
        raise ConfigError("checkpoint does not match architecture layout")
    return config, ParamVector(values.copy(), layout), header
