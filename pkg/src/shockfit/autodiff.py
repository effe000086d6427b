"""Differentiation engine: taped reverse mode over forward derivative channels.

Every quantity evaluated through this module carries, besides its value, the
first and (optionally) second derivatives with respect to a chosen subset of
the network inputs.  Those channels are propagated forward by chain-rule
recurrences, and every elementary operation is recorded on a tape so that the
reverse pass can produce exact gradients of any scalar built from any channel
with respect to all trainable parameters.

Layout conventions
------------------
* Per-point scalars are arrays of shape ``(batch,)``.
* Layer activations travel as a single "channel stack" of shape
  ``(C, batch, width)`` where row 0 is the value and the remaining rows hold
  d/dx_i and d2/dx_i2 channels for the tracked inputs.  Stacking keeps the
  layer matmuls in one BLAS call.
* Mixed second derivatives are not represented; no residual in this package
  needs them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import NumericOverflowError, TapeUsageError

__all__ = [
    "Tape",
    "Var",
    "TangentBundle",
    "TrackSpec",
    "eval_with_derivs",
    "backward",
    "gradient_check",
    "GradCheckReport",
]


# ---------------------------------------------------------------------------
# Tape and nodes
# ---------------------------------------------------------------------------


class Tape:
    """Append-only record of elementary operations for one evaluation context.

    A tape is meant to live for a single loss evaluation (one optimizer
    iteration); build a fresh one per iteration so memory does not grow.
    Distinct tapes are fully independent.
    """

    def __init__(self):
        self.nodes: list[Var] = []
        self._param_leaves: dict[int, list["Var"]] = {}
        self._param_length: int = 0

    def __len__(self):
        return len(self.nodes)

    def _append(self, node: "Var"):
        self.nodes.append(node)

    def param_leaves(self, params) -> list["Var"]:
        """Register (once per tape) leaf variables for every parameter tensor.

        ``params`` must expose ``values`` (flat float64 array) and ``layout``
        (iterable of (name, shape, offset)).  Re-registering the same object
        returns the cached leaves.
        """
        key = id(params)
        if key in self._param_leaves:
            return self._param_leaves[key]
        if self._param_leaves:
            raise TapeUsageError("a tape differentiates one ParamVector at a time")
        leaves = []
        for name, shape, offset in params.layout:
            size = int(np.prod(shape))
            view = params.values[offset : offset + size].reshape(shape)
            leaf = Var(self, view, name=name)
            leaf._param_slot = (offset, size)
            leaves.append(leaf)
        self._param_leaves[key] = leaves
        self._param_length = len(params.values)
        return leaves

    def replay(self) -> bool:
        """Recompute every node from its parents; True iff bit-identical."""
        for node in self.nodes:
            if node._forward is None:
                continue
            if not np.array_equal(np.asarray(node._forward()), node.value):
                return False
        return True


class Var:
    """One taped value: a float64 array plus the rule to back-propagate it.

    Backward rules must return freshly allocated contribution arrays, or the
    incoming gradient object itself; the reverse pass detects the latter by
    identity and copies on write.
    """

    __slots__ = ("tape", "value", "parents", "_backward", "_forward", "grad",
                 "name", "_param_slot", "_grad_shared")

    def __init__(self, tape: Tape, value, parents=(), backward=None,
                 forward=None, name: str = ""):
        self.tape = tape
        self.value = np.asarray(value, dtype=np.float64)
        self.parents = parents
        self._backward = backward
        self._forward = forward
        self.grad = None
        self._grad_shared = False
        self.name = name
        self._param_slot = None
        tape._append(self)

    # -- conversion helpers -------------------------------------------------
    def __float__(self):
        v = np.asarray(self.value)
        if v.size != 1:
            raise TypeError(f"cannot convert shape {v.shape} Var to float")
        return float(v.reshape(-1)[0])

    def __array__(self, dtype=None):
        return np.asarray(self.value, dtype=dtype)

    def __repr__(self):
        return f"Var({self.name or 'op'}, shape={np.shape(self.value)})"

    # -- operator sugar (Var or plain float/ndarray constants) --------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __neg__(self):
        return scale(self, -1.0)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __pow__(self, n):
        if n == 2:
            return square(self)
        raise TapeUsageError("only **2 is taped; compose mul for other powers")


def _as_const(x):
    return np.asarray(x, dtype=np.float64)


def _same_tape(*vars_):
    tapes = {v.tape for v in vars_ if isinstance(v, Var)}
    if len(tapes) != 1:
        raise TapeUsageError("operands live on different tapes")
    return tapes.pop()


# ---------------------------------------------------------------------------
# Generic elementwise operations
# ---------------------------------------------------------------------------


def add(a, b):
    if isinstance(a, Var) and isinstance(b, Var):
        t = _same_tape(a, b)
        return Var(t, a.value + b.value, (a, b),
                   backward=lambda g: ((a, g), (b, g)),
                   forward=lambda: a.value + b.value, name="add")
    if isinstance(b, Var):
        a, b = b, a
    c = _as_const(b)
    return Var(a.tape, a.value + c, (a,),
               backward=lambda g: ((a, g),),
               forward=lambda: a.value + c, name="addc")


def sub(a, b):
    if isinstance(a, Var) and isinstance(b, Var):
        t = _same_tape(a, b)
        return Var(t, a.value - b.value, (a, b),
                   backward=lambda g: ((a, g), (b, -g)),
                   forward=lambda: a.value - b.value, name="sub")
    if isinstance(a, Var):
        c = _as_const(b)
        return Var(a.tape, a.value - c, (a,),
                   backward=lambda g: ((a, g),),
                   forward=lambda: a.value - c, name="subc")
    c = _as_const(a)
    return Var(b.tape, c - b.value, (b,),
               backward=lambda g: ((b, -g),),
               forward=lambda: c - b.value, name="csub")


def scale(a: Var, c: float):
    c = float(c)
    return Var(a.tape, a.value * c, (a,),
               backward=lambda g: ((a, g * c),),
               forward=lambda: a.value * c, name="scale")


def mul(a, b):
    if isinstance(a, Var) and isinstance(b, Var):
        t = _same_tape(a, b)
        return Var(t, a.value * b.value, (a, b),
                   backward=lambda g: ((a, g * b.value), (b, g * a.value)),
                   forward=lambda: a.value * b.value, name="mul")
    if isinstance(b, Var):
        a, b = b, a
    if np.isscalar(b) or getattr(b, "ndim", 1) == 0:
        return scale(a, float(b))
    c = _as_const(b)
    return Var(a.tape, a.value * c, (a,),
               backward=lambda g: ((a, g * c),),
               forward=lambda: a.value * c, name="mulc")


def div(a, b):
    if isinstance(a, Var) and isinstance(b, Var):
        t = _same_tape(a, b)
        out = Var(t, a.value / b.value, (a, b), name="div")
        out._backward = lambda g: ((a, g / b.value),
                                   (b, -g * out.value / b.value))
        out._forward = lambda: a.value / b.value
        return out
    if isinstance(a, Var):
        return mul(a, 1.0 / _as_const(b))
    c = _as_const(a)
    out = Var(b.tape, c / b.value, (b,), name="cdiv")
    out._backward = lambda g: ((b, -g * out.value / b.value),)
    out._forward = lambda: c / b.value
    return out


def square(a: Var):
    return Var(a.tape, a.value * a.value, (a,),
               backward=lambda g: ((a, 2.0 * g * a.value),),
               forward=lambda: a.value * a.value, name="square")


def tanh(a: Var):
    out = Var(a.tape, np.tanh(a.value), (a,), name="tanh")
    out._backward = lambda g: ((a, g * (1.0 - out.value * out.value)),)
    out._forward = lambda: np.tanh(a.value)
    return out


def sigmoid(a: Var):
    out = Var(a.tape, _sigmoid(a.value), (a,), name="sigmoid")
    out._backward = lambda g: ((a, g * out.value * (1.0 - out.value)),)
    out._forward = lambda: _sigmoid(a.value)
    return out


def exp(a: Var):
    out = Var(a.tape, np.exp(a.value), (a,), name="exp")
    out._backward = lambda g: ((a, g * out.value),)
    out._forward = lambda: np.exp(a.value)
    return out


def absolute(a: Var):
    return Var(a.tape, np.abs(a.value), (a,),
               backward=lambda g: ((a, g * np.sign(a.value)),),
               forward=lambda: np.abs(a.value), name="abs")


def huber(a: Var, delta: float = 1.0):
    """Huber penalty: quadratic core of half-width ``delta``, linear tails."""
    d = float(delta)

    def fwd():
        x = a.value
        return np.where(np.abs(x) <= d, 0.5 * x * x, d * (np.abs(x) - 0.5 * d))

    return Var(a.tape, fwd(), (a,),
               backward=lambda g: ((a, g * np.clip(a.value, -d, d)),),
               forward=fwd, name="huber")


def vsum(a: Var):
    shape = a.value.shape
    return Var(a.tape, np.sum(a.value), (a,),
               backward=lambda g: ((a, np.full(shape, float(g))),),
               forward=lambda: np.sum(a.value), name="sum")


def mean(a: Var):
    n = a.value.size
    shape = a.value.shape
    return Var(a.tape, np.mean(a.value), (a,),
               backward=lambda g: ((a, np.full(shape, float(g) / n)),),
               forward=lambda: np.mean(a.value), name="mean")


# ---------------------------------------------------------------------------
# Channel stacks (layer pipeline)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TrackSpec:
    """Which inputs carry derivative channels, and to which order.

    ``d1`` lists the tracked input indices (sorted); ``d2`` the subset that
    also carries a pure second-derivative channel.
    """

    d1: tuple[int, ...] = ()
    d2: tuple[int, ...] = ()

    def __post_init__(self):
        if not set(self.d2) <= set(self.d1):
            raise TapeUsageError("second-order inputs must also be tracked to first order")

    @classmethod
    def full(cls, tracked) -> "TrackSpec":
        idx = tuple(sorted(set(int(i) for i in tracked)))
        return cls(d1=idx, d2=idx)

    @property
    def n_channels(self) -> int:
        return 1 + len(self.d1) + len(self.d2)

    def d1_row(self, i: int) -> int:
        return 1 + self.d1.index(i)

    def d2_row(self, i: int) -> int:
        return 1 + len(self.d1) + self.d2.index(i)


def input_stack(tape: Tape, points: np.ndarray, track: TrackSpec) -> Var:
    """Constant leaf stack for raw input points of shape (batch, d_in)."""
    pts = np.ascontiguousarray(points, dtype=np.float64)
    if pts.ndim != 2:
        raise TapeUsageError("points must have shape (batch, d_in)")
    b, d_in = pts.shape
    for i in track.d1:
        if not 0 <= i < d_in:
            raise TapeUsageError(f"tracked input {i} outside input dimension {d_in}")
    stack = np.zeros((track.n_channels, b, d_in))
    stack[0] = pts
    for i in track.d1:
        stack[track.d1_row(i), :, i] = 1.0
    return Var(tape, stack, name="input")


def affine_stack(x: Var, w: Var, b: Var | None, name: str = ""):
    """Channel stack through an affine map: x @ w.T, bias on the value row."""
    t = _same_tape(*( (x, w) if b is None else (x, w, b) ))
    c, batch, n = x.value.shape
    m = w.value.shape[0]

    def fwd():
        out = (x.value.reshape(c * batch, n) @ w.value.T).reshape(c, batch, m)
        if b is not None:
            out[0] += b.value
        return out

    parents = (x, w) if b is None else (x, w, b)

    def bwd(g):
        gf = g.reshape(c * batch, m)
        gx = (gf @ w.value).reshape(c, batch, n)
        gw = gf.T @ x.value.reshape(c * batch, n)
        if b is None:
            return ((x, gx), (w, gw))
        return ((x, gx), (w, gw), (b, g[0].sum(axis=0)))

    return Var(t, fwd(), parents, backward=bwd, forward=fwd, name=name or "affine")


_ACT_TABLE = {}


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def _tanh_derivs(v):
    t = np.tanh(v)
    f1 = 1.0 - t * t
    f2 = -2.0 * t * f1
    return t, f1, f2


def _tanh_f3(t, f1, f2):
    return -2.0 * (f1 * f1 + t * f2)


def _sigmoid_derivs(v):
    s = _sigmoid(v)
    f1 = s * (1.0 - s)
    f2 = f1 * (1.0 - 2.0 * s)
    return s, f1, f2


def _sigmoid_f3(s, f1, f2):
    return f2 * (1.0 - 2.0 * s) - 2.0 * f1 * f1


_ACT_TABLE["tanh"] = (_tanh_derivs, _tanh_f3)
_ACT_TABLE["sigmoid"] = (_sigmoid_derivs, _sigmoid_f3)


def activation_stack(x: Var, kind: str, track: TrackSpec, name: str = ""):
    """Elementwise activation with chain-rule propagation of all channels.

    value' = f(v);  d1' = f'(v) d1;  d2' = f''(v) d1^2 + f'(v) d2.
    """
    derivs, third = _ACT_TABLE[kind]

    def compute():
        v = x.value[0]
        t, f1, f2 = derivs(v)
        out = np.empty_like(x.value)
        out[0] = t
        for i in track.d1:
            out[track.d1_row(i)] = f1 * x.value[track.d1_row(i)]
        for j in track.d2:
            pj = x.value[track.d1_row(j)]
            out[track.d2_row(j)] = f2 * pj * pj + f1 * x.value[track.d2_row(j)]
        return out, t, f1, f2

    value, t0, f1_0, f2_0 = compute()

    def bwd(g):
        t, f1, f2 = t0, f1_0, f2_0
        f3 = third(t, f1, f2)
        gx = np.empty_like(x.value)
        gv = g[0] * f1
        for i in track.d1:
            r = track.d1_row(i)
            pi = x.value[r]
            gv += g[r] * f2 * pi
            gx[r] = g[r] * f1
        for j in track.d2:
            r1, r2 = track.d1_row(j), track.d2_row(j)
            pj, qj = x.value[r1], x.value[r2]
            gv += g[r2] * (f3 * pj * pj + f2 * qj)
            gx[r1] += g[r2] * 2.0 * f2 * pj
            gx[r2] = g[r2] * f1
        gx[0] = gv
        return ((x, gx),)

    return Var(x.tape, value, (x,), backward=bwd,
               forward=lambda: compute()[0], name=name or kind)


def hadamard_stack(a: Var, b: Var, track: TrackSpec, name: str = ""):
    """Elementwise product of two channel stacks with product-rule channels."""
    t = _same_tape(a, b)

    def fwd():
        av, bv = a.value, b.value
        out = np.empty_like(av)
        out[0] = av[0] * bv[0]
        for i in track.d1:
            r = track.d1_row(i)
            out[r] = av[r] * bv[0] + av[0] * bv[r]
        for j in track.d2:
            r1, r2 = track.d1_row(j), track.d2_row(j)
            out[r2] = av[r2] * bv[0] + 2.0 * av[r1] * bv[r1] + av[0] * bv[r2]
        return out

    def bwd(g):
        av, bv = a.value, b.value
        ga = np.empty_like(av)
        gb = np.empty_like(bv)
        ga0 = g[0] * bv[0]
        gb0 = g[0] * av[0]
        for i in track.d1:
            r = track.d1_row(i)
            ga0 += g[r] * bv[r]
            gb0 += g[r] * av[r]
            ga[r] = g[r] * bv[0]
            gb[r] = g[r] * av[0]
        for j in track.d2:
            r1, r2 = track.d1_row(j), track.d2_row(j)
            ga0 += g[r2] * bv[r2]
            gb0 += g[r2] * av[r2]
            ga[r1] += g[r2] * 2.0 * bv[r1]
            gb[r1] += g[r2] * 2.0 * av[r1]
            ga[r2] = g[r2] * bv[0]
            gb[r2] = g[r2] * av[0]
        ga[0] = ga0
        gb[0] = gb0
        return ((a, ga), (b, gb))

    return Var(t, fwd(), (a, b), backward=bwd, forward=fwd, name=name or "had")


def one_minus_stack(a: Var):
    """1 - stack: value row flips around one, derivative rows negate."""

    def fwd():
        out = -a.value
        out[0] += 1.0
        return out

    return Var(a.tape, fwd(), (a,),
               backward=lambda g: ((a, -g),), forward=fwd, name="1minus")


def extract_rows(stack: Var, pairs: list[tuple[int, int]]):
    """Gather (channel, column) rows of a stack into a (K, batch) node."""
    c, batch, n = stack.value.shape
    if len(set(pairs)) != len(pairs):
        raise TapeUsageError("extract_rows pairs must be unique")
    ch = np.array([p[0] for p in pairs])
    col = np.array([p[1] for p in pairs])

    def fwd():
        return stack.value[ch, :, col]

    def bwd(g):
        gs = np.zeros((c, batch, n))
        gs[ch, :, col] = g
        return ((stack, gs),)

    return Var(stack.tape, fwd(), (stack,), backward=bwd, forward=fwd,
               name="extract")


def take_row(a: Var, k: int):
    shape = a.value.shape

    def bwd(g):
        gs = np.zeros(shape)
        gs[k] = g
        return ((a, gs),)

    return Var(a.tape, a.value[k], (a,), backward=bwd,
               forward=lambda: a.value[k], name="row")


# ---------------------------------------------------------------------------
# Tangent bundles (per-point value + derivative channels)
# ---------------------------------------------------------------------------


def _ch_is_zero(x):
    return isinstance(x, float) and x == 0.0


def _ch_add(x, y):
    if _ch_is_zero(x):
        return y
    if _ch_is_zero(y):
        return x
    if isinstance(x, float) and isinstance(y, float):
        return x + y
    return add(x, y)


def _ch_sub(x, y):
    if _ch_is_zero(y):
        return x
    if isinstance(x, float) and isinstance(y, float):
        return x - y
    if _ch_is_zero(x):
        return scale(y, -1.0)
    return sub(x, y)


def _ch_mul(x, y):
    if _ch_is_zero(x) or _ch_is_zero(y):
        return 0.0
    if isinstance(x, float) and isinstance(y, float):
        return x * y
    return mul(x, y)


def _ch_scale(x, c):
    if _ch_is_zero(x) or c == 0.0:
        return 0.0
    if isinstance(x, float):
        return x * c
    return scale(x, c)


@dataclass
class TangentBundle:
    """Value plus first/second derivatives w.r.t. the tracked inputs.

    Channels are taped variables (or exact-zero floats), so any scalar
    assembled from them remains differentiable with respect to parameters.
    Arithmetic follows the usual first/second-order chain rules; mixed second
    derivatives are never formed.
    """

    value: Var
    d1: dict = field(default_factory=dict)
    d2: dict = field(default_factory=dict)

    # numeric accessors -----------------------------------------------------
    def value_float(self) -> float:
        return float(self.value)

    def d1_float(self, i: int) -> float:
        v = self.d1[i]
        return float(v)

    def d2_float(self, i: int) -> float:
        v = self.d2[i]
        return float(v)

    def _keys_like(self, other):
        if isinstance(other, TangentBundle):
            if set(self.d1) != set(other.d1) or set(self.d2) != set(other.d2):
                raise TapeUsageError("bundles track different input sets")
        return self.d1.keys(), self.d2.keys()

    # arithmetic ------------------------------------------------------------
    def __add__(self, other):
        k1, k2 = self._keys_like(other)
        if isinstance(other, TangentBundle):
            return TangentBundle(
                add(self.value, other.value),
                {i: _ch_add(self.d1[i], other.d1[i]) for i in k1},
                {i: _ch_add(self.d2[i], other.d2[i]) for i in k2})
        return TangentBundle(add(self.value, float(other)),
                             dict(self.d1), dict(self.d2))

    __radd__ = __add__

    def __sub__(self, other):
        k1, k2 = self._keys_like(other)
        if isinstance(other, TangentBundle):
            return TangentBundle(
                sub(self.value, other.value),
                {i: _ch_sub(self.d1[i], other.d1[i]) for i in k1},
                {i: _ch_sub(self.d2[i], other.d2[i]) for i in k2})
        return TangentBundle(sub(self.value, float(other)),
                             dict(self.d1), dict(self.d2))

    def __rsub__(self, other):
        return (-self).__add__(other)

    def __neg__(self):
        return TangentBundle(scale(self.value, -1.0),
                             {i: _ch_scale(v, -1.0) for i, v in self.d1.items()},
                             {i: _ch_scale(v, -1.0) for i, v in self.d2.items()})

    def __mul__(self, other):
        k1, k2 = self._keys_like(other)
        if isinstance(other, TangentBundle):
            a, b = self, other
            val = mul(a.value, b.value)
            d1 = {i: _ch_add(_ch_mul(a.d1[i], b.value), _ch_mul(a.value, b.d1[i]))
                  for i in k1}
            d2 = {}
            for j in k2:
                d2[j] = _ch_add(
                    _ch_add(_ch_mul(a.d2[j], b.value), _ch_mul(a.value, b.d2[j])),
                    _ch_scale(_ch_mul(a.d1[j], b.d1[j]), 2.0))
            return TangentBundle(val, d1, d2)
        c = float(other)
        return TangentBundle(scale(self.value, c),
                             {i: _ch_scale(v, c) for i, v in self.d1.items()},
                             {i: _ch_scale(v, c) for i, v in self.d2.items()})

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, TangentBundle):
            k1, k2 = self._keys_like(other)
            a, b = self, other
            q = div(a.value, b.value)
            d1 = {i: div(_ch_sub(a.d1[i], _ch_mul(q, b.d1[i])), b.value) for i in k1}
            d2 = {}
            for j in k2:
                num = _ch_sub(_ch_sub(a.d2[j], _ch_scale(_ch_mul(d1[j], b.d1[j]), 2.0)),
                              _ch_mul(q, b.d2[j]))
                d2[j] = div(num, b.value)
            return TangentBundle(q, d1, d2)
        return self * (1.0 / float(other))

    def __rtruediv__(self, other):
        return TangentBundle.constant_like(self, float(other)) / self

    def square(self):
        return self * self

    def tanh(self):
        return self._elementwise("tanh")

    def sigmoid(self):
        return self._elementwise("sigmoid")

    def _elementwise(self, kind):
        t = tanh(self.value) if kind == "tanh" else sigmoid(self.value)
        if kind == "tanh":
            f1 = sub(1.0, square(t))
            f2 = scale(mul(t, f1), -2.0)
        else:
            f1 = mul(t, sub(1.0, t))
            f2 = mul(f1, sub(1.0, scale(t, 2.0)))
        d1 = {i: _ch_mul(f1, self.d1[i]) for i in self.d1}
        d2 = {}
        for j in self.d2:
            pj = self.d1[j]
            d2[j] = _ch_add(_ch_mul(f2, _ch_mul(pj, pj)), _ch_mul(f1, self.d2[j]))
        return TangentBundle(t, d1, d2)

    @staticmethod
    def constant_like(other: "TangentBundle", value) -> "TangentBundle":
        """A bundle with the given per-point value and zero derivatives."""
        tape = other.value.tape
        arr = np.broadcast_to(np.asarray(value, dtype=np.float64),
                              other.value.value.shape).copy()
        return TangentBundle(Var(tape, arr, name="const"),
                             {i: 0.0 for i in other.d1},
                             {i: 0.0 for i in other.d2})


def bundles_from_stack(stack: Var, track: TrackSpec, d_out: int) -> list[TangentBundle]:
    """Split a network output stack into one TangentBundle per output."""
    pairs = []
    for j in range(d_out):
        pairs.append((0, j))
        for i in track.d1:
            pairs.append((track.d1_row(i), j))
        for i in track.d2:
            pairs.append((track.d2_row(i), j))
    gathered = extract_rows(stack, pairs)
    per = 1 + len(track.d1) + len(track.d2)
    out = []
    for j in range(d_out):
        base = j * per
        val = take_row(gathered, base)
        d1 = {i: take_row(gathered, base + 1 + k) for k, i in enumerate(track.d1)}
        d2 = {i: take_row(gathered, base + 1 + len(track.d1) + k)
              for k, i in enumerate(track.d2)}
        out.append(TangentBundle(val, d1, d2))
    return out


# ---------------------------------------------------------------------------
# Reverse pass
# ---------------------------------------------------------------------------


def backward(scalar: Var) -> np.ndarray:
    """Exact reverse-mode gradient of a taped scalar w.r.t. all parameters.

    Parameters the scalar does not reach get gradient zero.  The result is a
    flat array in ParamVector layout order.
    """
    if not isinstance(scalar, Var):
        raise TapeUsageError("backward expects a taped scalar (Var)")
    tape = scalar.tape
    if scalar.value.size != 1:
        raise TapeUsageError("backward expects a scalar, got shape "
                             f"{scalar.value.shape}")
    if not tape._param_leaves:
        raise TapeUsageError("no parameters registered on this tape")
    for node in tape.nodes:
        node.grad = None
        node._grad_shared = False
    scalar.grad = np.ones_like(scalar.value)
    for node in reversed(tape.nodes):
        if node.grad is None or node._backward is None:
            continue
        g = node.grad
        for parent, contrib in node._backward(g):
            if parent.grad is None:
                # adopt fresh contributions; share (copy-on-write) when a rule
                # hands back the upstream gradient itself
                parent.grad = contrib
                parent._grad_shared = contrib is g
            elif parent._grad_shared:
                parent.grad = parent.grad + contrib
                parent._grad_shared = False
            else:
                parent.grad += contrib
    flat = np.zeros(tape._param_length)
    for leaves in tape._param_leaves.values():
        for leaf in leaves:
            if leaf.grad is not None:
                offset, size = leaf._param_slot
                flat[offset : offset + size] = leaf.grad.reshape(-1)
    return flat


# ---------------------------------------------------------------------------
# Public evaluation and checking entry points
# ---------------------------------------------------------------------------


def eval_with_derivs(net, params, point, tracked, tape: Tape | None = None,
                     check_finite: bool = True) -> list[TangentBundle]:
    """Evaluate a network at one input point with derivative channels.

    Returns one TangentBundle per network output, holding the value and the
    first and second derivative with respect to every index in ``tracked``.
    All channels are recorded on the tape, so a scalar assembled from them can
    be pushed through :func:`backward`.
    """
    from . import network as _network

    pts = np.asarray(point, dtype=np.float64).reshape(1, -1)
    bundles = _network.forward_batch(
        net, params, pts, TrackSpec.full(tracked), tape=tape,
        check_finite=check_finite)
    return bundles


def grad_of(scalar: Var) -> np.ndarray:
    return backward(scalar)


@dataclass
class GradCheckReport:
    """Outcome of a reverse-vs-central-difference comparison."""

    max_rel_err: float
    worst_index: int
    tol: float
    rel_errors: np.ndarray

    @property
    def passed(self) -> bool:
        return bool(self.max_rel_err < self.tol)


def gradient_check(net, params, lossfn, tol: float = 1e-6,
                   step: float = 1e-5) -> GradCheckReport:
    """Compare the reverse gradient of ``lossfn`` against central differences.

    ``lossfn(params, tape)`` must return a taped scalar and be deterministic
    for a fixed sample set.  Per-parameter deviations are normalized by the
    largest gradient magnitude, which keeps the comparison meaningful for
    parameters whose gradient is at roundoff scale.  Report-only: never raises
    on failure.
    """
    tape = Tape()
    scalar = lossfn(params, tape)
    g_ad = backward(scalar)

    g_fd = np.zeros_like(g_ad)
    values = params.values
    for k in range(len(values)):
        orig = values[k]
        values[k] = orig + step
        lp = float(lossfn(params, Tape()).value)
        values[k] = orig - step
        lm = float(lossfn(params, Tape()).value)
        values[k] = orig
        g_fd[k] = (lp - lm) / (2.0 * step)

    scale_ = max(np.max(np.abs(g_ad)), np.max(np.abs(g_fd)), 1e-300)
    rel = np.abs(g_ad - g_fd) / scale_
    worst = int(np.argmax(rel))
    return GradCheckReport(max_rel_err=float(rel[worst]), worst_index=worst,
                           tol=tol, rel_errors=rel)


def check_stack_finite(stack: Var, where: str):
    if not np.all(np.isfinite(stack.value)):
        raise NumericOverflowError(f"non-finite value in {where}")
