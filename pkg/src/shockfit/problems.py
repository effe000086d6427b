"""PDE systems as residual operators over sampled space-time(-parameter) points.

The compressible-flow residuals are assembled in primitive variables: the
network outputs (rho, u, p) and the conservation-form residuals are built by
chain rule from the primitive derivative channels.  The composite objective
sums the interior residual penalty, Dirichlet boundary and initial mismatches,
optional data supervision on (rho, rho*u, E), and optional L2 regularization
of learned source outputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import network as networks
from .autodiff import TangentBundle
from .exceptions import ConfigError

__all__ = [
    "DomainSpec",
    "ProblemSpec",
    "Batch",
    "LossBreakdown",
    "DataSupervision",
    "EnrichmentSpec",
    "euler_residual",
    "ns_residual",
    "enriched_residual",
    "sample_batch",
    "loss",
    "loss_and_grad",
    "sod_problem",
    "enriched_model_problem",
]

_IX, _IT = 0, 1          # input layout: (x, t, optional parameter axes)
_RHO_GUARD = 1e-6        # keeps 1/rho bounded for transient network states

# Sod tube data: conserved (rho, rho*u, E) as given; primitives follow from
# p = (gamma - 1) (E - (rho u)^2 / (2 rho)) so the pressure tracks gamma on
# parameter-scan runs.
SOD_LEFT = (1.0, 0.0, 1.5)
SOD_RIGHT = (0.125, 0.0, 0.15)
SOD_GAMMA = 5.0 / 3.0


@dataclass(frozen=True)
class DomainSpec:
    """Space-time(-parameter) box the losses sample over."""

    x_range: tuple[float, float]
    t_range: tuple[float, float]
    param_axes: tuple[tuple[str, float, float], ...] = ()

    def __post_init__(self):
        if not self.x_range[0] < self.x_range[1]:
            raise ConfigError("x_range must be increasing")
        if not (self.t_range[0] == 0.0 and self.t_range[1] > 0.0):
            raise ConfigError("t_range must be [0, T] with T > 0")
        for name, lo, hi in self.param_axes:
            if not lo < hi:
                raise ConfigError(f"parameter axis {name!r} must have lo < hi")

    @property
    def d_in(self) -> int:
        return 2 + len(self.param_axes)

    def axis_column(self, name: str) -> int:
        for k, (axis, _, _) in enumerate(self.param_axes):
            if axis == name:
                return 2 + k
        raise ConfigError(f"no parameter axis named {name!r}")


@dataclass
class DataSupervision:
    """Measured field data on support points, weighted into the objective.

    ``targets`` columns are (rho, rho*u, E).  ``n_batch`` support points are
    drawn per iteration; the data term is always a mean square error.
    """

    points: np.ndarray
    targets: np.ndarray
    weight: float = 1.0
    n_batch: int = 1024
    grid_shape: tuple[int, int] | None = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64)
        self.targets = np.asarray(self.targets, dtype=np.float64)
        if self.points.ndim != 2 or self.points.shape[1] != 2:
            raise ConfigError("supervision points must be (N, 2) in (x, t)")
        if self.targets.shape != (len(self.points), 3):
            raise ConfigError("supervision targets must be (N, 3)")
        if not np.all(np.isfinite(self.targets)):
            raise ConfigError("supervision targets contain non-finite values")


@dataclass(frozen=True)
class EnrichmentSpec:
    """Learned source terms f_i appended to the network outputs."""

    count: int = 3
    reg_weights: tuple[float, ...] = (1e-4, 1e-4, 1e-4)

    def __post_init__(self):
        if len(self.reg_weights) != self.count:
            raise ConfigError("need one regularization weight per source")
        if any(w < 0 for w in self.reg_weights):
            raise ConfigError("regularization weights must be >= 0")


@dataclass
class ProblemSpec:
    """A PDE system plus everything the losses need to sample and score it."""

    kind: str                              # euler | navier_stokes | enriched_euler | custom
    domain: DomainSpec
    gamma: float | str = SOD_GAMMA         # number, or the name of a parameter axis
    tau: float = 0.0
    kappa: float = 0.0
    left_state: tuple[float, float, float] = SOD_LEFT    # conserved (rho, rho u, E)
    right_state: tuple[float, float, float] = SOD_RIGHT
    loss_form: str = "mse"                 # mse | huber
    supervision: DataSupervision | None = None
    enrichment: EnrichmentSpec | None = None
    # hooks for kind == "custom" (toy problems)
    n_unknowns: int = 3
    residual_fn: object = None
    ic_fn: object = None
    bc_fn: object = None
    custom_needs_d2: bool = False

    def __post_init__(self):
        if self.kind not in ("euler", "navier_stokes", "enriched_euler", "custom"):
            raise ConfigError(f"unknown problem kind {self.kind!r}")
        if isinstance(self.gamma, float) and self.gamma <= 1.0:
            raise ConfigError("gamma must exceed 1")
        if self.tau < 0 or self.kappa < 0:
            raise ConfigError("tau and kappa must be >= 0")
        if self.kind == "enriched_euler" and self.enrichment is None:
            raise ConfigError("enriched problems need an EnrichmentSpec")
        if self.kind == "custom":
            if self.residual_fn is None or self.ic_fn is None or self.bc_fn is None:
                raise ConfigError("custom problems need residual_fn, ic_fn, bc_fn")
            return
        for state in (self.left_state, self.right_state):
            rho, mom, e = state
            if rho <= 0 or e - mom * mom / (2 * rho) <= 0:
                raise ConfigError("boundary states need positive density and pressure")

    @property
    def d_out(self) -> int:
        return self.n_unknowns + (self.enrichment.count if self.enrichment else 0)

    def gamma_at(self, points: np.ndarray) -> np.ndarray | float:
        if isinstance(self.gamma, str):
            return points[:, self.domain.axis_column(self.gamma)]
        return float(self.gamma)

    def needs_d2(self, tau: float) -> bool:
        if self.kind == "custom":
            return self.custom_needs_d2
        return tau > 0.0 or self.kappa > 0.0 or self.kind == "enriched_euler"


@dataclass
class Batch:
    """One iteration's Monte Carlo sample of the loss domains."""

    interior: np.ndarray
    boundary: np.ndarray
    initial: np.ndarray
    data_idx: np.ndarray | None = None


@dataclass
class LossBreakdown:
    """Objective components; ``total`` is their plain (weight-1) sum."""

    j_pde: float
    j_bc: float
    j_ic: float
    j_data: float
    j_reg: float
    total: float
    total_var: ad.Var | None = field(default=None, repr=False)
    diagnostics: dict = field(default_factory=dict, repr=False)


# ---------------------------------------------------------------------------
# Residual operators
# ---------------------------------------------------------------------------


def _energy(rho, u, p, gamma):
    """E = p/(gamma-1) + rho u^2 / 2 for scalar or bundle-valued gamma."""
    kinetic = 0.5 * (rho * u * u)
    if isinstance(gamma, TangentBundle):
        return p / (gamma - 1.0) + kinetic
    return p * (1.0 / (gamma - 1.0)) + kinetic


def euler_residual(bundles, gamma):
    """Conservation residuals d_t U + d_x F(U) from primitive bundles.

    ``bundles`` are the (rho, u, p) TangentBundles with d1 channels for
    x (index 0) and t (index 1); gamma is a float or a零-derivative bundle.
    """
    rho, u, p = bundles
    m = rho * u
    e = _energy(rho, u, p, gamma)
    f_mom = m * u + p
    f_en = u * (p + e)
    r_mass = ad.add(rho.d1[_IT], m.d1[_IX])
    r_mom = ad.add(m.d1[_IT], f_mom.d1[_IX])
    r_en = ad.add(e.d1[_IT], f_en.d1[_IX])
    return [r_mass, r_mom, r_en]


def _viscous_terms(rho, u, tau):
    """d_x of (rho tau u_x) and of (rho tau u u_x), expanded by product rule."""
    rx, ux, uxx = rho.d1[_IX], u.d1[_IX], u.d2[_IX]
    mom = ad.scale(ad.add(ad.mul(rx, ux), ad.mul(rho.value, uxx)), tau)
    # d_x(rho u u_x) = rho_x u u_x + rho u_x^2 + rho u u_xx
    en = ad.scale(
        ad.add(ad.add(ad.mul(ad.mul(rx, u.value), ux),
                      ad.mul(rho.value, ad.square(ux))),
               ad.mul(ad.mul(rho.value, u.value), uxx)), tau)
    return mom, en


def ns_residual(bundles, gamma, tau):
    """Dissipative system: Euler minus d_x G with G = (0, rho tau u_x, rho tau u u_x)."""
    res = euler_residual(bundles, gamma)
    if tau == 0.0:
        return res
    rho, u, _ = bundles
    mom_visc, en_visc = _viscous_terms(rho, u, tau)
    res[1] = ad.sub(res[1], mom_visc)
    res[2] = ad.sub(res[2], en_visc)
    return res


def temperature_bundle(rho, p):
    """T = p/rho with a guarded reciprocal so transient rho ~ 0 stays finite."""
    denom = rho * rho + _RHO_GUARD * _RHO_GUARD
    return (p * rho) / denom


def enriched_residual(bundles, gamma, tau, kappa, sources):
    """Model system with viscosity, heat conduction, and learned sources f_i.

    Returns the (mass, momentum, energy) residuals minus the f_i values; with
    f = 0 and kappa = 0 this is exactly the dissipative residual.
    """
    res = ns_residual(bundles, gamma, tau)
    if kappa != 0.0:
        rho, u, p = bundles
        t_bundle = temperature_bundle(rho, p)
        res[2] = ad.sub(res[2], ad.scale(t_bundle.d2[_IX], kappa))
    for i, f in enumerate(sources):
        value = f.value if isinstance(f, TangentBundle) else f
        res[i] = ad.sub(res[i], value)
    return res


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------


def _uniform_points(domain: DomainSpec, n: int, rng, *, t_zero=False,
                    boundary=False) -> np.ndarray:
    pts = np.empty((n, domain.d_in))
    if boundary:
        half = n // 2
        pts[:half, 0] = domain.x_range[0]
        pts[half:, 0] = domain.x_range[1]
    else:
        pts[:, 0] = rng.uniform(*domain.x_range, size=n)
    pts[:, 1] = 0.0 if t_zero else rng.uniform(*domain.t_range, size=n)
    for k, (_, lo, hi) in enumerate(domain.param_axes):
        pts[:, 2 + k] = rng.uniform(lo, hi, size=n)
    return pts


def sample_batch(domain: DomainSpec, counts, rng,
                 supervision: DataSupervision | None = None) -> Batch:
    """Draw a fresh uniform batch: interior, boundary (split between the two
    ends), and initial points; plus supervision support indices if present."""
    n_pde, n_bc, n_ic = (int(c) for c in counts)
    if min(n_pde, n_bc, n_ic) <= 0:
        raise ConfigError("batch counts must be positive")
    interior = _uniform_points(domain, n_pde, rng)
    boundary = _uniform_points(domain, n_bc, rng, boundary=True)
    initial = _uniform_points(domain, n_ic, rng, t_zero=True)
    data_idx = None
    if supervision is not None:
        n_data = min(supervision.n_batch, len(supervision.points))
        data_idx = rng.choice(len(supervision.points), size=n_data, replace=False)
    return Batch(interior=interior, boundary=boundary, initial=initial,
                 data_idx=data_idx)


# ---------------------------------------------------------------------------
# Targets
# ---------------------------------------------------------------------------


def _primitive_from_conserved(state, gamma):
    rho, mom, e = state
    u = mom / rho
    p = (gamma - 1.0) * (e - 0.5 * mom * u)
    return rho, u, p


def _piecewise_targets(spec: ProblemSpec, points: np.ndarray) -> np.ndarray:
    """Primitive (rho, u, p) targets: left state for x < 0, right for x >= 0."""
    gam = spec.gamma_at(points)
    gam = np.broadcast_to(np.asarray(gam, dtype=np.float64), (len(points),))
    out = np.empty((len(points), 3))
    left_mask = points[:, 0] < 0.5 * (spec.domain.x_range[0] + spec.domain.x_range[1])
    for mask, state in ((left_mask, spec.left_state), (~left_mask, spec.right_state)):
        rho, mom, e = state
        u = mom / rho
        out[mask, 0] = rho
        out[mask, 1] = u
        out[mask, 2] = (gam[mask] - 1.0) * (e - 0.5 * mom * u)
    return out


def ic_targets(spec: ProblemSpec, points: np.ndarray) -> np.ndarray:
    if spec.kind == "custom":
        return spec.ic_fn(points)
    return _piecewise_targets(spec, points)


def bc_targets(spec: ProblemSpec, points: np.ndarray) -> np.ndarray:
    if spec.kind == "custom":
        return spec.bc_fn(points)
    return _piecewise_targets(spec, points)


# ---------------------------------------------------------------------------
# Loss assembly
# ---------------------------------------------------------------------------


def _penalty(var: ad.Var, spec: ProblemSpec) -> ad.Var:
    if spec.loss_form == "mse":
        return ad.square(var)
    if spec.loss_form == "huber":
        return ad.huber(var, 1.0)
    raise ConfigError(f"unknown loss form {spec.loss_form!r}")


def _residuals_for(spec, bundles, points, tau):
    gamma = spec.gamma_at(points)
    if isinstance(gamma, np.ndarray):
        gamma = TangentBundle.constant_like(bundles[0], gamma)
    if spec.kind == "euler":
        return euler_residual(bundles[:3], gamma)
    if spec.kind == "navier_stokes":
        return ns_residual(bundles[:3], gamma, tau)
    if spec.kind == "enriched_euler":
        return enriched_residual(bundles[:3], gamma, tau, spec.kappa, bundles[3:])
    return spec.residual_fn(bundles, gamma, tau, spec.kappa)


def _interior_terms(spec, net, params, points, tau, tape):
    """(j_pde, j_reg) taped scalars on one set of interior points."""
    track = ad.TrackSpec(d1=(_IX, _IT), d2=(_IX,) if spec.needs_d2(tau) else ())
    bundles = networks.forward_batch(net, params, points, track, tape=tape)
    residuals = _residuals_for(spec, bundles, points, tau)
    j_pde = ad.mean(_penalty(residuals[0], spec))
    for r in residuals[1:]:
        j_pde = ad.add(j_pde, ad.mean(_penalty(r, spec)))
    j_reg = None
    if spec.enrichment is not None:
        for w, f in zip(spec.enrichment.reg_weights, bundles[spec.n_unknowns:]):
            term = ad.scale(ad.mean(ad.square(f.value)), w)
            j_reg = term if j_reg is None else ad.add(j_reg, term)
    if spec.kind != "custom":
        rho_v, p_v = bundles[0].value.value, bundles[2].value.value
        frac = float(np.mean((rho_v <= 0.0) | (p_v <= 0.0)))
    else:
        frac = 0.0
    return j_pde, j_reg, frac


def _mismatch_terms(spec, net, params, batch: Batch, tape):
    """(j_bc, j_ic, j_data) taped scalars; one merged value-only forward."""
    segments = [batch.boundary, batch.initial]
    targets = [bc_targets(spec, batch.boundary), ic_targets(spec, batch.initial)]
    if batch.data_idx is not None:
        if spec.supervision is None:
            raise ConfigError("batch carries data points but problem has no supervision")
        sup = spec.supervision
        data_pts = sup.points[batch.data_idx]
        if spec.domain.param_axes:
            raise ConfigError("data supervision with parameter axes is not supported")
        segments.append(data_pts)
        targets.append(sup.targets[batch.data_idx])
    points = np.concatenate(segments, axis=0)
    bundles = networks.forward_batch(net, params, points, ad.TrackSpec(), tape=tape)

    n_bc, n_ic = len(batch.boundary), len(batch.initial)

    def segment(var_list, lo, hi):
        return [ad.Var(tape, v.value.value[lo:hi], (v.value,),
                       backward=_slice_back(v.value, lo, hi),
                       forward=lambda v=v, lo=lo, hi=hi: v.value.value[lo:hi],
                       name="seg") for v in var_list]

    def mismatch(vals, tgt, use_loss_form=True):
        total = None
        for j, v in enumerate(vals):
            diff = ad.sub(v, tgt[:, j])
            pen = _penalty(diff, spec) if use_loss_form else ad.square(diff)
            term = ad.mean(pen)
            total = term if total is None else ad.add(total, term)
        return total

    phys = bundles[: spec.n_unknowns]
    j_bc = mismatch(segment(phys, 0, n_bc), targets[0])
    j_ic = mismatch(segment(phys, n_bc, n_bc + n_ic), targets[1])
    j_data = None
    if batch.data_idx is not None:
        lo = n_bc + n_ic
        rho, u, p = segment(phys[:3], lo, len(points))
        gamma = spec.gamma_at(points[lo:])
        if isinstance(gamma, np.ndarray):
            raise ConfigError("data supervision requires fixed gamma")
        mom = ad.mul(rho, u)
        e = ad.add(ad.scale(p, 1.0 / (gamma - 1.0)),
                   ad.scale(ad.mul(mom, u), 0.5))
        tgt = targets[2]
        # data mismatch is always mean-square, in conserved moments
        j_data = mismatch([rho, mom, e], tgt, use_loss_form=False)
        j_data = ad.scale(j_data, spec.supervision.weight)
    return j_bc, j_ic, j_data


def _slice_back(parent, lo, hi):
    def bwd(g):
        gs = np.zeros_like(parent.value)
        gs[lo:hi] = g
        return ((parent, gs),)
    return bwd


def loss(spec: ProblemSpec, net, params, batch: Batch,
         tau_override: float | None = None,
         tape: ad.Tape | None = None) -> LossBreakdown:
    """Composite objective on one batch; single tape, backward-ready.

    The returned breakdown carries float components plus ``total_var`` for
    reverse differentiation.  ``tau_override`` substitutes the annealed
    viscosity for this evaluation.
    """
    _validate_dims(spec, net)
    if tape is None:
        tape = ad.Tape()
    tau = spec.tau if tau_override is None else float(tau_override)
    j_pde, j_reg, frac = _interior_terms(spec, net, params, batch.interior, tau, tape)
    j_bc, j_ic, j_data = _mismatch_terms(spec, net, params, batch, tape)
    total = ad.add(ad.add(j_pde, j_bc), j_ic)
    if j_data is not None:
        total = ad.add(total, j_data)
    if j_reg is not None:
        total = ad.add(total, j_reg)
    return LossBreakdown(
        j_pde=float(j_pde.value), j_bc=float(j_bc.value), j_ic=float(j_ic.value),
        j_data=float(j_data.value) if j_data is not None else 0.0,
        j_reg=float(j_reg.value) if j_reg is not None else 0.0,
        total=float(total.value), total_var=total,
        diagnostics={"nonpositive_state_fraction": frac})


def loss_and_grad(spec: ProblemSpec, net, params, batch: Batch,
                  tau_override: float | None = None,
                  chunk_size: int = 1250) -> tuple[LossBreakdown, np.ndarray]:
    """Objective and its parameter gradient, accumulated over interior chunks.

    Splitting the interior mean into per-chunk means (weighted by chunk size)
    keeps each tape's working set cache-resident; the summed gradient is the
    exact gradient of the full-batch objective up to float reassociation.
    """
    _validate_dims(spec, net)
    tau = spec.tau if tau_override is None else float(tau_override)
    n = len(batch.interior)
    grad = np.zeros(len(params.values))
    j_pde_total = 0.0
    j_reg_total = 0.0
    frac_total = 0.0
    for lo in range(0, n, chunk_size):
        pts = batch.interior[lo : lo + chunk_size]
        w = len(pts) / n
        tape = ad.Tape()
        j_pde, j_reg, frac = _interior_terms(spec, net, params, pts, tau, tape)
        piece = ad.scale(j_pde, w) if j_reg is None else \
            ad.scale(ad.add(j_pde, j_reg), w)
        grad += ad.backward(piece)
        j_pde_total += w * float(j_pde.value)
        if j_reg is not None:
            j_reg_total += w * float(j_reg.value)
        frac_total += w * frac
    tape = ad.Tape()
    j_bc, j_ic, j_data = _mismatch_terms(spec, net, params, batch, tape)
    scalar = ad.add(j_bc, j_ic)
    if j_data is not None:
        scalar = ad.add(scalar, j_data)
    grad += ad.backward(scalar)
    j_data_f = float(j_data.value) if j_data is not None else 0.0
    total = j_pde_total + float(j_bc.value) + float(j_ic.value) + j_data_f + j_reg_total
    breakdown = LossBreakdown(
        j_pde=j_pde_total, j_bc=float(j_bc.value), j_ic=float(j_ic.value),
        j_data=j_data_f, j_reg=j_reg_total, total=total, total_var=None,
        diagnostics={"nonpositive_state_fraction": frac_total})
    return breakdown, grad


def _validate_dims(spec: ProblemSpec, net):
    if net.d_in != spec.domain.d_in:
        raise ConfigError(f"network d_in={net.d_in} but domain needs {spec.domain.d_in}")
    if net.d_out != spec.d_out:
        raise ConfigError(f"network d_out={net.d_out} but problem needs {spec.d_out} "
                          "(unknowns + enrichment sources)")


# ---------------------------------------------------------------------------
# Canned problems
# ---------------------------------------------------------------------------


def sod_problem(gamma_axis: tuple[float, float] | None = None,
                kind: str = "navier_stokes", tau: float = 0.005) -> ProblemSpec:
    """Sod shock tube on [-1, 1] x [0, 0.2].

    With ``gamma_axis`` the adiabatic index becomes a third network input over
    the given interval and the boundary/initial pressures follow the sampled
    gamma through p = (gamma - 1) E.
    """
    axes = ()
    gamma: float | str = SOD_GAMMA
    if gamma_axis is not None:
        axes = (("gamma", float(gamma_axis[0]), float(gamma_axis[1])),)
        gamma = "gamma"
    domain = DomainSpec(x_range=(-1.0, 1.0), t_range=(0.0, 0.2), param_axes=axes)
    return ProblemSpec(kind=kind, domain=domain, gamma=gamma, tau=tau,
                       left_state=SOD_LEFT, right_state=SOD_RIGHT)


# Model rows of the initial-boundary table: (rho, u, T); p = rho T.
MODEL_LEFT_RUT = (1.08, 1.2, 0.8796)
MODEL_RIGHT_RUT = (0.9891, -0.0131, 0.9823)
MODEL_TAU = 0.005
MODEL_KAPPA = 0.005
MODEL_SOURCE_WEIGHT = 1e-4
EXPERIMENT_GRID = (1000, 1000)   # (nt, nx) supervision support grid


def _conserved_from_rut(rut, gamma):
    rho, u, temp = rut
    p = rho * temp
    return (rho, rho * u, p / (gamma - 1.0) + 0.5 * rho * u * u)


def enriched_model_problem(supervision: DataSupervision,
                           tau: float = MODEL_TAU,
                           kappa: float = MODEL_KAPPA,
                           source_weight: float = MODEL_SOURCE_WEIGHT) -> ProblemSpec:
    """Data-enriched model system on [-0.5, 0.5] x [0, 0.1].

    Three learned sources with L2 weight 1e-4 each; supervision comes from a
    generated experiment dataset (see shockfit.fvm.dataset).
    """
    if supervision is None:
        raise ConfigError("the enriched model problem requires a supervision dataset")
    domain = DomainSpec(x_range=(-0.5, 0.5), t_range=(0.0, 0.1))
    gamma = SOD_GAMMA
    return ProblemSpec(
        kind="enriched_euler", domain=domain, gamma=gamma, tau=tau, kappa=kappa,
        left_state=_conserved_from_rut(MODEL_LEFT_RUT, gamma),
        right_state=_conserved_from_rut(MODEL_RIGHT_RUT, gamma),
        supervision=supervision,
        enrichment=EnrichmentSpec(count=3, reg_weights=(source_weight,) * 3))
