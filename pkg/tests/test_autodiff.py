import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shockfit import autodiff as ad
from shockfit import network as networks
from shockfit import problems as prob
from shockfit.exceptions import NumericOverflowError, TapeUsageError

from oracles import central_d1, central_d2, fd_param_gradient


def tanh_neuron():
    cfg = networks.MlpConfig(1, 1, (1,))
    params = networks.ParamVector.zeros(cfg)
    params.tensor("W0")[:] = 1.0
    params.tensor("W_out")[:] = 1.0
    return cfg, params


class TestEvalWithDerivs:
    def test_single_tanh_neuron_at_zero(self):
        cfg, params = tanh_neuron()
        (b,) = ad.eval_with_derivs(cfg, params, [0.0], {0})
        assert float(b.value) == pytest.approx(0.0, abs=1e-15)
        assert float(b.d1[0]) == pytest.approx(1.0, abs=1e-15)
        assert float(b.d2[0]) == pytest.approx(0.0, abs=1e-15)

    def test_affine_map_channels(self):
        # z = 2x + 3t through a wide-enough linear path: W_out @ tanh'(0) trick
        # is avoided by checking against finite differences instead.
        cfg = networks.MlpConfig(2, 1, (4,))
        params = networks.init_xavier_uniform(cfg, 7)
        pt = np.array([1.0, 1.0])
        (b,) = ad.eval_with_derivs(cfg, params, pt, {0, 1})

        def value(x, t):
            return networks.forward_values(cfg, params, np.array([[x, t]]))[0, 0]

        assert float(b.d1[0]) == pytest.approx(
            central_d1(lambda x: value(x, 1.0), 1.0), rel=1e-6)
        assert float(b.d1[1]) == pytest.approx(
            central_d1(lambda t: value(1.0, t), 1.0), rel=1e-6)

    def test_identity_affine_channels(self):
        # z = 2x + 3t at (1, 1): value 5, dz/dx = 2, dz/dt = 3, d2 = 0
        tape = ad.Tape()
        pts = np.array([[1.0, 1.0]])
        stack = ad.input_stack(tape, pts, ad.TrackSpec.full({0, 1}))
        bundles = ad.bundles_from_stack(stack, ad.TrackSpec.full({0, 1}), 2)
        x, t = bundles
        z = 2.0 * x + 3.0 * t
        assert float(z.value) == 5.0
        assert float(z.d1[0]) == 2.0
        assert float(z.d1[1]) == 3.0
        assert float(z.d2[0]) == 0.0 and float(z.d2[1]) == 0.0

    def test_random_two_layer_matches_finite_differences(self):
        cfg = networks.MlpConfig(2, 3, (8, 8))
        params = networks.init_xavier_uniform(cfg, 1)
        rng = np.random.default_rng(5)
        pt = rng.uniform(-1, 1, size=2)
        bundles = ad.eval_with_derivs(cfg, params, pt, {0, 1})

        def value(j, x, t):
            return networks.forward_values(cfg, params, np.array([[x, t]]))[0, j]

        for j, b in enumerate(bundles):
            for i in (0, 1):
                def f(v, i=i, j=j):
                    q = pt.copy()
                    q[i] = v
                    return value(j, q[0], q[1])

                fd1 = central_d1(f, pt[i], h=1e-5)
                # second differences need a larger step: roundoff scales 1/h^2
                fd2 = central_d2(f, pt[i], h=1e-4)
                assert abs(float(b.d1[i]) - fd1) / max(abs(fd1), 1e-8) < 1e-6
                assert abs(float(b.d2[i]) - fd2) / max(abs(fd2), 1e-2) < 1e-5

    def test_tracked_subset_validation(self):
        cfg, params = tanh_neuron()
        with pytest.raises(TapeUsageError):
            ad.eval_with_derivs(cfg, params, [0.0], {3})

    def test_nonfinite_raises_with_layer_name(self):
        cfg = networks.MlpConfig(1, 1, (2,))
        params = networks.ParamVector.zeros(cfg)
        params.tensor("W0")[:] = 1e308
        params.tensor("b_out")[:] = 0.0
        params.tensor("W_out")[:] = 1e308
        with np.errstate(over="ignore", invalid="ignore"):
            with pytest.raises(NumericOverflowError, match="layer"):
                ad.eval_with_derivs(cfg, params, [1e12], {0})


class TestBackward:
    def test_hand_chain_rule_single_weight(self):
        # z = w * x0 with w = 1, x0 = 2, scalar = z^2 -> d/dw = 2 z x0 = 8
        cfg = networks.MlpConfig(1, 1, (1,))
        params = networks.ParamVector.zeros(cfg)
        params.tensor("W0")[:] = 1.0
        tape = ad.Tape()
        w0 = tape.param_leaves(params)[0]
        z = ad.scale(w0, 2.0)
        grad = ad.backward(ad.vsum(ad.square(z)))
        assert grad[0] == pytest.approx(8.0)
        assert np.all(grad[1:] == 0.0)     # untouched parameters stay zero

    def test_scalar_independent_of_params_gives_zeros(self):
        cfg = networks.MlpConfig(2, 1, (3,))
        params = networks.init_xavier_uniform(cfg, 0)
        tape = ad.Tape()
        tape.param_leaves(params)
        c = ad.Var(tape, np.array([3.0]))
        scalar = ad.vsum(ad.square(c))
        grad = ad.backward(scalar)
        assert grad.shape == (len(params),)
        assert np.all(grad == 0.0)

    def test_sod_residual_loss_matches_fd(self):
        spec = prob.sod_problem()
        cfg = networks.MlpConfig.uniform(2, 3, 2, 6)
        params = networks.init_xavier_uniform(cfg, 3)
        rng = np.random.default_rng(11)
        pts = rng.uniform([-1.0, 0.0], [1.0, 0.2], size=(10, 2))

        def taped(p, tape):
            bundles = networks.forward_batch(
                cfg, p, pts, ad.TrackSpec(d1=(0, 1), d2=(0,)), tape=tape)
            res = prob.ns_residual(bundles, prob.SOD_GAMMA, spec.tau)
            total = ad.mean(ad.square(res[0]))
            for r in res[1:]:
                total = ad.add(total, ad.mean(ad.square(r)))
            return total

        grad = ad.backward(taped(params, ad.Tape()))
        fd = fd_param_gradient(lambda p: float(taped(p, ad.Tape()).value), params)
        scale = max(np.abs(grad).max(), np.abs(fd).max())
        assert np.abs(grad - fd).max() / scale < 1e-6

    def test_backward_requires_scalar_and_tape(self):
        with pytest.raises(TapeUsageError):
            ad.backward(3.0)
        tape = ad.Tape()
        v = ad.Var(tape, np.array([1.0, 2.0]))
        with pytest.raises(TapeUsageError):
            ad.backward(v)         # not a scalar
        s = ad.vsum(v)
        with pytest.raises(TapeUsageError):
            ad.backward(s)         # no parameters registered

    def test_linearity_of_gradients(self):
        cfg = networks.MlpConfig.uniform(2, 2, 2, 5)
        params = networks.init_xavier_uniform(cfg, 4)
        pts = np.random.default_rng(0).uniform(-1, 1, (6, 2))

        def scalars(tape):
            b = networks.forward_batch(cfg, params, pts, ad.TrackSpec(d1=(0,)),
                                       tape=tape)
            s1 = ad.mean(ad.square(b[0].value))
            s2 = ad.mean(ad.square(b[1].d1[0]))
            return s1, s2

        t1 = ad.Tape()
        s1, s2 = scalars(t1)
        g_sum = ad.backward(ad.add(s1, s2))
        t2 = ad.Tape()
        s1, _ = scalars(t2)
        g1 = ad.backward(s1)
        t3 = ad.Tape()
        _, s2 = scalars(t3)
        g2 = ad.backward(s2)
        assert np.abs(g_sum - (g1 + g2)).max() < 1e-12

    def test_determinism_bit_identical(self):
        cfg = networks.MlpConfig.uniform(2, 3, 3, 8)
        params = networks.init_xavier_uniform(cfg, 9)
        pts = np.random.default_rng(2).uniform(-1, 1, (50, 2))

        def run():
            tape = ad.Tape()
            b = networks.forward_batch(cfg, params, pts,
                                       ad.TrackSpec(d1=(0, 1), d2=(0,)), tape=tape)
            s = ad.mean(ad.square(ad.add(b[0].d2[0], b[1].value)))
            return ad.backward(s)

        g1, g2 = run(), run()
        assert np.array_equal(g1, g2)


class TestGradientCheck:
    def test_quadratic_linear_net(self):
        cfg = networks.MlpConfig(1, 1, (1,))
        params = networks.ParamVector.zeros(cfg)
        params.values[:] = [0.7, 0.1, -0.3, 0.2]

        def lossfn(p, tape):
            leaves = tape.param_leaves(p)
            w = leaves[0]
            return ad.vsum(ad.square(ad.sub(ad.scale(w, 2.0), 1.0)))

        report = ad.gradient_check(cfg, params, lossfn, tol=1e-10)
        assert report.passed, report.max_rel_err

    def test_tanh_mlp_sod_loss(self):
        cfg = networks.MlpConfig.uniform(2, 3, 3, 16)
        params = networks.init_xavier_uniform(cfg, 0)
        pts = np.random.default_rng(1).uniform([-1, 0], [1, 0.2], size=(10, 2))

        def lossfn(p, tape):
            b = networks.forward_batch(cfg, p, pts, ad.TrackSpec(d1=(0, 1)),
                                       tape=tape)
            res = prob.euler_residual(b, prob.SOD_GAMMA)
            total = ad.mean(ad.square(res[0]))
            for r in res[1:]:
                total = ad.add(total, ad.mean(ad.square(r)))
            return total

        report = ad.gradient_check(cfg, params, lossfn, tol=1e-6)
        assert report.passed, report.max_rel_err

    def test_loss_with_second_derivative_channel(self):
        cfg = networks.MlpConfig.uniform(2, 3, 2, 8)
        params = networks.init_xavier_uniform(cfg, 2)
        pts = np.random.default_rng(3).uniform([-1, 0], [1, 0.2], size=(8, 2))

        def lossfn(p, tape):
            b = networks.forward_batch(cfg, p, pts,
                                       ad.TrackSpec(d1=(0, 1), d2=(0,)), tape=tape)
            res = prob.ns_residual(b, prob.SOD_GAMMA, 0.005)
            total = ad.mean(ad.square(res[0]))
            for r in res[1:]:
                total = ad.add(total, ad.mean(ad.square(r)))
            return total

        report = ad.gradient_check(cfg, params, lossfn, tol=1e-6)
        assert report.passed, report.max_rel_err


# --- chain-rule consistency of bundle arithmetic ----------------------------

finite = st.floats(min_value=-2.0, max_value=2.0,
                   allow_nan=False, allow_infinity=False)
nonzero = st.floats(min_value=0.2, max_value=2.0).map(lambda v: v)


def make_bundle(tape, value, d1, d2):
    return ad.TangentBundle(
        ad.Var(tape, np.array([value])),
        {0: ad.Var(tape, np.array([d1]))},
        {0: ad.Var(tape, np.array([d2]))})


@settings(max_examples=60, deadline=None)
@given(a=finite, a1=finite, a2=finite, b=finite, b1=finite, b2=finite)
def test_chain_rule_add_mul(a, a1, a2, b, b1, b2):
    tape = ad.Tape()
    x = make_bundle(tape, a, a1, a2)
    y = make_bundle(tape, b, b1, b2)
    s = x + y
    assert float(s.d1[0]) == pytest.approx(a1 + b1, abs=1e-12)
    assert float(s.d2[0]) == pytest.approx(a2 + b2, abs=1e-12)
    m = x * y
    assert float(m.d1[0]) == pytest.approx(a1 * b + a * b1, rel=1e-12, abs=1e-12)
    assert float(m.d2[0]) == pytest.approx(a2 * b + 2 * a1 * b1 + a * b2,
                                           rel=1e-12, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(a=finite, a1=finite, a2=finite, b=nonzero, b1=finite, b2=finite)
def test_chain_rule_division(a, a1, a2, b, b1, b2):
    tape = ad.Tape()
    x = make_bundle(tape, a, a1, a2)
    y = make_bundle(tape, b, b1, b2)
    q = x / y
    # analytic quotient rule
    d1 = (a1 * b - a * b1) / (b * b)
    d2 = (a2 - 2 * d1 * b1 - (a / b) * b2) / b
    assert float(q.value) == pytest.approx(a / b, rel=1e-12)
    assert float(q.d1[0]) == pytest.approx(d1, rel=1e-9, abs=1e-9)
    assert float(q.d2[0]) == pytest.approx(d2, rel=1e-9, abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(a=finite, a1=finite, a2=finite)
def test_chain_rule_tanh_sigmoid_square(a, a1, a2):
    tape = ad.Tape()
    x = make_bundle(tape, a, a1, a2)
    t = np.tanh(a)
    f1 = 1 - t * t
    f2 = -2 * t * f1
    th = x.tanh()
    assert float(th.d1[0]) == pytest.approx(f1 * a1, rel=1e-10, abs=1e-12)
    assert float(th.d2[0]) == pytest.approx(f2 * a1 * a1 + f1 * a2,
                                            rel=1e-10, abs=1e-12)
    s = 1.0 / (1.0 + np.exp(-a))
    g1 = s * (1 - s)
    g2 = g1 * (1 - 2 * s)
    sg = x.sigmoid()
    assert float(sg.d1[0]) == pytest.approx(g1 * a1, rel=1e-10, abs=1e-12)
    assert float(sg.d2[0]) == pytest.approx(g2 * a1 * a1 + g1 * a2,
                                            rel=1e-10, abs=1e-12)
    sq = x.square()
    assert float(sq.d1[0]) == pytest.approx(2 * a * a1, rel=1e-12, abs=1e-12)
    assert float(sq.d2[0]) == pytest.approx(2 * a1 * a1 + 2 * a * a2,
                                            rel=1e-12, abs=1e-12)


class TestTape:
    def test_replay_reproduces_values(self):
        cfg = networks.MlpConfig.uniform(2, 2, 2, 6)
        params = networks.init_xavier_uniform(cfg, 5)
        tape = ad.Tape()
        pts = np.random.default_rng(8).uniform(-1, 1, (12, 2))
        b = networks.forward_batch(cfg, params, pts,
                                   ad.TrackSpec(d1=(0, 1), d2=(0,)), tape=tape)
        ad.mean(ad.square(b[0].d2[0]))
        assert tape.replay()

    def test_fresh_tapes_do_not_grow(self):
        cfg = networks.MlpConfig.uniform(2, 3, 2, 4)
        params = networks.init_xavier_uniform(cfg, 0)
        spec = prob.sod_problem()
        rng = np.random.default_rng(0)
        batch = prob.sample_batch(spec.domain, (50, 10, 10), rng)
        sizes = []
        for _ in range(3):
            bd = prob.loss(spec, cfg, params, batch)
            sizes.append(len(bd.total_var.tape))
            ad.backward(bd.total_var)
        assert sizes[0] == sizes[1] == sizes[2]

    def test_two_tapes_are_independent(self):
        t1, t2 = ad.Tape(), ad.Tape()
        a = ad.Var(t1, np.array([1.0]))
        b = ad.Var(t2, np.array([2.0]))
        with pytest.raises(TapeUsageError):
            ad.add(a, b)
