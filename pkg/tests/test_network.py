import math

import numpy as np
import pytest

from shockfit import autodiff as ad
from shockfit import network as networks
from shockfit.exceptions import ConfigError

from oracles import central_d1, central_d2


class TestXavierInit:
    def test_deterministic_under_seed(self):
        cfg = networks.MlpConfig.uniform(2, 3, 3, 32)
        a = networks.init_xavier_uniform(cfg, 42)
        b = networks.init_xavier_uniform(cfg, 42)
        assert np.array_equal(a.values, b.values)
        c = networks.init_xavier_uniform(cfg, 43)
        assert not np.array_equal(a.values, c.values)

    def test_square_layer_bound(self):
        cfg = networks.MlpConfig.uniform(128, 1, 1, 128)
        params = networks.init_xavier_uniform(cfg, 0)
        w = params.tensor("W0")
        bound = math.sqrt(6.0 / 256.0)
        assert np.all(np.abs(w) <= bound)
        assert np.abs(w).max() > 0.9 * bound       # actually fills the range

    def test_mean_near_zero(self):
        cfg = networks.MlpConfig.uniform(128, 1, 1, 128)
        params = networks.init_xavier_uniform(cfg, 1)
        assert abs(params.tensor("W0").mean()) < 0.01

    def test_biases_zero(self):
        cfg = networks.GatedConfig(2, 3, 2, 8)
        params = networks.init_xavier_uniform(cfg, 5)
        for name, shape, _ in params.layout:
            if len(shape) == 1:
                assert np.all(params.tensor(name) == 0.0), name


class TestForwardMlp:
    def test_zero_weights_output_bias(self):
        cfg = networks.MlpConfig.uniform(2, 3, 2, 8)
        params = networks.ParamVector.zeros(cfg)
        params.tensor("b_out")[:] = [0.5, -1.0, 2.0]
        vals = networks.forward_values(cfg, params, np.array([[0.3, 0.1],
                                                              [-0.8, 0.9]]))
        assert np.allclose(vals, [[0.5, -1.0, 2.0]] * 2)

    def test_unit_chain_at_zero(self):
        cfg = networks.MlpConfig(1, 1, (1,))
        params = networks.ParamVector.zeros(cfg)
        params.tensor("W0")[:] = 1.0
        params.tensor("W_out")[:] = 1.0
        bundles = networks.forward_mlp(cfg, params, [0.0], {0})
        assert float(bundles[0].value) == 0.0

    def test_derivatives_match_finite_differences(self):
        cfg = networks.MlpConfig(2, 2, (6, 5), activation="sigmoid")
        params = networks.init_xavier_uniform(cfg, 3)
        pt = np.array([0.2, -0.4])
        bundles = networks.forward_mlp(cfg, params, pt, {0, 1})

        def f(i, j, v):
            q = pt.copy()
            q[i] = v
            return networks.forward_values(cfg, params, q[None])[0, j]

        for j in range(2):
            for i in range(2):
                d1 = central_d1(lambda v: f(i, j, v), pt[i])
                d2 = central_d2(lambda v: f(i, j, v), pt[i], h=1e-4)
                assert float(bundles[j].d1[i]) == pytest.approx(d1, abs=1e-7)
                assert float(bundles[j].d2[i]) == pytest.approx(d2, abs=1e-6)

    def test_smoothness_large_inputs(self):
        cfg = networks.MlpConfig.uniform(2, 3, 4, 16)
        params = networks.init_xavier_uniform(cfg, 0)
        rng = np.random.default_rng(0)
        pts = rng.uniform(-1e3, 1e3, size=(64, 2))
        bundles = networks.forward_batch(cfg, params, pts,
                                         ad.TrackSpec.full({0, 1}))
        for b in bundles:
            assert np.all(np.isfinite(b.value.value))
            for ch in list(b.d1.values()) + list(b.d2.values()):
                assert np.all(np.isfinite(np.asarray(ch.value)))


class TestForwardGated:
    def test_all_zero_parameters(self):
        cfg = networks.GatedConfig(2, 3, 4, 8)
        params = networks.ParamVector.zeros(cfg)
        vals = networks.forward_values(cfg, params, np.array([[0.7, 0.2]]))
        assert np.allclose(vals, 0.0)

    def test_saturated_gates_reduce_to_skip_path(self):
        # large biases drive Z -> 1 and G -> 1, so S^{l+1} = S^l and the
        # output is the affine readout of S^0
        cfg = networks.GatedConfig(2, 3, 3, 8)
        params = networks.init_xavier_uniform(cfg, 2)
        for layer in range(cfg.depth):
            params.tensor(f"b_z{layer}")[:] = 40.0
            params.tensor(f"b_g{layer}")[:] = 40.0
        pts = np.array([[0.3, -0.5], [0.1, 0.9]])
        vals = networks.forward_values(cfg, params, pts)
        s0 = np.tanh(pts @ params.tensor("W_in").T + params.tensor("b_in"))
        expect = s0 @ params.tensor("W_out").T + params.tensor("b_out")
        assert np.allclose(vals, expect, atol=1e-6)

    def test_derivative_channels_match_fd(self):
        cfg = networks.GatedConfig(2, 2, 2, 5)
        params = networks.init_xavier_uniform(cfg, 8)
        pt = np.array([-0.3, 0.6])
        bundles = networks.forward_gated(cfg, params, pt, {0})

        def f(v):
            return networks.forward_values(cfg, params, np.array([[v, pt[1]]]))[0, 1]

        assert float(bundles[1].d1[0]) == pytest.approx(
            central_d1(f, pt[0]), rel=1e-6)
        assert float(bundles[1].d2[0]) == pytest.approx(
            central_d2(f, pt[0], h=1e-4), rel=1e-4, abs=1e-7)

    def test_layout_count_matches_closed_form(self):
        rng = np.random.default_rng(0)
        for _ in range(10):
            cfg = networks.GatedConfig(int(rng.integers(1, 4)),
                                       int(rng.integers(1, 4)),
                                       int(rng.integers(1, 5)),
                                       int(rng.integers(1, 20)))
            params = networks.init_xavier_uniform(cfg, 0)
            assert len(params) == networks.count_dofs_gated(cfg)


class TestDofCounting:
    def test_paper_mlp_case(self):
        cfg = networks.MlpConfig.uniform(2, 3, 16, 128)
        assert networks.count_dofs_mlp(cfg) == 248451

    def test_minimal_mlp(self):
        assert networks.count_dofs_mlp(networks.MlpConfig(1, 1, (1,))) == 4

    def test_mlp_matches_enumeration(self):
        rng = np.random.default_rng(7)
        for _ in range(10):
            depth = int(rng.integers(1, 5))
            widths = tuple(int(w) for w in rng.integers(1, 30, size=depth))
            cfg = networks.MlpConfig(int(rng.integers(1, 5)),
                                     int(rng.integers(1, 5)), widths)
            assert networks.count_dofs_mlp(cfg) == len(
                networks.init_xavier_uniform(cfg, 0))

    def test_gated_headline_case(self):
        cfg = networks.GatedConfig(2, 3, 16, 63)
        assert networks.count_dofs_gated(cfg) == 266493

    def test_minimal_gated(self):
        assert networks.count_dofs_gated(networks.GatedConfig(1, 1, 1, 1)) == 16


class TestMatchWidth:
    def test_headline_value(self):
        # 63 maps to 127 by the formula; the headline runs pair it with 128
        assert networks.match_width(63) == 127

    def test_smallest(self):
        assert networks.match_width(1) == 3

    def test_monotone(self):
        widths = [networks.match_width(n) for n in range(1, 1001)]
        assert all(b >= a for a, b in zip(widths, widths[1:]))

    def test_matches_float_evaluation(self):
        # the pairing rule is implemented verbatim (integer-exact ceiling)
        for n in (1, 2, 5, 17, 63, 500, 999):
            expect = math.ceil((-7.0 + math.sqrt(16.0 * n * n + 72.0 * n + 49.0)) / 2.0)
            assert networks.match_width(n) == expect


class TestCheckpoint:
    def test_round_trip_mlp(self, tmp_path):
        cfg = networks.MlpConfig(2, 3, (7, 5), activation="sigmoid")
        params = networks.init_xavier_uniform(cfg, 11)
        path = tmp_path / "model.ckpt"
        networks.save_checkpoint(path, cfg, params, seed=11, iteration=500)
        cfg2, params2, header = networks.load_checkpoint(path)
        assert cfg2 == cfg
        assert np.array_equal(params.values, params2.values)
        assert header["iteration"] == 500 and header["seed"] == 11

    def test_round_trip_gated(self, tmp_path):
        cfg = networks.GatedConfig(3, 6, 2, 9)
        params = networks.init_xavier_uniform(cfg, 1)
        path = tmp_path / "model.ckpt"
        networks.save_checkpoint(path, cfg, params)
        cfg2, params2, _ = networks.load_checkpoint(path)
        assert cfg2 == cfg
        assert np.array_equal(params.values, params2.values)

    def test_rejects_foreign_file(self, tmp_path):
        path = tmp_path / "junk.ckpt"
        path.write_bytes(b"not a checkpoint")
        with pytest.raises(ConfigError):
            networks.load_checkpoint(path)


class TestValidation:
    def test_bad_configs_rejected(self):
        with pytest.raises(ConfigError):
            networks.MlpConfig(0, 1, (4,))
        with pytest.raises(ConfigError):
            networks.MlpConfig(1, 1, ())
        with pytest.raises(ConfigError):
            networks.MlpConfig(1, 1, (4,), activation="relu")
        with pytest.raises(ConfigError):
            networks.GatedConfig(1, 1, 0, 4)

    def test_param_length_checked(self):
        cfg = networks.MlpConfig.uniform(2, 3, 2, 8)
        other = networks.init_xavier_uniform(networks.MlpConfig.uniform(2, 3, 2, 9), 0)
        with pytest.raises(ConfigError):
            networks.forward_values(cfg, other, np.zeros((1, 2)))

    def test_point_shape_checked(self):
        cfg = networks.MlpConfig.uniform(2, 3, 2, 8)
        params = networks.init_xavier_uniform(cfg, 0)
        with pytest.raises(ConfigError):
            networks.forward_values(cfg, params, np.zeros((4, 3)))
