import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from satfield.difftape import Parameter
from satfield.tensor_field import (CpLevel, Interp, MultiscaleField, VmLevel, backward_sample, dense_tensor,
                                   level_resolutions, make_level, param_count, sample_cp, sample_field,
                                   sample_vm)


def const_level(kind, res, rank, channels, value):
    cls = VmLevel if kind == "vm" else CpLevel
    lv = make_level(kind, res, rank, channels, np.random.default_rng(0))
    for f in cls.factors:
        lv.params[f].value[...] = value
    return lv


def zero_grads(level):
    return {f: np.zeros_like(level[f]) for f in level.factors}


def node_positions(res):
    axes = [np.arange(n) / (n - 1) for n in res]
    g = np.meshgrid(*axes, indexing="ij")
    return np.stack([a.ravel() for a in g], axis=1)


class TestLevelResolutions:
    def test_exact_doubling(self):
        assert level_resolutions(16, 128, 4) == [16, 32, 64, 128]

    def test_single_level(self):
        assert level_resolutions(16, 64, 1) == [64]

    def test_derived_progression(self):
        # evaluated independently from round(16 * (300/16)**(l/7))
        assert level_resolutions(16, 300, 8) == [16, 24, 37, 56, 85, 130, 197, 300]

    @given(st.integers(2, 40), st.integers(0, 200), st.integers(1, 12))
    def test_monotone(self, base, extra, n):
        sizes = level_resolutions(base, base + extra, n)
        assert len(sizes) == n and all(b >= a for a, b in zip(sizes, sizes[1:]))
        assert sizes[-1] == base + extra

    def test_invalid(self):
        with pytest.raises(ValueError):
            level_resolutions(32, 16, 3)


class TestSampling:
    def test_zero_factors(self):
        lv = const_level("vm", (4, 5, 6), 2, 1, 0.0)
        assert sample_vm(lv, [0.3, 0.6, 0.1], 0) == 0.0

    def test_constant_vm(self):
        lv = const_level("vm", (4, 5, 6), 2, 1, 1.0)
        assert sample_vm(lv, [0.37, 0.81, 0.05], 0) == pytest.approx(6.0)

    def test_constant_cp(self):
        lv = const_level("cp", (4, 5, 6), 3, 1, 1.0)
        assert sample_cp(lv, [0.2, 0.4, 0.9], 0) == pytest.approx(3.0)

    def test_cp_zero_line_kills_rank(self):
        lv = const_level("cp", (4, 4, 4), 1, 1, 1.0)
        lv.params["line_y"].value[...] = 0
        lv.params["line_x"].value[...] = 7.0
        assert sample_cp(lv, [0.5, 0.5, 0.5], 0) == 0.0

    @pytest.mark.parametrize("kind", ["vm", "cp"])
    def test_dense_equivalence_at_nodes(self, kind):
        rng = np.random.default_rng(42)
        worst = 0.0
        for _ in range(100):
            res = tuple(int(n) for n in rng.integers(2, 7, 3))
            lv = make_level(kind, res, int(rng.integers(1, 4)), 2, rng, std=1.0)
            vals = lv.forward(Interp(node_positions(res), res))[0]
            for c in range(2):
                worst = max(worst, np.abs(vals[:, c] - dense_tensor(lv, c).ravel()).max())
        assert worst < 1e-6

    def test_single_point_matches_dense(self):
        lv = make_level("vm", (3, 4, 5), 2, 1, np.random.default_rng(1), std=1.0)
        T = dense_tensor(lv, 0)
        assert sample_vm(lv, [1 / 2, 2 / 3, 1 / 4], 0) == pytest.approx(T[1, 2, 1], abs=1e-12)

    def test_clamp_to_edge(self):
        lv = make_level("vm", (4, 4, 4), 2, 1, np.random.default_rng(3), std=1.0)
        T = dense_tensor(lv, 0)
        assert sample_vm(lv, [0.0, 1.0, 0.0], 0) == pytest.approx(T[0, 3, 0], abs=1e-12)

    @settings(max_examples=30, deadline=None)
    @given(st.floats(-3, 3), st.sampled_from(["line_x", "plane_yz", "line_z", "plane_xy"]))
    def test_linear_in_each_factor(self, s, factor):
        rng = np.random.default_rng(5)
        lv = make_level("vm", (5, 5, 5), 2, 1, rng, std=1.0)
        p = [0.31, 0.52, 0.77]
        base = sample_vm(lv, p, 0)
        keep = lv.params[factor].value.copy()
        lv.params[factor].value[...] = 0
        without = sample_vm(lv, p, 0)
        lv.params[factor].value[...] = s * keep
        scaled = sample_vm(lv, p, 0)
        assert scaled - without == pytest.approx(s * (base - without), abs=1e-10)


class TestMultiscale:
    def test_softplus_at_zero(self):
        f = MultiscaleField.create("s", "vm", 3, 2, 4, 4, 8, "mean", "softplus", std=0.0)
        assert np.allclose(sample_field(f, [0.3, 0.3, 0.3]), np.log(2.0))

    def test_concat_length(self):
        f = MultiscaleField.create("r", "vm", 8, 2, 4, 4, 16, "concat", "none")
        assert sample_field(f, [0.1, 0.2, 0.3]).shape == (32,)

    def test_mean_of_levels(self):
        f = MultiscaleField.create("m", "vm", 3, 2, 3, 4, 9, "mean", "none", rng=np.random.default_rng(2))
        p = [0.12, 0.67, 0.41]
        per_level = [[sample_vm(lv, p, c) for c in range(3)] for lv in f.levels]
        assert np.allclose(sample_field(f, p), np.mean(per_level, axis=0), atol=1e-12)

    def test_rejects_mixed_channels(self):
        rng = np.random.default_rng(0)
        with pytest.raises(ValueError):
            MultiscaleField("x", [make_level("vm", (4, 4, 4), 1, 2, rng), make_level("vm", (4, 4, 4), 1, 3, rng)])

    def test_rejects_decreasing_levels(self):
        rng = np.random.default_rng(0)
        with pytest.raises(ValueError):
            MultiscaleField("x", [make_level("vm", (8, 8, 8), 1, 2, rng), make_level("vm", (4, 4, 4), 1, 2, rng)])


class TestBackward:
    def test_zero_upstream(self):
        lv = make_level("vm", (4, 4, 4), 2, 2, np.random.default_rng(0))
        g = zero_grads(lv)
        backward_sample(lv, [0.2, 0.3, 0.4], 1, 0.0, g)
        assert all(not v.any() for v in g.values())

    def test_node_product_rule(self):
        lv = make_level("vm", (4, 4, 4), 1, 1, np.random.default_rng(0), std=1.0)
        g = zero_grads(lv)
        i, j, k = 1, 2, 3
        backward_sample(lv, [i / 3, j / 3, k / 3], 0, 1.0, g)
        assert g["line_x"][0, 0, i] == pytest.approx(lv["plane_yz"][0, 0, j, k], abs=1e-12)
        assert g["plane_xy"][0, 0, i, j] == pytest.approx(lv["line_z"][0, 0, k], abs=1e-12)

    def test_shape_mismatch(self):
        lv = make_level("cp", (4, 4, 4), 1, 1, np.random.default_rng(0))
        with pytest.raises(ValueError):
            backward_sample(lv, [0.5] * 3, 0, 1.0, {"line_x": np.zeros(3)})

    @pytest.mark.parametrize("kind", ["vm", "cp"])
    def test_finite_differences(self, kind):
        rng = np.random.default_rng(7)
        eps = 1e-4
        for _ in range(5):
            lv = make_level(kind, (4, 5, 3), 2, 2, rng, std=1.0)
            p = rng.random(3)
            c = int(rng.integers(2))
            up = float(rng.normal())
            g = zero_grads(lv)
            backward_sample(lv, p, c, up, g)
            for f in lv.factors:
                arr = lv.params[f].value
                for idx in np.ndindex(arr.shape):
                    old = arr[idx]
                    arr[idx] = old + eps
                    hi = sample_vm(lv, p, c) if kind == "vm" else sample_cp(lv, p, c)
                    arr[idx] = old - eps
                    lo = sample_vm(lv, p, c) if kind == "vm" else sample_cp(lv, p, c)
                    arr[idx] = old
                    num = up * (hi - lo) / (2 * eps)
                    ana = g[f][idx]
                    assert abs(ana - num) <= 1e-5 * max(abs(ana), abs(num), 1e-6)

    def test_gradient_support_matches_sensitivity(self):
        lv = make_level("vm", (5, 5, 5), 1, 1, np.random.default_rng(9), std=1.0)
        p = [0.3, 0.55, 0.8]
        g = zero_grads(lv)
        backward_sample(lv, p, 0, 1.0, g)
        base = sample_vm(lv, p, 0)
        for f in lv.factors:
            arr = lv.params[f].value
            for idx in np.ndindex(arr.shape):
                arr[idx] += 1.0
                changed = sample_vm(lv, p, 0) != base
                arr[idx] -= 1.0
                assert changed == (g[f][idx] != 0), (f, idx)


class TestParamCount:
    def test_single_vm(self):
        lv = make_level("vm", (4, 4, 4), 1, 1, np.random.default_rng(0))
        assert param_count(lv) == 60 == lv.param_count()

    def test_single_cp(self):
        lv = make_level("cp", (2, 3, 4), 2, 1, np.random.default_rng(0))
        assert param_count(lv) == 18 == lv.param_count()

    @pytest.mark.parametrize("kind", ["vm", "cp"])
    def test_closed_form_matches_storage(self, kind):
        f = MultiscaleField.create("x", kind, 5, 3, 2, 6, 20, extent=[64, 64, 16])
        assert param_count(f) == sum(p.size for p in f.parameters()) == f.param_count()

    def test_parameter_naming(self):
        f = MultiscaleField.create("sigma", "vm", 2, 1, 1, 4, 4)
        assert f.parameters()[0].name == "field/sigma/level0/line_x"
        assert isinstance(f.parameters()[0], Parameter)
