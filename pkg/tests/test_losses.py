from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from satfield import difftape as dt
from satfield.losses import (LossReport, LossWeights, loss_depth, loss_l1, loss_lambda_amb, loss_normal,
                             loss_rgb, loss_tv, match_depth_points, total_loss, tv_of_plane)
from satfield.tensor_field import MultiscaleField

from gradutil import input_gradient, numeric_gradient, numeric_param_gradient, param_gradients, rel_err


def vm_field(seed=0, levels=2, channels=2):
    return MultiscaleField.create("sigma", "vm", levels, 2, channels, 4, 7, rng=np.random.default_rng(seed),
                                  std=1.0)


class TestRgb:
    def test_identical(self):
        x = np.random.default_rng(0).random((5, 3))
        assert loss_rgb(x, x) == 0.0

    def test_constant_offset(self):
        x = np.random.default_rng(0).random((5, 3))
        assert loss_rgb(x + 0.1, x) == pytest.approx(0.03)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            loss_rgb(np.zeros((2, 3)), np.zeros((3, 3)))

    @given(st.permutations(list(range(6))))
    def test_permutation_invariant(self, perm):
        rng = np.random.default_rng(1)
        a, b = rng.random((6, 3)), rng.random((6, 3))
        assert loss_rgb(a[perm], b[perm]) == pytest.approx(loss_rgb(a, b), abs=1e-15)


class TestTv:
    def test_constant_plane(self):
        assert tv_of_plane(np.full((3, 4), 2.5)) == 0.0

    def test_hand_computed(self):
        assert tv_of_plane(np.array([[0.0, 1.0], [0.0, 1.0]])) == pytest.approx(0.5)

    @given(st.floats(-5, 5))
    def test_quadratic_scaling(self, s):
        p = np.random.default_rng(2).normal(size=(2, 3, 5, 4))
        assert tv_of_plane(s * p) == pytest.approx(s * s * tv_of_plane(p), rel=1e-12, abs=1e-15)

    @given(st.floats(-100, 100))
    def test_shift_invariant(self, c):
        p = np.random.default_rng(3).normal(size=(5, 5))
        assert tv_of_plane(p + c) == pytest.approx(tv_of_plane(p), rel=1e-9, abs=1e-12)

    def test_field_averages_levels(self):
        f = vm_field()
        expected = np.mean([tv_of_plane(lv["plane_xy"]) for lv in f.levels])
        assert loss_tv(f) == pytest.approx(expected)

    def test_all_planes_flag(self):
        f = vm_field()
        per_level = [np.mean([tv_of_plane(lv[n]) for n in ("plane_xy", "plane_xz", "plane_yz")])
                     for lv in f.levels]
        assert loss_tv(f, all_planes=True) == pytest.approx(np.mean(per_level))

    def test_cp_gives_zero(self):
        f = MultiscaleField.create("s", "cp", 1, 1, 1, 4, 4)
        with pytest.warns(UserWarning):
            assert loss_tv(f) == 0.0

    def test_gradients(self):
        f = vm_field(4)
        fn = lambda tape: loss_tv(f, tape, all_planes=True)  # noqa: E731
        grads = param_gradients(fn, f.parameters(), 1.0)
        for p, g in zip(f.parameters(), grads):
            num = numeric_param_gradient(fn, p, 1.0, limit=10)
            for idx, n in num.items():
                assert rel_err(g[idx], n, 1e-8) < 1e-6
            if not p.name.endswith(("plane_xy", "plane_xz", "plane_yz")):
                assert not g.any()


class TestL1:
    def test_zero(self):
        f = vm_field()
        for p in f.parameters():
            p.value[...] = 0
        assert loss_l1(f) == 0.0

    def test_constant(self):
        f = vm_field()
        for p in f.parameters():
            p.value[...] = -0.3
        assert loss_l1(f) == pytest.approx(0.3)

    @given(st.floats(-4, 4))
    def test_scaling(self, s):
        f = vm_field(5)
        base = loss_l1(f)
        for p in f.parameters():
            p.value *= s
        assert loss_l1(f) == pytest.approx(abs(s) * base, rel=1e-12, abs=1e-15)

    def test_taped_matches_plain(self):
        f = vm_field(6)
        tape = dt.Tape()
        assert float(loss_l1(f, tape).value) == pytest.approx(loss_l1(f))


class TestNormal:
    def test_back_facing_is_zero(self):
        n = np.tile([0, 0, 1.0], (2, 3, 1))
        d = np.tile([0, 0, -1.0], (2, 1))
        assert loss_normal(n, np.ones((2, 3)), d) == 0.0

    def test_arithmetic(self):
        n = np.array([[[0.5, 0, np.sqrt(0.75)]]])
        assert loss_normal(n, np.ones((1, 1)), np.array([[1.0, 0, 0]])) == pytest.approx(0.25)

    def test_zero_weights(self):
        rng = np.random.default_rng(0)
        n = rng.normal(size=(3, 4, 3))
        assert loss_normal(n, np.zeros((3, 4)), rng.normal(size=(3, 3))) == 0.0

    def test_gradient(self):
        rng = np.random.default_rng(1)
        n0 = rng.normal(size=(2, 5, 3))
        n0 /= np.linalg.norm(n0, axis=-1, keepdims=True)
        w = rng.random((2, 5))
        d = rng.normal(size=(2, 3))
        # keep every cosine away from the max(0, ·) kink
        cos = (n0 * d[:, None]).sum(-1)
        n0[np.abs(cos) < 0.05] *= -1
        a = input_gradient(lambda v: loss_normal(v, w, d), n0, 1.0)
        num = numeric_gradient(lambda v: loss_normal(v, w, d), n0, 1.0)
        assert rel_err(a, num, 1e-8).max() < 1e-6


class TestLambdaAmb:
    def test_zero_case(self):
        assert loss_lambda_amb([1.0], [1.0], [1.0]) == 0.0

    def test_substitution(self):
        rng = np.random.default_rng(0)
        tr, a = rng.random(6), rng.random(6)
        assert loss_lambda_amb(tr, a, tr) == pytest.approx(1 - np.sum(tr * a * tr))

    def test_gradient(self):
        rng = np.random.default_rng(1)
        tr, a, lam = rng.random((3, 4, 7))
        for k in range(3):
            def fn(x, k=k):
                args = [tr, a, lam]
                args[k] = x
                return loss_lambda_amb(*args)
            x0 = [tr, a, lam][k]
            assert rel_err(input_gradient(fn, x0, 1.0), numeric_gradient(fn, x0, 1.0), 1e-8).max() < 1e-6


class TestDepth:
    def test_exact(self):
        assert loss_depth(np.array([1.0, 2.0]), [1.0, 2.0], [1.0, 3.0]) == 0.0

    def test_arithmetic(self):
        assert loss_depth(np.array([1.5]), [1.0], [2.0]) == pytest.approx(0.5)

    def test_linear_in_weights(self):
        rng = np.random.default_rng(0)
        h, d, w = rng.random((3, 8))
        assert loss_depth(h, d, 2 * w) == pytest.approx(2 * loss_depth(h, d, w))

    def test_misaligned(self):
        with pytest.raises(ValueError):
            loss_depth(np.zeros(2), np.zeros(3), np.zeros(3))

    def test_unmatched_ray(self):
        pts = [SimpleNamespace(ray_id=4), SimpleNamespace(ray_id=9)]
        assert match_depth_points([9, 4, 1], pts[:1]).tolist() == [1]
        with pytest.raises(KeyError):
            match_depth_points([4, 1], pts)


class TestTotal:
    def test_arithmetic(self):
        w = LossWeights(1, 1, 0.01, 0.05, 0)
        assert total_loss((1, 2, 3, 4, 0), w) == pytest.approx(3.23)

    def test_zero(self):
        assert total_loss((0, 0, 0, 0, 0), LossWeights()) == 0.0

    @settings(max_examples=30)
    @given(st.integers(0, 4), st.floats(0, 10))
    def test_linear(self, k, x):
        w = LossWeights(0.7, 1.3, 0.01, 0.05, 0.1)
        base = [0.1, 0.2, 0.3, 0.4, 0.5]
        bumped = list(base)
        bumped[k] += x
        assert total_loss(bumped, w) - total_loss(base, w) == pytest.approx(w.as_tuple()[k] * x, abs=1e-12)

    def test_nan_names_component(self):
        with pytest.raises(dt.NumericError, match="normal"):
            total_loss(LossReport(1.0, 0.0, float("nan"), 0.0, 0.0), LossWeights())

    def test_negative_weight(self):
        with pytest.raises(ValueError):
            LossWeights(tv=-1)

    def test_losses_nonnegative(self):
        rng = np.random.default_rng(3)
        n = rng.normal(size=(4, 6, 3))
        vals = [loss_rgb(rng.random((4, 3)), rng.random((4, 3))), loss_tv(vm_field()), loss_l1(vm_field()),
                loss_normal(n, rng.random((4, 6)), rng.normal(size=(4, 3))),
                loss_lambda_amb(rng.random((4, 6)), rng.random((4, 6)), rng.random((4, 6))),
                loss_depth(rng.random(5), rng.random(5), rng.random(5))]
        assert all(v >= 0 for v in vals)
