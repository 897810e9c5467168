import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from satfield.metrics import PSNR_IDENTICAL, SSIM_C1, altitude_mae, gaussian_window, psnr, ssim
from satfield.renderer import Dsm


def rand_img(seed, shape=(16, 16, 3)):
    return np.random.default_rng(seed).random(shape)


class TestPsnr:
    def test_mse_001(self):
        a = np.zeros((4, 4, 3))
        assert psnr(a, a + 0.1) == pytest.approx(20.0)

    def test_identical(self):
        a = rand_img(0)
        assert psnr(a, a) == PSNR_IDENTICAL == 99.0

    def test_halving_mse(self):
        a = np.zeros((2, 2))
        b1 = np.full((2, 2), 0.2)
        b2 = np.full((2, 2), 0.2 / np.sqrt(2))
        assert psnr(a, b2) - psnr(a, b1) == pytest.approx(3.0103, abs=1e-4)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            psnr(np.zeros((2, 2)), np.zeros((2, 3)))

    @settings(max_examples=30)
    @given(st.integers(0, 1000), st.permutations([0, 1, 2]))
    def test_symmetric_and_channel_invariant(self, seed, perm):
        a, b = rand_img(seed), rand_img(seed + 1)
        assert psnr(a, b) == psnr(b, a)
        assert psnr(a[..., perm], b[..., perm]) == pytest.approx(psnr(a, b), abs=1e-12)


class TestSsim:
    def test_identical(self):
        a = rand_img(1)
        assert ssim(a, a) == pytest.approx(1.0, abs=1e-12)

    def test_binary_inverse_negative(self):
        a = (np.random.default_rng(2).random((24, 24)) > 0.5).astype(float)
        assert ssim(a, 1 - a) < 0

    @pytest.mark.parametrize("mu", [0.2, 0.5, 0.85])
    def test_constant_closed_form(self, mu):
        a = np.full((16, 16), mu)
        b = a + 0.1
        expected = (2 * mu * (mu + 0.1) + SSIM_C1) / (mu ** 2 + (mu + 0.1) ** 2 + SSIM_C1)
        assert ssim(a, b) == pytest.approx(expected, abs=1e-9)

    def test_too_small(self):
        with pytest.raises(ValueError):
            ssim(np.zeros((10, 20)), np.zeros((10, 20)))

    def test_window(self):
        w = gaussian_window()
        assert w.shape == (11, 11) and w.sum() == pytest.approx(1.0) and w[5, 5] == w.max()

    def test_against_direct_window_sum(self):
        a, b = rand_img(3, (13, 12)), rand_img(4, (13, 12))
        w = gaussian_window()
        vals = []
        for i in range(3):
            for j in range(2):
                pa, pb = a[i:i + 11, j:j + 11], b[i:i + 11, j:j + 11]
                ma, mb = (w * pa).sum(), (w * pb).sum()
                va, vb = (w * pa * pa).sum() - ma ** 2, (w * pb * pb).sum() - mb ** 2
                cov = (w * pa * pb).sum() - ma * mb
                vals.append((2 * ma * mb + SSIM_C1) * (2 * cov + 0.03 ** 2)
                            / ((ma ** 2 + mb ** 2 + SSIM_C1) * (va + vb + 0.03 ** 2)))
        assert ssim(a, b) == pytest.approx(np.mean(vals), abs=1e-12)

    @settings(max_examples=20)
    @given(st.integers(0, 1000), st.permutations([0, 1, 2]))
    def test_symmetric_and_channel_invariant(self, seed, perm):
        a, b = rand_img(seed), rand_img(seed + 7)
        assert ssim(a, b) == pytest.approx(ssim(b, a), abs=1e-12)
        assert ssim(a[..., perm], b[..., perm]) == pytest.approx(ssim(a, b), abs=1e-12)

    @settings(max_examples=20)
    @given(st.integers(0, 1000))
    def test_range(self, seed):
        assert -1 <= ssim(rand_img(seed), rand_img(seed + 3)) <= 1


class TestMae:
    def test_identical(self):
        z = rand_img(0, (5, 5))
        assert altitude_mae(z, z) == 0.0

    def test_offset(self):
        z = rand_img(0, (5, 5))
        assert altitude_mae(z + 1.0, z) == pytest.approx(1.0)

    def test_invalid_excluded(self):
        t = np.zeros((2, 2))
        p = np.array([[1.0, 1.0], [np.nan, 100.0]])
        assert altitude_mae(p, t, true_valid=np.array([[True, True], [True, False]])) == 1.0

    def test_dsm_objects(self):
        valid = np.array([[True, False]])
        a = Dsm(np.array([[2.0, 50.0]]), valid, 0, 0, 1)
        b = Dsm(np.array([[1.5, 0.0]]), np.ones((1, 2), bool), 0, 0, 1)
        assert altitude_mae(a, b) == 0.5

    def test_no_valid_cells(self):
        with pytest.raises(ValueError):
            altitude_mae(np.full((2, 2), np.nan), np.zeros((2, 2)))
