import math

import numpy as np
import pytest

from dmsr.metrics import _gaussian_window, psnr_y, rgb_to_y, ssim_y, y_histogram


def random_image(seed, h=16, w=16):
    return np.random.default_rng(seed).uniform(0, 1, (h, w, 3))


def naive_ssim_y(a, b, window=11, sigma=1.5, k1=0.01, k2=0.03):
    """Direct double-loop SSIM oracle, independent of the convolution path."""
    x, y = rgb_to_y(a), rgb_to_y(b)
    win = _gaussian_window(window, sigma)
    c1, c2 = k1**2, k2**2
    h, w = x.shape
    vals = []
    for i in range(h - window + 1):
        for j in range(w - window + 1):
            px = x[i:i + window, j:j + window]
            py = y[i:i + window, j:j + window]
            mx = (win * px).sum()
            my = (win * py).sum()
            sxx = (win * px * px).sum() - mx * mx
            syy = (win * py * py).sum() - my * my
            sxy = (win * px * py).sum() - mx * my
            vals.append(((2 * mx * my + c1) * (2 * sxy + c2))
                        / ((mx * mx + my * my + c1) * (sxx + syy + c2)))
    return float(np.mean(vals))


class TestRgbToY:
    def test_white(self):
        y = rgb_to_y(np.ones((2, 2, 3)))
        assert y == pytest.approx((16 + 219.0) / 255, abs=1e-9)

    def test_black(self):
        y = rgb_to_y(np.zeros((2, 2, 3)))
        assert y == pytest.approx(16 / 255, abs=1e-9)

    def test_pure_green(self):
        img = np.zeros((1, 1, 3))
        img[..., 1] = 1.0
        assert rgb_to_y(img)[0, 0] == pytest.approx((16 + 128.553) / 255, abs=1e-9)

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            rgb_to_y(np.full((2, 2, 3), 1.5))


class TestPsnrY:
    def test_identical_is_inf(self):
        a = random_image(0)
        assert math.isinf(psnr_y(a, a))

    def test_offset_01_gives_20db(self):
        # gray levels chosen so the Y difference is exactly 0.1
        a = np.full((8, 8, 3), 0.3)
        b = np.full((8, 8, 3), 0.3 + 0.1 * 255 / 219.0)
        assert psnr_y(a, b) == pytest.approx(20.0, abs=1e-6)

    def test_offset_05_gives_6db(self):
        a = np.full((8, 8, 3), 0.1)
        b = np.full((8, 8, 3), 0.1 + 0.5 * 255 / 219.0)
        assert psnr_y(a, b) == pytest.approx(10 * math.log10(4), abs=1e-6)

    def test_symmetry(self):
        a, b = random_image(1), random_image(2)
        assert psnr_y(a, b) == pytest.approx(psnr_y(b, a), abs=1e-12)

    def test_monotone_in_noise(self):
        a = random_image(3) * 0.5 + 0.25
        prev = math.inf
        for amp in (0.02, 0.05, 0.1, 0.2):
            cur = psnr_y(a, np.clip(a + amp, 0, 1))
            assert cur < prev
            prev = cur

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            psnr_y(random_image(4), random_image(5, 8, 8))


class TestSsimY:
    def test_self_similarity_is_one(self):
        a = random_image(6)
        assert ssim_y(a, a) == pytest.approx(1.0, abs=1e-9)

    def test_matches_naive_oracle(self):
        for seed in range(10):
            a, b = random_image(seed), random_image(seed + 100)
            assert ssim_y(a, b) == pytest.approx(naive_ssim_y(a, b), abs=1e-7)

    def test_bounded(self):
        a = (random_image(7) > 0.5).astype(float)
        v = ssim_y(a, 1.0 - a)
        assert -1.0 <= v <= 1.0

    def test_symmetry(self):
        a, b = random_image(8), random_image(9)
        assert ssim_y(a, b) == pytest.approx(ssim_y(b, a), abs=1e-12)

    def test_too_small_rejected(self):
        with pytest.raises(ValueError):
            ssim_y(random_image(10, 8, 8), random_image(11, 8, 8))


class TestYHistogram:
    def test_counts_sum_to_pixels(self):
        img = random_image(12, 20, 30)
        assert y_histogram(img, 16).sum() == 20 * 30

    def test_constant_single_bin(self):
        counts = y_histogram(np.full((8, 8, 3), 0.5), 10)
        assert (counts > 0).sum() == 1
        assert counts.sum() == 64

    def test_two_level_even_split(self):
        img = np.zeros((4, 4, 3))
        img[:2] = 1.0
        counts = y_histogram(img, 4)
        nonzero = counts[counts > 0]
        assert list(nonzero) == [8, 8]

    def test_permutation_invariance(self):
        img = random_image(13, 8, 8)
        flat = img.reshape(-1, 3)
        rng = np.random.default_rng(0)
        shuffled = flat[rng.permutation(len(flat))].reshape(img.shape)
        assert np.array_equal(y_histogram(img, 12), y_histogram(shuffled, 12))

    def test_bins_validation(self):
        with pytest.raises(ValueError):
            y_histogram(random_image(14), 1)
