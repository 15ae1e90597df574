import math

import numpy as np
import pytest

from vqcompare.metrics import (
    GAUSSIAN_11,
    MS_SSIM_WEIGHTS,
    PSNR_CAP_DB,
    UNIFORM_8,
    ChannelWeights,
    SsimParams,
    max_feasible_scales,
    mse_plane,
    ms_ssim_plane,
    psnr_avg_log,
    psnr_avg_mse,
    psnr_from_mse,
    ssim_plane,
    weighted_channel_score,
)

REL = 1e-9


def rel_close(a, b, rel=REL):
    return math.isclose(a, b, rel_tol=rel, abs_tol=rel)


class TestMse:
    def test_identical_planes_zero(self):
        plane = np.arange(64, dtype=np.uint8).reshape(8, 8)
        assert mse_plane(plane, plane) == 0.0

    def test_unit_difference(self):
        ref = np.zeros((2, 2), dtype=np.uint8)
        dist = np.ones((2, 2), dtype=np.uint8)
        assert mse_plane(ref, dist) == 1.0

    def test_full_swing_checkerboard(self):
        ref = np.array([[0, 255], [255, 0]], dtype=np.uint8)
        dist = np.array([[255, 0], [0, 255]], dtype=np.uint8)
        assert mse_plane(ref, dist) == 65025.0

    def test_symmetry(self):
        rng = np.random.default_rng(0)
        a = rng.integers(0, 256, (16, 16), dtype=np.uint8)
        b = rng.integers(0, 256, (16, 16), dtype=np.uint8)
        assert mse_plane(a, b) == mse_plane(b, a)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="dimensions"):
            mse_plane(np.zeros((2, 2)), np.zeros((2, 3)))

    def test_ten_bit_range(self):
        ref = np.zeros((2, 2), dtype=np.uint16)
        dist = np.full((2, 2), 1023, dtype=np.uint16)
        assert mse_plane(ref, dist) == 1023.0**2


class TestPsnr:
    def test_unity_ratio_is_zero_db(self):
        assert psnr_from_mse(65025.0, 255) == 0.0

    def test_zero_mse_reports_cap(self):
        assert psnr_from_mse(0.0, 255) == PSNR_CAP_DB == 100.0

    def test_unit_mse(self):
        # independent evaluation: 10*log10(255^2)
        assert rel_close(psnr_from_mse(1.0, 255), 48.1308036086791)

    def test_negative_mse_rejected(self):
        with pytest.raises(ValueError):
            psnr_from_mse(-1.0, 255)

    def test_avg_mse_two_frames(self):
        # 10*log10(65025 / 50.5) evaluated independently
        assert rel_close(psnr_avg_mse([1.0, 100.0], 255), 31.09788982749249)

    def test_avg_log_two_frames(self):
        # (48.1308... + 28.1308...) / 2
        assert rel_close(psnr_avg_log([1.0, 100.0], 255), 38.1308036086791)

    def test_singleton_mean_is_identity(self):
        assert psnr_avg_mse([7.0], 255) == psnr_from_mse(7.0, 255)
        assert psnr_avg_log([7.0], 255) == psnr_from_mse(7.0, 255)

    def test_all_zero_list_reports_cap(self):
        assert psnr_avg_mse([0.0, 0.0], 255) == PSNR_CAP_DB
        assert psnr_avg_log([0.0, 0.0], 255) == PSNR_CAP_DB

    def test_empty_list_rejected(self):
        with pytest.raises(ValueError):
            psnr_avg_mse([], 255)
        with pytest.raises(ValueError):
            psnr_avg_log([], 255)

    def test_jensen_gap_randomized(self):
        # log of the mean never exceeds the mean of logs' PSNR counterpart
        rng = np.random.default_rng(42)
        for _ in range(200):
            mses = rng.uniform(0.1, 500.0, size=rng.integers(2, 40)).tolist()
            lo = psnr_avg_mse(mses, 255)
            hi = psnr_avg_log(mses, 255)
            assert hi >= lo
            if max(mses) - min(mses) > 1e-6:
                assert hi > lo

    def test_shift_invariance(self):
        rng = np.random.default_rng(5)
        ref = rng.integers(40, 120, (12, 12)).astype(np.int64)
        dist = ref + rng.integers(-10, 10, (12, 12))
        shifted = psnr_from_mse(mse_plane(ref + 50, dist + 50), 255)
        assert shifted == psnr_from_mse(mse_plane(ref, dist), 255)


def constant_plane(value, shape=(32, 32)):
    return np.full(shape, value, dtype=np.uint8)


class TestSsim:
    def test_identity(self):
        rng = np.random.default_rng(1)
        plane = rng.integers(0, 256, (24, 24), dtype=np.uint8)
        assert ssim_plane(plane, plane, SsimParams(), 255) == 1.0

    def test_symmetry(self):
        rng = np.random.default_rng(2)
        a = rng.integers(0, 256, (24, 24), dtype=np.uint8)
        b = rng.integers(0, 256, (24, 24), dtype=np.uint8)
        params = SsimParams()
        assert ssim_plane(a, b, params, 255) == ssim_plane(b, a, params, 255)

    def test_constant_planes_closed_form(self):
        # (2*100*110 + C1) / (100^2 + 110^2 + C1), C1 = (0.01*255)^2;
        # contrast/structure term is exactly 1 on constant planes
        c1 = (0.01 * 255) ** 2
        expected = (2 * 100 * 110 + c1) / (100**2 + 110**2 + c1)
        got = ssim_plane(constant_plane(100), constant_plane(110), SsimParams(), 255)
        assert rel_close(got, expected)
        assert rel_close(got, 0.9954764440915066)

    def test_constant_shift_sensitivity(self):
        # the luminance term makes the full formula shift-sensitive
        params = SsimParams()
        low = ssim_plane(constant_plane(100), constant_plane(110), params, 255)
        high = ssim_plane(constant_plane(150), constant_plane(160), params, 255)
        assert low != high
        assert high > low  # same gap matters less at higher luminance

    def test_plane_smaller_than_window(self):
        tiny = np.zeros((8, 8), dtype=np.uint8)
        with pytest.raises(ValueError, match="window"):
            ssim_plane(tiny, tiny, SsimParams(), 255)

    def test_uniform_window_variant(self):
        rng = np.random.default_rng(3)
        a = rng.integers(0, 256, (24, 24), dtype=np.uint8)
        params = SsimParams(window=UNIFORM_8)
        assert ssim_plane(a, a, params, 255) == 1.0
        c1 = (0.01 * 255) ** 2
        expected = (2 * 100 * 110 + c1) / (100**2 + 110**2 + c1)
        got = ssim_plane(constant_plane(100), constant_plane(110), params, 255)
        assert rel_close(got, expected)

    def test_bounded_on_noise(self):
        rng = np.random.default_rng(4)
        a = rng.integers(0, 256, (48, 48), dtype=np.uint8)
        noise = rng.normal(0, 30, a.shape)
        b = np.clip(a + noise, 0, 255).astype(np.uint8)
        value = ssim_plane(a, b, SsimParams(), 255)
        assert -1.0 <= value < 1.0

    def test_matches_per_window_brute_force(self):
        # independent oracle: evaluate the formula window by window with an
        # explicitly built 2-D Gaussian kernel
        rng = np.random.default_rng(8)
        a = rng.integers(0, 256, (18, 20)).astype(np.float64)
        b = np.clip(a + rng.normal(0, 12, a.shape), 0, 255).round()
        offsets = np.arange(11) - 5.0
        kern1d = np.exp(-(offsets**2) / (2 * 1.5**2))
        kern1d /= kern1d.sum()
        kern = np.outer(kern1d, kern1d)
        c1, c2 = (0.01 * 255) ** 2, (0.03 * 255) ** 2
        values = []
        for i in range(a.shape[0] - 10):
            for j in range(a.shape[1] - 10):
                x = a[i:i + 11, j:j + 11]
                y = b[i:i + 11, j:j + 11]
                mx = (kern * x).sum()
                my = (kern * y).sum()
                vx = (kern * x * x).sum() - mx * mx
                vy = (kern * y * y).sum() - my * my
                vxy = (kern * x * y).sum() - mx * my
                values.append(
                    (2 * mx * my + c1) * (2 * vxy + c2)
                    / ((mx * mx + my * my + c1) * (vx + vy + c2))
                )
        oracle = float(np.mean(values))
        assert math.isclose(ssim_plane(a, b, SsimParams(), 255), oracle, rel_tol=1e-12)

    def test_uniform_window_matches_brute_force(self):
        rng = np.random.default_rng(9)
        a = rng.integers(0, 256, (14, 15)).astype(np.float64)
        b = np.clip(a + rng.normal(0, 9, a.shape), 0, 255).round()
        c1, c2 = (0.01 * 255) ** 2, (0.03 * 255) ** 2
        values = []
        for i in range(a.shape[0] - 7):
            for j in range(a.shape[1] - 7):
                x = a[i:i + 8, j:j + 8]
                y = b[i:i + 8, j:j + 8]
                mx, my = x.mean(), y.mean()
                vx = (x * x).mean() - mx * mx
                vy = (y * y).mean() - my * my
                vxy = (x * y).mean() - mx * my
                values.append(
                    (2 * mx * my + c1) * (2 * vxy + c2)
                    / ((mx * mx + my * my + c1) * (vx + vy + c2))
                )
        oracle = float(np.mean(values))
        got = ssim_plane(a, b, SsimParams(window=UNIFORM_8), 255)
        assert math.isclose(got, oracle, rel_tol=1e-12)


class TestMsSsim:
    def test_identity(self):
        rng = np.random.default_rng(5)
        plane = rng.integers(0, 256, (200, 240), dtype=np.uint8)
        assert ms_ssim_plane(plane, plane, SsimParams(), 255) == 1.0

    def test_bounded_for_noise(self):
        rng = np.random.default_rng(6)
        a = rng.integers(0, 256, (200, 240), dtype=np.uint8)
        b = np.clip(a + rng.normal(0, 20, a.shape), 0, 255).astype(np.uint8)
        assert 0.0 <= ms_ssim_plane(a, b, SsimParams(), 255) <= 1.0

    def test_single_scale_equals_ssim(self):
        rng = np.random.default_rng(7)
        a = rng.integers(0, 256, (48, 48), dtype=np.uint8)
        b = np.clip(a + rng.normal(0, 10, a.shape), 0, 255).astype(np.uint8)
        single = SsimParams(ms_weights=(1.0,))
        assert ms_ssim_plane(a, b, single, 255) == ssim_plane(a, b, SsimParams(), 255)

    def test_insufficient_resolution_names_max_scales(self):
        plane = np.zeros((64, 64), dtype=np.uint8)
        with pytest.raises(ValueError, match="at most 3 scale"):
            ms_ssim_plane(plane, plane, SsimParams(), 255)

    def test_max_feasible_scales(self):
        assert max_feasible_scales((1080, 1920), 11) == 7
        assert max_feasible_scales((64, 64), 11) == 3
        assert max_feasible_scales((8, 8), 11) == 0

    def test_default_weights_are_five_scales(self):
        assert len(MS_SSIM_WEIGHTS) == 5
        assert abs(sum(MS_SSIM_WEIGHTS) - 1.0) < 0.001


class TestChannelWeights:
    def test_four_one_one(self):
        weights = ChannelWeights(4, 1, 1)
        assert rel_close(weighted_channel_score(30, 40, 40, weights), 100.0 / 3.0)

    def test_luma_only_passthrough(self):
        weights = ChannelWeights(1, 0, 0)
        assert weighted_channel_score(31.7, 99.0, -5.0, weights) == 31.7

    def test_equal_scores_fixed_point(self):
        for weights in (ChannelWeights(4, 1, 1), ChannelWeights(10, 1, 1), ChannelWeights(1, 1, 1)):
            assert rel_close(weighted_channel_score(7.5, 7.5, 7.5, weights), 7.5)

    def test_luma_dominance_limit(self):
        # growing luma weight drives the combination toward the Y score
        previous = None
        for k in (1, 10, 100, 10_000):
            value = weighted_channel_score(30, 40, 40, ChannelWeights(k, 1, 1))
            if previous is not None:
                assert abs(value - 30) < abs(previous - 30)
            previous = value
        assert abs(previous - 30) < 1e-2

    def test_spec_parsing(self):
        assert ChannelWeights.from_spec("8-1-1") == ChannelWeights(8, 1, 1)
        assert ChannelWeights.from_spec("y") == ChannelWeights(1, 0, 0)
        assert ChannelWeights.from_spec("8-1-1").spec() == "8-1-1"
        assert ChannelWeights.from_spec("y").spec() == "y"

    def test_rejects_negative_or_zero_sum(self):
        with pytest.raises(ValueError):
            ChannelWeights(-1, 1, 1)
        with pytest.raises(ValueError):
            ChannelWeights(0, 0, 0)

    def test_bad_spec(self):
        with pytest.raises(ValueError):
            ChannelWeights.from_spec("4-1")


class TestSsimParams:
    def test_rejects_bad_window(self):
        with pytest.raises(ValueError):
            SsimParams(window="box3")

    def test_rejects_silly_constants(self):
        with pytest.raises(ValueError):
            SsimParams(k1=0.0)
        with pytest.raises(ValueError):
            SsimParams(k2=1.5)

    def test_rejects_nonpositive_or_unnormalized_weights(self):
        with pytest.raises(ValueError):
            SsimParams(ms_weights=(0.5, -0.5, 1.0))
        with pytest.raises(ValueError):
            SsimParams(ms_weights=(0.9, 0.9))

    def test_window_sizes(self):
        assert SsimParams(window=GAUSSIAN_11).window_size == 11
        assert SsimParams(window=UNIFORM_8).window_size == 8
