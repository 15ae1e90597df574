"""Plane-level quality scores and channel weighting.

PSNR comes in two temporal poolings: log of the mean frame MSE, and mean
of per-frame PSNR values. Structural similarity uses the reference
settings (11x11 Gaussian window, sigma 1.5, k1=0.01, k2=0.03); the
multi-scale variant uses five dyadic scales with the canonical exponents
and 2x2 mean-decimation downsampling. Chroma planes are always scored at
their native subsampled resolution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import cv2
import numpy as np

# Frames or sequences with zero MSE report this instead of infinity so the
# downstream correlation math stays defined. 100 dB exceeds any real encode.
PSNR_CAP_DB = 100.0

GAUSSIAN_11 = "gaussian11"
UNIFORM_8 = "uniform8"

MS_SSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)


@dataclass(frozen=True)
class ChannelWeights:
    """Non-negative weights for combining Y, U, V channel scores."""

    w_y: float
    w_u: float
    w_v: float

    def __post_init__(self):
        if min(self.w_y, self.w_u, self.w_v) < 0:
            raise ValueError(f"negative channel weight in {self}")
        if self.w_y + self.w_u + self.w_v <= 0:
            raise ValueError("channel weights sum to zero")

    @classmethod
    def from_spec(cls, spec: str) -> "ChannelWeights":
        """Parse 'y' (luma only) or dash-separated weights like '8-1-1'."""
        if spec.strip().lower() == "y":
            return cls(1.0, 0.0, 0.0)
        parts = spec.split("-")
        if len(parts) != 3:
            raise ValueError(f"bad channel weight spec {spec!r}")
        return cls(*(float(p) for p in parts))

    def spec(self) -> str:
        if (self.w_u, self.w_v) == (0.0, 0.0):
            return "y"

        def fmt(w: float) -> str:
            return str(int(w)) if w == int(w) else repr(w)

        return f"{fmt(self.w_y)}-{fmt(self.w_u)}-{fmt(self.w_v)}"

    def combine(self, y_score: float, u_score: float, v_score: float) -> float:
        total = self.w_y + self.w_u + self.w_v
        return (self.w_y * y_score + self.w_u * u_score + self.w_v * v_score) / total


# The luma-weighted schemes studied alongside luma-only scoring.
NAMED_WEIGHTS = {
    "y": ChannelWeights(1, 0, 0),
    **{f"{k}-1-1": ChannelWeights(k, 1, 1) for k in (1, 2, 4, 6, 8, 10)},
}


@dataclass(frozen=True)
class SsimParams:
    window: str = GAUSSIAN_11
    k1: float = 0.01
    k2: float = 0.03
    ms_weights: tuple = MS_SSIM_WEIGHTS

    def __post_init__(self):
        if self.window not in (GAUSSIAN_11, UNIFORM_8):
            raise ValueError(f"unknown ssim window {self.window!r}")
        if not (0 < self.k1 < 1 and 0 < self.k2 < 1):
            raise ValueError("k1, k2 must lie in (0, 1)")
        if not self.ms_weights or min(self.ms_weights) <= 0:
            raise ValueError("scale weights must be positive")
        # Published exponent tables carry rounding (the canonical five sum
        # to 1.0001), so the sum-to-one requirement is enforced loosely.
        if abs(sum(self.ms_weights) - 1.0) > 0.01:
            raise ValueError("scale weights must sum to 1")

    @property
    def window_size(self) -> int:
        return 11 if self.window == GAUSSIAN_11 else 8

    def key(self) -> str:
        """Canonical token identifying the scoring behaviour."""
        w = ",".join(repr(x) for x in self.ms_weights)
        return f"{self.window};k1={self.k1!r};k2={self.k2!r};mw={w}"


def mse_plane(ref_plane: np.ndarray, dist_plane: np.ndarray) -> float:
    """Mean squared sample difference between two equally sized planes."""
    if ref_plane.shape != dist_plane.shape:
        raise ValueError(
            f"plane dimensions differ: {ref_plane.shape} vs {dist_plane.shape}"
        )
    diff = ref_plane.astype(np.int64) - dist_plane.astype(np.int64)
    # Integer accumulation: a FullHD sum of squared 16-bit diffs fits in int64.
    total = int(np.sum(diff * diff))
    return total / diff.size


def psnr_from_mse(mse: float, max_val: int) -> float:
    """PSNR in dB; zero MSE reports the PSNR_CAP_DB sentinel."""
    if mse < 0:
        raise ValueError(f"negative MSE {mse}")
    if mse == 0:
        return PSNR_CAP_DB
    return 10.0 * math.log10(max_val * max_val / mse)


def psnr_avg_mse(per_frame_mse, max_val: int) -> float:
    """Pool frames by averaging MSE first, then taking the logarithm."""
    values = list(per_frame_mse)
    if not values:
        raise ValueError("empty per-frame MSE list")
    return psnr_from_mse(sum(values) / len(values), max_val)


def psnr_avg_log(per_frame_mse, max_val: int) -> float:
    """Pool frames by averaging per-frame PSNR values (cap applied per frame)."""
    values = list(per_frame_mse)
    if not values:
        raise ValueError("empty per-frame MSE list")
    return sum(psnr_from_mse(m, max_val) for m in values) / len(values)


def _gaussian_kernel(size: int, sigma: float) -> np.ndarray:
    offsets = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    kernel = np.exp(-(offsets**2) / (2.0 * sigma * sigma))
    return kernel / kernel.sum()


_GAUSS_11 = _gaussian_kernel(11, 1.5)


def _window_means(plane: np.ndarray, window: str) -> np.ndarray:
    """Local means over fully interior window positions ('valid' placement)."""
    if window == GAUSSIAN_11:
        # zero padding only touches positions within the kernel radius of the
        # border; cropping them leaves exactly the valid-window values
        r = 5
        out = cv2.sepFilter2D(plane, -1, _GAUSS_11, _GAUSS_11,
                              borderType=cv2.BORDER_CONSTANT)
        return out[r:-r, r:-r]
    # 8x8 uniform window via an integral image; exact box means.
    s = np.zeros((plane.shape[0] + 1, plane.shape[1] + 1), dtype=np.float64)
    np.cumsum(np.cumsum(plane, axis=0), axis=1, out=s[1:, 1:])
    k = 8
    box = s[k:, k:] - s[:-k, k:] - s[k:, :-k] + s[:-k, :-k]
    return box / (k * k)


def _ssim_terms(ref, dist, params: SsimParams, max_val: float):
    """Per-window luminance and contrast-structure maps (means over windows)."""
    win = params.window_size
    if min(ref.shape) < win:
        raise ValueError(
            f"plane {ref.shape[1]}x{ref.shape[0]} smaller than the "
            f"{win}x{win} window"
        )
    x = ref.astype(np.float64)
    y = dist.astype(np.float64)
    c1 = (params.k1 * max_val) ** 2
    c2 = (params.k2 * max_val) ** 2
    mu_x = _window_means(x, params.window)
    mu_y = _window_means(y, params.window)
    xx = _window_means(x * x, params.window) - mu_x * mu_x
    yy = _window_means(y * y, params.window) - mu_y * mu_y
    xy = _window_means(x * y, params.window) - mu_x * mu_y
    lum = (2.0 * mu_x * mu_y + c1) / (mu_x * mu_x + mu_y * mu_y + c1)
    cs = (2.0 * xy + c2) / (xx + yy + c2)
    return float(np.mean(lum * cs)), float(np.mean(cs))


def ssim_plane(ref_plane, dist_plane, params: SsimParams, max_val: float) -> float:
    """Structural similarity between two planes, averaged over windows."""
    if ref_plane.shape != dist_plane.shape:
        raise ValueError(
            f"plane dimensions differ: {ref_plane.shape} vs {dist_plane.shape}"
        )
    ssim, _ = _ssim_terms(ref_plane, dist_plane, params, max_val)
    return ssim


def _downsample2(plane: np.ndarray) -> np.ndarray:
    # 2x2 mean then decimation; a trailing odd row/column is dropped.
    h, w = plane.shape
    p = plane[: h - h % 2, : w - w % 2].astype(np.float64)
    return (p[0::2, 0::2] + p[0::2, 1::2] + p[1::2, 0::2] + p[1::2, 1::2]) / 4.0


def max_feasible_scales(shape: tuple[int, int], window_size: int) -> int:
    """How many dyadic scales keep the plane at least as large as the window."""
    scales = 0
    h, w = shape
    while min(h, w) >= window_size:
        scales += 1
        h //= 2
        w //= 2
    return scales


def ms_ssim_plane(ref_plane, dist_plane, params: SsimParams, max_val: float) -> float:
    """Multi-scale structural similarity.

    Contrast-structure terms are taken at every scale; the luminance term
    only at the coarsest. Each factor is raised to its scale weight.
    Negative contrast-structure means are clamped to zero so the weighted
    product stays real.
    """
    if ref_plane.shape != dist_plane.shape:
        raise ValueError(
            f"plane dimensions differ: {ref_plane.shape} vs {dist_plane.shape}"
        )
    n_scales = len(params.ms_weights)
    feasible = max_feasible_scales(ref_plane.shape, params.window_size)
    if feasible < n_scales:
        raise ValueError(
            f"plane {ref_plane.shape[1]}x{ref_plane.shape[0]} supports at most "
            f"{feasible} scale(s) with a {params.window_size}-wide window, "
            f"{n_scales} requested"
        )
    x = ref_plane.astype(np.float64)
    y = dist_plane.astype(np.float64)
    result = 1.0
    for scale, weight in enumerate(params.ms_weights):
        ssim, cs = _ssim_terms(x, y, params, max_val)
        term = ssim if scale == n_scales - 1 else cs
        result *= max(term, 0.0) ** weight
        if scale != n_scales - 1:
            x = _downsample2(x)
            y = _downsample2(y)
    return result


def weighted_channel_score(
    y_score: float, u_score: float, v_score: float, weights: ChannelWeights
) -> float:
    """Weighted mean of the per-channel scores."""
    return weights.combine(y_score, u_score, v_score)
