"""PSNR and SSIM in the linear and tonemapped domains."""

from dataclasses import dataclass

import numpy as np
from scipy.signal import convolve2d

from .tonemap import DEFAULT_MU, mu_law_compress

__all__ = ["MetricReport", "psnr", "psnr_mu", "ssim", "ssim_mu", "evaluate_pair", "PSNR_CAP_DB"]

PSNR_CAP_DB = 99.0

_SSIM_WINDOW = 11
_SSIM_SIGMA = 1.5
_SSIM_K1 = 0.01
_SSIM_K2 = 0.03


@dataclass(frozen=True)
class MetricReport:
    psnr_l: float
    psnr_mu: float
    ssim_l: float
    ssim_mu: float

    def as_text(self) -> str:
        return "\n".join([
            f"PSNR-L  : {self.psnr_l:8.4f} dB",
            f"PSNR-mu : {self.psnr_mu:8.4f} dB",
            f"SSIM-L  : {self.ssim_l:8.6f}",
            f"SSIM-mu : {self.ssim_mu:8.6f}",
        ])

    def as_kv(self) -> str:
        return (f"psnr_l={self.psnr_l:.6f} psnr_mu={self.psnr_mu:.6f} "
                f"ssim_l={self.ssim_l:.6f} ssim_mu={self.ssim_mu:.6f}")


def _as_pair(a, b, what):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"{what}: shape mismatch {a.shape} vs {b.shape}")
    return a, b


def psnr(a, b) -> float:
    """Peak signal-to-noise ratio in dB for images in [0, 1], capped at 99."""
    a, b = _as_pair(a, b, "psnr")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, 10.0 * np.log10(1.0 / mse))


def psnr_mu(a, b, mu: float = DEFAULT_MU) -> float:
    """PSNR computed in the tonemapped (compressed) domain."""
    return psnr(mu_law_compress(np.asarray(a), mu), mu_law_compress(np.asarray(b), mu))


def _gaussian_window(size: int, sigma: float) -> np.ndarray:
    ax = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(ax**2) / (2.0 * sigma**2))
    w = np.outer(g, g)
    return w / w.sum()


def _to_gray(img: np.ndarray) -> np.ndarray:
    return img.mean(axis=-1) if img.ndim == 3 else img


def ssim(a, b) -> float:
    """Mean local structural similarity with an 11x11 Gaussian window.

    Color inputs are reduced to grayscale by channel mean. Local means,
    variances and covariance use Gaussian weights (sigma 1.5) over valid
    window positions only, with stability constants from peak value 1.
    """
    a, b = _as_pair(a, b, "ssim")
    a, b = _to_gray(a), _to_gray(b)
    if min(a.shape) < _SSIM_WINDOW:
        raise ValueError(f"images smaller than the {_SSIM_WINDOW}x{_SSIM_WINDOW} window: {a.shape}")
    w = _gaussian_window(_SSIM_WINDOW, _SSIM_SIGMA)

    mu_a = convolve2d(a, w, mode="valid")
    mu_b = convolve2d(b, w, mode="valid")
    var_a = convolve2d(a * a, w, mode="valid") - mu_a**2
    var_b = convolve2d(b * b, w, mode="valid") - mu_b**2
    cov = convolve2d(a * b, w, mode="valid") - mu_a * mu_b

    c1 = _SSIM_K1**2
    c2 = _SSIM_K2**2
    num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def ssim_mu(a, b, mu: float = DEFAULT_MU) -> float:
    """SSIM computed in the tonemapped (compressed) domain."""
    return ssim(mu_law_compress(np.asarray(a), mu), mu_law_compress(np.asarray(b), mu))


def evaluate_pair(pred, gt, mu: float = DEFAULT_MU) -> MetricReport:
    """All four quality numbers for a predicted HDR image vs ground truth."""
    pred = getattr(pred, "data", pred)
    gt = getattr(gt, "data", gt)
    return MetricReport(
        psnr_l=psnr(pred, gt),
        psnr_mu=psnr_mu(pred, gt, mu),
        ssim_l=ssim(pred, gt),
        ssim_mu=ssim_mu(pred, gt, mu),
    )
