"""Domain transforms between linear HDR radiance, the mu-law training
domain, and exposure-bracketed LDR inputs."""

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "HdrImage",
    "LdrSample",
    "mu_law_compress",
    "mu_law_expand",
    "ldr_to_hdr_domain",
    "assemble_condition_input",
    "DEFAULT_MU",
    "DEFAULT_GAMMA",
]

DEFAULT_MU = 5000.0
DEFAULT_GAMMA = 2.2

_RANGE_TOL = 1e-6


def _check_unit_range(x: np.ndarray, what: str) -> np.ndarray:
    if x.size == 0:
        return x
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{what}: non-finite entries")
    lo, hi = float(x.min()), float(x.max())
    if lo < -_RANGE_TOL or hi > 1.0 + _RANGE_TOL:
        raise ValueError(f"{what}: entries outside [0, 1] (min={lo:.6g}, max={hi:.6g})")
    return x.clip(0.0, 1.0)


@dataclass(frozen=True)
class HdrImage:
    """Linear-domain radiance map of shape (H, W, 3) with values in [0, 1]."""

    data: np.ndarray

    def __post_init__(self):
        if self.data.ndim != 3 or self.data.shape[-1] != 3:
            raise ValueError(f"HDR image must have shape (H, W, 3), got {self.data.shape}")
        object.__setattr__(self, "data", _check_unit_range(self.data, "HdrImage"))

    @property
    def shape(self):
        return self.data.shape


@dataclass(frozen=True)
class LdrSample:
    """Exposure bracket of three LDR frames, ordered low/medium/high.

    ``exposures`` are relative exposure times with the middle (reference)
    frame normalized to 1; they must be strictly increasing. ``gamma``
    is the encoding gamma used to map frames back to the linear domain.
    """

    ldrs: tuple[np.ndarray, np.ndarray, np.ndarray]
    exposures: tuple[float, float, float]
    gamma: float = DEFAULT_GAMMA

    REFERENCE_INDEX = 1

    def __post_init__(self):
        if len(self.ldrs) != 3 or len(self.exposures) != 3:
            raise ValueError("an LDR sample holds exactly three frames and exposures")
        shape = self.ldrs[0].shape
        for i, ldr in enumerate(self.ldrs):
            if ldr.shape != shape:
                raise ValueError(f"LDR frame {i} shape {ldr.shape} != {shape}")
            if ldr.ndim != 3 or ldr.shape[-1] != 3:
                raise ValueError(f"LDR frames must have shape (H, W, 3), got {ldr.shape}")
        object.__setattr__(self, "ldrs", tuple(_check_unit_range(l, f"LDR frame {i}")
                                               for i, l in enumerate(self.ldrs)))
        e1, e2, e3 = self.exposures
        if not (0.0 < e1 < e2 < e3):
            raise ValueError(f"exposures must be positive and strictly increasing, got {self.exposures}")
        if self.gamma <= 0.0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")

    @property
    def reference(self) -> np.ndarray:
        return self.ldrs[self.REFERENCE_INDEX]

    @property
    def shape(self):
        return self.ldrs[0].shape


def mu_law_compress(x: np.ndarray, mu: float = DEFAULT_MU) -> np.ndarray:
    """Map linear values in [0, 1] to the compressed log domain.

    Computes log(1 + mu*x) / log(1 + mu), a strictly increasing bijection
    of [0, 1] onto itself that allocates far more resolution to dark
    values. Entries outside [0, 1] by more than 1e-6 are rejected.
    """
    if mu <= 0.0:
        raise ValueError(f"mu must be positive, got {mu}")
    x = _check_unit_range(np.asarray(x), "mu_law_compress")
    return np.log1p(mu * x) / math.log1p(mu)


def mu_law_expand(x0: np.ndarray, mu: float = DEFAULT_MU) -> np.ndarray:
    """Exact inverse of mu_law_compress: (exp(x0*log(1+mu)) - 1) / mu.

    The map is a bijection of [0, 1] onto itself, so float dust beyond
    the endpoints is clipped away.
    """
    if mu <= 0.0:
        raise ValueError(f"mu must be positive, got {mu}")
    x0 = _check_unit_range(np.asarray(x0), "mu_law_expand")
    return (np.expm1(x0 * math.log1p(mu)) / mu).clip(0.0, 1.0)


def ldr_to_hdr_domain(Y: np.ndarray, exposure: float, gamma: float = DEFAULT_GAMMA) -> np.ndarray:
    """Linear-domain estimate of an LDR frame: Y**gamma / exposure."""
    if exposure <= 0.0:
        raise ValueError(f"exposure must be positive, got {exposure}")
    if gamma <= 0.0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    Y = _check_unit_range(np.asarray(Y), "ldr_to_hdr_domain")
    return Y**gamma / exposure


def assemble_condition_input(sample: LdrSample) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Build the three 6-channel conditioning tensors.

    Each frame contributes its gamma-encoded pixels in channels 0-2 and
    its linear-domain estimate in channels 3-5. Linear estimates of the
    non-reference frames can exceed 1 after exposure normalization, so
    they are clipped back to [0, 1] for numerical uniformity.
    """
    out = []
    for ldr, exposure in zip(sample.ldrs, sample.exposures):
        hdr = ldr_to_hdr_domain(ldr, exposure, sample.gamma).clip(0.0, 1.0)
        out.append(np.concatenate([ldr, hdr], axis=-1).astype(np.float32))
    return tuple(out)
