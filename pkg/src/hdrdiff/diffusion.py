"""Closed-form diffusion math: forward noising, posterior parameters,
x0 recovery, and the ancestral / implicit reverse updates.

Every operation is elementwise and dtype-generic: inputs may be numpy
arrays or torch tensors. Schedule coefficients are applied as float64
scalars, so numpy inputs are promoted to float64 (keeping the algebra
exact even after division by sqrt(alpha_bar) at large t) while torch
tensors keep their own dtype, which leaves training in float32.
"""

from dataclasses import dataclass

import numpy as np

from .schedule import NoiseSchedule

__all__ = [
    "LatentState",
    "PosteriorParams",
    "forward_diffuse",
    "predict_x0",
    "ddim_step",
    "ddim_step_sigma",
    "posterior_params",
    "ddpm_step",
]


@dataclass(frozen=True)
class LatentState:
    """A noisy image x_t paired with its timestep."""

    x: np.ndarray
    t: int

    def __post_init__(self):
        if not np.all(np.isfinite(self.x)):
            raise ValueError("latent state contains non-finite entries")
        if self.t < 0:
            raise ValueError(f"timestep must be >= 0, got {self.t}")


@dataclass(frozen=True)
class PosteriorParams:
    """Mean and variance of the forward-process posterior q(x_{t-1} | x_t, x_0)."""

    mu_tilde: object
    beta_tilde: float


def _check_shapes(a, b, what):
    if tuple(a.shape) != tuple(b.shape):
        raise ValueError(f"{what}: shape mismatch {tuple(a.shape)} vs {tuple(b.shape)}")


def _check_t(schedule, t, low=1):
    if not low <= t <= schedule.num_steps:
        raise ValueError(f"t must lie in [{low}, {schedule.num_steps}], got {t}")


def _sqrt_ab(schedule, t):
    return np.float64(np.sqrt(schedule.alpha_bars[t]))


def _sqrt_one_minus_ab(schedule, t):
    return np.float64(np.sqrt(1.0 - schedule.alpha_bars[t]))


def _clip01(x):
    return x.clip(0.0, 1.0)


def forward_diffuse(x0, t: int, eps, schedule: NoiseSchedule):
    """Noise a clean image to timestep t: sqrt(ab_t)*x0 + sqrt(1-ab_t)*eps."""
    _check_shapes(x0, eps, "forward_diffuse")
    _check_t(schedule, t)
    return _sqrt_ab(schedule, t) * x0 + _sqrt_one_minus_ab(schedule, t) * eps


def predict_x0(x_t, t: int, eps_hat, schedule: NoiseSchedule, clip: bool = False):
    """Recover the clean-image estimate implied by a noise prediction.

    Inverts the forward noising: (x_t - sqrt(1-ab_t)*eps_hat) / sqrt(ab_t).
    With ``clip`` the estimate is clamped to [0, 1], the valid range of
    tonemapped images; leave it off inside loss computation so gradients
    stay exact.
    """
    _check_shapes(x_t, eps_hat, "predict_x0")
    _check_t(schedule, t)
    x0 = (x_t - _sqrt_one_minus_ab(schedule, t) * eps_hat) / _sqrt_ab(schedule, t)
    return _clip01(x0) if clip else x0


def ddim_step(x_t, t: int, t_prev: int, eps_hat, schedule: NoiseSchedule, clip: bool = True):
    """Deterministic implicit reverse step from timestep t to t_prev.

    Re-noises the x0 estimate to the earlier timestep:
    sqrt(ab_prev)*x0_hat + sqrt(1-ab_prev)*eps_hat. Because
    alpha_bars[0] == 1, a step to t_prev == 0 returns x0_hat exactly.
    t_prev may be any earlier index, which is what makes sub-sequence
    sampling plans possible.
    """
    if t_prev >= t:
        raise ValueError(f"t_prev must be < t, got t={t}, t_prev={t_prev}")
    if t_prev < 0:
        raise ValueError(f"t_prev must be >= 0, got {t_prev}")
    _check_t(schedule, t)
    x0_hat = predict_x0(x_t, t, eps_hat, schedule, clip=clip)
    return _sqrt_ab(schedule, t_prev) * x0_hat + _sqrt_one_minus_ab(schedule, t_prev) * eps_hat


def ddim_step_sigma(x_t, t: int, t_prev: int, eps_hat, sigma: float, z,
                    schedule: NoiseSchedule, clip: bool = True):
    """Implicit reverse step with explicit noise scale sigma.

    Generalizes ddim_step: the update is
    sqrt(ab_prev)*x0_hat + sqrt(1-ab_prev-sigma^2)*eps_hat + sigma*z.
    sigma == 0 recovers the deterministic step; sigma^2 equal to the
    posterior variance beta_tilde reproduces the ancestral update for
    consecutive timesteps.
    """
    if t_prev >= t:
        raise ValueError(f"t_prev must be < t, got t={t}, t_prev={t_prev}")
    if t_prev < 0:
        raise ValueError(f"t_prev must be >= 0, got {t_prev}")
    _check_t(schedule, t)
    _check_shapes(x_t, z, "ddim_step_sigma")
    ab_prev = schedule.alpha_bars[t_prev]
    residual = 1.0 - ab_prev - sigma * sigma
    if residual < -1e-12:
        raise ValueError(f"sigma={sigma} too large for t_prev={t_prev}")
    x0_hat = predict_x0(x_t, t, eps_hat, schedule, clip=clip)
    coeff = np.float64(np.sqrt(max(residual, 0.0)))
    return np.float64(np.sqrt(ab_prev)) * x0_hat + coeff * eps_hat + np.float64(sigma) * z


def posterior_params(x0, x_t, t: int, schedule: NoiseSchedule) -> PosteriorParams:
    """Posterior mean mu_tilde(x_t, x0) and variance beta_tilde at step t.

    beta_tilde is exactly 0 at t == 1 because alpha_bars[0] == 1.
    """
    _check_shapes(x0, x_t, "posterior_params")
    _check_t(schedule, t)
    ab_t = schedule.alpha_bars[t]
    ab_prev = schedule.alpha_bars[t - 1]
    beta_t = schedule.betas[t - 1]
    alpha_t = schedule.alphas[t - 1]
    coef_x0 = np.float64(np.sqrt(ab_prev) * beta_t / (1.0 - ab_t))
    coef_xt = np.float64(np.sqrt(alpha_t) * (1.0 - ab_prev) / (1.0 - ab_t))
    beta_tilde = float((1.0 - ab_prev) / (1.0 - ab_t) * beta_t)
    return PosteriorParams(mu_tilde=coef_x0 * x0 + coef_xt * x_t, beta_tilde=beta_tilde)


def _any_nonzero(z) -> bool:
    return bool((z != 0).any())


def ddpm_step(x_t, t: int, eps_hat, z, schedule: NoiseSchedule, clip: bool = True):
    """Ancestral reverse step: posterior mean plus sqrt(beta_tilde)-scaled noise.

    z must be the zero tensor at t == 1, where the posterior variance
    vanishes and the step is deterministic.
    """
    _check_shapes(x_t, eps_hat, "ddpm_step")
    _check_shapes(x_t, z, "ddpm_step")
    _check_t(schedule, t)
    if t == 1 and _any_nonzero(z):
        raise ValueError("z must be zero at t == 1 (posterior variance is 0)")
    x0_hat = predict_x0(x_t, t, eps_hat, schedule, clip=clip)
    post = posterior_params(x0_hat, x_t, t, schedule)
    return post.mu_tilde + np.float64(np.sqrt(post.beta_tilde)) * z
