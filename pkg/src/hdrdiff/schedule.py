"""Diffusion variance schedule and timestep sub-sequence planning."""

from dataclasses import dataclass

import numpy as np

__all__ = ["NoiseSchedule", "SamplingPlan", "linear_beta_schedule", "alpha_bar", "make_plan"]


@dataclass(frozen=True)
class NoiseSchedule:
    """Precomputed variance tables for a T-step diffusion process.

    ``alpha_bars`` has T+1 entries indexed 0..T with ``alpha_bars[0] = 1``,
    which makes the t=1 posterior variance exactly zero and the final
    reverse step deterministic. All tables are stored in float64 so that
    square roots of tiny cumulative products stay accurate.
    """

    betas: np.ndarray
    alphas: np.ndarray
    alpha_bars: np.ndarray

    @property
    def num_steps(self) -> int:
        return len(self.betas)


@dataclass(frozen=True)
class SamplingPlan:
    """Strictly decreasing timestep indices visited during sampling.

    The plan terminates logically at 0: the last transition steps from
    ``steps[-1]`` down to timestep 0.
    """

    steps: tuple[int, ...]

    def transitions(self):
        """Yield (t, t_prev) pairs, the final pair ending at 0."""
        for i, t in enumerate(self.steps):
            t_prev = self.steps[i + 1] if i + 1 < len(self.steps) else 0
            yield t, t_prev


def linear_beta_schedule(num_steps: int, beta_start: float = 1e-4, beta_end: float = 0.02) -> NoiseSchedule:
    """Build a schedule with betas linearly spaced from beta_start to beta_end.

    Raises ValueError when the bounds leave (0, 1), are decreasing, or
    cannot be met (a single-step schedule needs beta_start == beta_end).
    """
    if num_steps < 1:
        raise ValueError(f"num_steps must be >= 1, got {num_steps}")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ValueError(f"need 0 < beta_start <= beta_end < 1, got ({beta_start}, {beta_end})")
    if num_steps == 1 and beta_start != beta_end:
        raise ValueError("a one-step schedule requires beta_start == beta_end")

    betas = np.linspace(beta_start, beta_end, num_steps, dtype=np.float64)
    alphas = 1.0 - betas
    alpha_bars = np.concatenate(([1.0], np.cumprod(alphas)))
    return NoiseSchedule(betas=betas, alphas=alphas, alpha_bars=alpha_bars)


def alpha_bar(schedule: NoiseSchedule, t: int) -> float:
    """Cumulative product of (1 - beta) up to step t; alpha_bar(s, 0) == 1."""
    if not 0 <= t <= schedule.num_steps:
        raise IndexError(f"t must lie in [0, {schedule.num_steps}], got {t}")
    return float(schedule.alpha_bars[t])


def make_plan(schedule: NoiseSchedule, num_steps: int) -> SamplingPlan:
    """Pick num_steps indices evenly spaced over [1, T], sorted descending.

    The spacing rule is ``t_i = T - floor(i * T / num_steps)`` which always
    starts at T, stays within [1, T] and is strictly decreasing; with
    num_steps == T it reproduces the full reversed range T..1.
    """
    T = schedule.num_steps
    if not 1 <= num_steps <= T:
        raise ValueError(f"num_steps must lie in [1, {T}], got {num_steps}")
    steps = tuple(T - (i * T) // num_steps for i in range(num_steps))
    return SamplingPlan(steps=steps)
