"""Sliding-window noise estimation (SWNE) inference.

At every reverse timestep the noise predictor runs on overlapping p x p
windows whose origins advance by one grid cell (r pixels); per-pixel
estimates are accumulated into (theta, counts) and averaged, and the
smoothed whole-image noise drives a deterministic implicit reverse step.
Conditioning features are encoded once at full resolution and sliced per
window. The final tonemapped estimate is expanded back to linear HDR.
"""

from dataclasses import dataclass

import numpy as np

from .diffusion import LatentState, ddim_step
from .model import HdrDiffusionModel, ParamStore, window_predictor
from .schedule import NoiseSchedule, make_plan
from .tonemap import DEFAULT_MU, HdrImage, LdrSample, assemble_condition_input, mu_law_expand

__all__ = ["WindowPlan", "NoiseAccumulator", "window_plan", "accumulate_noise",
           "swne_estimate", "swne_sample"]


@dataclass(frozen=True)
class WindowPlan:
    """Window geometry covering an H x W image.

    ``offsets`` are (row, col) window origins in row-major order. Origins
    advance by exactly ``cell`` except the final origin per axis, which is
    clamped so the window stays in bounds. When the requested window does
    not fit the image, a single full-image window is used and win_h/win_w
    reflect the actual (possibly non-square) size.
    """

    window: int
    cell: int
    image_shape: tuple[int, int]
    win_h: int
    win_w: int
    offsets: tuple[tuple[int, int], ...]


def _axis_origins(dim: int, window: int, cell: int) -> list[int]:
    origins = list(range(0, dim - window + 1, cell))
    if origins[-1] != dim - window:
        origins.append(dim - window)
    return origins


def window_plan(height: int, width: int, window: int, cell: int) -> WindowPlan:
    """Enumerate window origins so that every pixel is covered at least once."""
    if height < 1 or width < 1:
        raise ValueError(f"image dims must be positive, got {height}x{width}")
    if not 1 <= cell <= window:
        raise ValueError(f"need window >= cell >= 1, got window={window}, cell={cell}")
    if window > height or window > width:
        return WindowPlan(window=window, cell=cell, image_shape=(height, width),
                          win_h=height, win_w=width, offsets=((0, 0),))
    offsets = tuple((r, c)
                    for r in _axis_origins(height, window, cell)
                    for c in _axis_origins(width, window, cell))
    return WindowPlan(window=window, cell=cell, image_shape=(height, width),
                      win_h=window, win_w=window, offsets=offsets)


@dataclass
class NoiseAccumulator:
    """Cumulative per-pixel noise estimates and visit counts."""

    theta: np.ndarray
    counts: np.ndarray

    def mean(self) -> np.ndarray:
        if (self.counts == 0).any():
            raise RuntimeError("coverage hole: some pixels received no noise estimate")
        return self.theta / self.counts


def accumulate_noise(x_t: np.ndarray, cond: np.ndarray, t: int, plan: WindowPlan,
                     predictor) -> NoiseAccumulator:
    """Run the predictor over every window, summing estimates and counts.

    Windows are visited in the plan's fixed row-major order so the
    floating-point accumulation is reproducible.
    """
    if x_t.shape[:2] != plan.image_shape:
        raise ValueError(f"latent shape {x_t.shape[:2]} != plan shape {plan.image_shape}")
    if cond.shape[:2] != x_t.shape[:2]:
        raise ValueError(f"condition dims {cond.shape[:2]} != latent dims {x_t.shape[:2]}")
    theta = np.zeros(x_t.shape, dtype=np.float64)
    counts = np.zeros(x_t.shape, dtype=np.int64)
    for r, c in plan.offsets:
        rows = slice(r, r + plan.win_h)
        cols = slice(c, c + plan.win_w)
        eps = predictor(x_t[rows, cols], t, cond[rows, cols])
        if eps.shape != theta[rows, cols].shape:
            raise ValueError(f"predictor returned shape {eps.shape} for window {theta[rows, cols].shape}")
        theta[rows, cols] += eps
        counts[rows, cols] += 1
    return NoiseAccumulator(theta=theta, counts=counts)


def swne_estimate(x_t: np.ndarray, cond: np.ndarray, t: int, plan: WindowPlan, predictor) -> np.ndarray:
    """Smoothed whole-image noise estimate: windowed accumulation then mean."""
    return accumulate_noise(x_t, cond, t, plan, predictor).mean()


def swne_sample(sample: LdrSample, store: ParamStore | HdrDiffusionModel | None,
                schedule: NoiseSchedule, window: int = 512, cell: int = 128,
                steps: int = 25, seed: int = 0, mu: float = DEFAULT_MU,
                use_ema: bool = True, predictor=None, cond: np.ndarray | None = None,
                return_trace: bool = False):
    """Full inference: from seeded Gaussian noise to a linear HDR image.

    The condition is encoded exactly once at full resolution. Each plan
    step estimates noise via SWNE and applies a deterministic implicit
    reverse step with x0 clipping; the final tonemapped image is expanded
    through the inverse mu-law.

    ``predictor`` and ``cond`` may be injected (e.g. analytic predictors
    in tests); otherwise both are built from the stored model, using its
    EMA weights by default. With ``return_trace`` the per-step latents
    are returned alongside the image.
    """
    height, width = sample.shape[:2]
    if predictor is None or cond is None:
        if store is None:
            raise ValueError("need a model/ParamStore unless predictor and cond are injected")
        if isinstance(store, ParamStore):
            model = store.ema_model() if use_ema else store.model
        else:
            model = store
        if cond is None:
            cond = model.encode_condition_numpy(*assemble_condition_input(sample))
        if predictor is None:
            predictor = window_predictor(model)

    if not 1 <= steps <= schedule.num_steps:
        raise ValueError(f"steps must lie in [1, {schedule.num_steps}], got {steps}")
    plan = window_plan(height, width, window, cell)
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((height, width, 3))

    trace = []
    for t, t_prev in make_plan(schedule, steps).transitions():
        theta = swne_estimate(x, cond, t, plan, predictor)
        x = ddim_step(x, t, t_prev, theta, schedule, clip=True)
        if not np.all(np.isfinite(x)):
            raise FloatingPointError(f"non-finite latent after step t={t} -> {t_prev}")
        if return_trace:
            trace.append(LatentState(x=x.copy(), t=t_prev))

    hdr = HdrImage(mu_law_expand(x.clip(0.0, 1.0), mu).astype(np.float32))
    return (hdr, trace) if return_trace else hdr
