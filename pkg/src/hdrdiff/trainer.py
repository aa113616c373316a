"""Training loop: combined noise/image-space losses, Adam updates with
gradient clipping, EMA shadow tracking, metrics logging and checkpoints.
"""

import time
from collections import OrderedDict
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .diffusion import predict_x0
from .model import HdrDiffusionModel, ParamStore
from .schedule import NoiseSchedule, linear_beta_schedule
from .tensorio import read_tensors, write_tensors
from .tonemap import DEFAULT_GAMMA, DEFAULT_MU, assemble_condition_input, mu_law_compress
from .unet import ModelConfig

__all__ = ["TrainConfig", "LossReport", "TrainingDiverged", "loss_noise", "loss_image",
           "train_step", "Trainer", "save_checkpoint", "load_checkpoint", "restore_optimizer"]


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 2e-5
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    ema_decay: float = 0.999
    batch: int = 8
    patch_size: int = 32
    total_iters: int = 2000
    mu: float = DEFAULT_MU
    seed: int = 0
    grad_clip: float = 1.0
    use_noise_loss: bool = True
    use_image_loss: bool = True
    image_loss_kind: str = "l2"

    def __post_init__(self):
        if not 0.0 <= self.ema_decay < 1.0:
            raise ValueError(f"ema_decay must lie in [0, 1), got {self.ema_decay}")
        if self.batch < 1 or self.patch_size < 1 or self.total_iters < 1:
            raise ValueError("batch, patch_size and total_iters must be >= 1")
        if self.image_loss_kind not in ("l2", "l1"):
            raise ValueError(f"image_loss_kind must be 'l2' or 'l1', got {self.image_loss_kind!r}")
        if not (self.use_noise_loss or self.use_image_loss):
            raise ValueError("at least one loss term must be enabled")


@dataclass(frozen=True)
class LossReport:
    """Loss values of one step; loss_total is the optimized sum of the
    enabled terms (disabled terms are reported as 0)."""

    loss_noise: float
    loss_image: float
    loss_total: float


class TrainingDiverged(RuntimeError):
    """Raised when a step produces a non-finite loss; no update is applied."""


def loss_noise(eps, eps_hat):
    """Mean squared error between true and predicted noise."""
    if tuple(eps.shape) != tuple(eps_hat.shape):
        raise ValueError(f"shape mismatch {tuple(eps.shape)} vs {tuple(eps_hat.shape)}")
    return ((eps - eps_hat) ** 2).mean()


def loss_image(x0, x_t, eps_hat, t: int, schedule: NoiseSchedule, kind: str = "l2"):
    """Image-space loss: error between x0 and the x0 implied by eps_hat.

    The schedule coefficients and x_t are constants for differentiation,
    so gradients flow only through eps_hat. Uses the unclipped x0
    estimate so gradients stay exact.
    """
    if tuple(x0.shape) != tuple(x_t.shape) or tuple(x0.shape) != tuple(eps_hat.shape):
        raise ValueError("x0, x_t and eps_hat must share one shape")
    x0_hat = predict_x0(x_t, t, eps_hat, schedule, clip=False)
    diff = x0_hat - x0
    if kind == "l2":
        return (diff**2).mean()
    if kind == "l1":
        return abs(diff).mean()
    raise ValueError(f"unknown image loss kind {kind!r}")


def _gather_coeff(table: np.ndarray, t: np.ndarray) -> torch.Tensor:
    return torch.from_numpy(table[t].astype(np.float32)).reshape(-1, 1, 1, 1)


def train_step(batch_x0: torch.Tensor, batch_cond: torch.Tensor, store: ParamStore,
               config: TrainConfig, rng: np.random.Generator, optimizer: torch.optim.Optimizer,
               schedule: NoiseSchedule) -> LossReport:
    """One gradient step of the combined objective on a prepared batch.

    ``batch_x0`` is (B, 3, h, w) in the tonemapped domain; ``batch_cond``
    is the aligned-feature batch and may carry an autograd graph into the
    condition generator (the caller zeroes gradients before building it).
    Per element, a timestep is drawn uniformly from {1..T} and Gaussian
    noise from ``rng``; the noisy latent is formed in closed form and the
    enabled losses are accumulated, followed by one clipped Adam update
    and an EMA shadow update.
    """
    B = batch_x0.shape[0]
    T = schedule.num_steps
    t = rng.integers(1, T + 1, size=B)
    eps = torch.from_numpy(rng.standard_normal(tuple(batch_x0.shape), dtype=np.float32))

    sqrt_ab = _gather_coeff(np.sqrt(schedule.alpha_bars), t)
    sqrt_1m = _gather_coeff(np.sqrt(1.0 - schedule.alpha_bars), t)
    x_t = sqrt_ab * batch_x0 + sqrt_1m * eps

    t_tensor = torch.from_numpy(t.astype(np.int64))
    eps_hat = store.model(x_t, t_tensor, batch_cond)

    noise_val = torch.zeros(())
    image_val = torch.zeros(())
    if config.use_noise_loss:
        noise_val = loss_noise(eps, eps_hat)
    if config.use_image_loss:
        x0_hat = (x_t - sqrt_1m * eps_hat) / sqrt_ab
        diff = x0_hat - batch_x0
        image_val = (diff**2).mean() if config.image_loss_kind == "l2" else diff.abs().mean()
    total = noise_val + image_val

    noise_f, image_f, total_f = (float(v.detach()) for v in (noise_val, image_val, total))
    if not np.isfinite(total_f):
        raise TrainingDiverged(
            f"non-finite loss (noise={noise_f}, image={image_f}); step aborted")

    total.backward()
    if config.grad_clip > 0:
        torch.nn.utils.clip_grad_norm_(store.parameters(), config.grad_clip)
    optimizer.step()
    store.ema_update(config.ema_decay)
    return LossReport(loss_noise=noise_f, loss_image=image_f, loss_total=total_f)


class Trainer:
    """Drives training over a list of scene records.

    Per-scene tensors (tonemapped ground truth and the three 6-channel
    condition frames) are prepared once; every step samples scenes and
    patch origins from the config seed's RNG, so a fixed seed replays the
    exact loss trajectory on one thread.
    """

    def __init__(self, model: HdrDiffusionModel, schedule: NoiseSchedule, config: TrainConfig,
                 dataset, log_file=None):
        patch = config.patch_size
        if patch % model.config.downsample_factor != 0:
            raise ValueError(f"patch_size {patch} not divisible by {model.config.downsample_factor}")
        self.model = model
        self.schedule = schedule
        self.config = config
        self.store = ParamStore(model)
        self.optimizer = torch.optim.Adam(
            self.store.parameters(), lr=config.learning_rate,
            betas=(config.adam_beta1, config.adam_beta2))
        self.rng = np.random.default_rng(config.seed)
        self.iteration = 0
        self.log_file = Path(log_file) if log_file else None

        self._scenes = []
        for rec in dataset:
            if rec.gt_hdr is None:
                raise ValueError(f"scene {rec.scene_id}: training needs ground-truth HDR")
            h, w = rec.ldr.shape[:2]
            if h < patch or w < patch:
                raise ValueError(f"scene {rec.scene_id}: {h}x{w} smaller than patch {patch}")
            x0 = mu_law_compress(rec.gt_hdr.data, config.mu).astype(np.float32)
            self._scenes.append((x0, assemble_condition_input(rec.ldr)))
        if not self._scenes:
            raise ValueError("training dataset is empty")

    def _draw_batch(self):
        patch, B = self.config.patch_size, self.config.batch
        idx = self.rng.integers(0, len(self._scenes), size=B)
        x0s, y1s, y2s, y3s = [], [], [], []
        for i in idx:
            x0, (y1, y2, y3) = self._scenes[i]
            h, w = x0.shape[:2]
            r = int(self.rng.integers(0, h - patch + 1))
            c = int(self.rng.integers(0, w - patch + 1))
            win = (slice(r, r + patch), slice(c, c + patch))
            x0s.append(x0[win])
            y1s.append(y1[win])
            y2s.append(y2[win])
            y3s.append(y3[win])

        def stack(arrs):
            return torch.from_numpy(np.stack(arrs)).permute(0, 3, 1, 2).contiguous()

        return stack(x0s), stack(y1s), stack(y2s), stack(y3s)

    def step(self) -> LossReport:
        self.optimizer.zero_grad(set_to_none=True)
        x0, y1, y2, y3 = self._draw_batch()
        cond = self.model.encode_condition(y1, y2, y3)
        report = train_step(x0, cond, self.store, self.config, self.rng,
                            self.optimizer, self.schedule)
        self.iteration += 1
        return report

    def run(self, iters: int | None = None, log_interval: int = 100,
            checkpoint_interval: int = 0, checkpoint_path=None, quiet: bool = True):
        """Run ``iters`` steps (default: config.total_iters), logging one
        metrics line per interval and optionally checkpointing."""
        iters = self.config.total_iters if iters is None else iters
        start = time.perf_counter()
        last = None
        for _ in range(iters):
            last = self.step()
            if log_interval and self.iteration % log_interval == 0:
                line = (f"iter={self.iteration} loss_noise={last.loss_noise:.6f} "
                        f"loss_image={last.loss_image:.6f} loss_total={last.loss_total:.6f} "
                        f"wall={time.perf_counter() - start:.2f}")
                if self.log_file:
                    with self.log_file.open("a") as fh:
                        fh.write(line + "\n")
                if not quiet:
                    print(line)
            if checkpoint_interval and checkpoint_path and self.iteration % checkpoint_interval == 0:
                self.save(checkpoint_path)
        return last

    def save(self, path):
        save_checkpoint(path, self.store, self.optimizer, self.model.config,
                        schedule=self.schedule, mu=self.config.mu, iteration=self.iteration)


def _scalar(x):
    return np.asarray(x, dtype=np.float32)


def save_checkpoint(path, store: ParamStore, optimizer, model_config: ModelConfig,
                    schedule: NoiseSchedule | None = None, mu: float = DEFAULT_MU,
                    gamma: float = DEFAULT_GAMMA, iteration: int = 0) -> None:
    """Serialize parameters, EMA shadows, Adam moments and the structural
    configuration into one tensor container."""
    tensors = OrderedDict()
    tensors["cfg/base_channels"] = _scalar(model_config.base_channels)
    tensors["cfg/channel_multipliers"] = _scalar(model_config.channel_multipliers)
    tensors["cfg/res_blocks_per_resolution"] = _scalar(model_config.res_blocks_per_resolution)
    tensors["cfg/time_embed_dim"] = _scalar(model_config.time_embed_dim)
    tensors["cfg/attn_levels"] = _scalar(list(model_config.attn_levels))
    tensors["cfg/cond_channels"] = _scalar(model_config.cond_channels)
    tensors["cfg/mu"] = _scalar(mu)
    tensors["cfg/gamma"] = _scalar(gamma)
    tensors["train/iteration"] = _scalar(iteration)
    if schedule is not None:
        tensors["cfg/timesteps"] = _scalar(schedule.num_steps)
        tensors["cfg/beta_start"] = _scalar(schedule.betas[0])
        tensors["cfg/beta_end"] = _scalar(schedule.betas[-1])
    tensors.update(store.named_numpy())
    if optimizer is not None:
        for name, param in zip(store.names(), store.parameters()):
            state = optimizer.state.get(param)
            if state:
                tensors[f"adam/{name}/exp_avg"] = state["exp_avg"].numpy().astype(np.float32)
                tensors[f"adam/{name}/exp_avg_sq"] = state["exp_avg_sq"].numpy().astype(np.float32)
                tensors[f"adam/{name}/step"] = _scalar(float(state["step"]))
    write_tensors(path, tensors)


def load_checkpoint(path):
    """Rebuild (model, store, tensors) from a checkpoint file.

    ``tensors`` is the raw container content; schedule/tonemap settings
    and Adam moments can be recovered from it (see restore_optimizer).
    """
    tensors = read_tensors(path)
    config = ModelConfig(
        base_channels=int(tensors["cfg/base_channels"]),
        channel_multipliers=tuple(int(m) for m in np.atleast_1d(tensors["cfg/channel_multipliers"])),
        res_blocks_per_resolution=int(tensors["cfg/res_blocks_per_resolution"]),
        time_embed_dim=int(tensors["cfg/time_embed_dim"]),
        attn_levels=tuple(int(a) for a in np.atleast_1d(tensors["cfg/attn_levels"])),
        cond_channels=int(tensors["cfg/cond_channels"]),
    )
    model = HdrDiffusionModel(config, seed=0)
    store = ParamStore(model)
    store.load_named_numpy(tensors)
    return model, store, tensors


def schedule_from_checkpoint(tensors) -> NoiseSchedule:
    return linear_beta_schedule(int(tensors["cfg/timesteps"]),
                                float(tensors["cfg/beta_start"]),
                                float(tensors["cfg/beta_end"]))


def restore_optimizer(optimizer, store: ParamStore, tensors) -> None:
    """Load saved Adam moments back into a freshly built optimizer."""
    for name, param in zip(store.names(), store.parameters()):
        key = f"adam/{name}/exp_avg"
        if key in tensors:
            optimizer.state[param] = {
                "step": torch.tensor(float(tensors[f"adam/{name}/step"])),
                "exp_avg": torch.from_numpy(np.ascontiguousarray(tensors[key])),
                "exp_avg_sq": torch.from_numpy(np.ascontiguousarray(tensors[f"adam/{name}/exp_avg_sq"])),
            }
