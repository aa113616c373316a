"""Flat key = value run configuration.

One `key = value` pair per line, `#` starts a comment, no nesting.
Unknown keys are rejected (naming the first offender); missing keys fall
back to documented defaults, so every accepted file yields a fully
populated RunConfig.
"""

from dataclasses import dataclass, fields
from pathlib import Path

from .schedule import NoiseSchedule, linear_beta_schedule
from .trainer import TrainConfig
from .unet import ModelConfig

__all__ = ["RunConfig", "ConfigError", "parse_config", "load_config"]


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    # schedule
    timesteps: int = 1000
    beta_start: float = 1e-4
    beta_end: float = 0.02
    # model
    base_channels: int = 32
    channel_multipliers: tuple[int, ...] = (1, 2, 4)
    res_blocks_per_resolution: int = 1
    time_embed_dim: int = 128
    attn_levels: tuple[int, ...] = ()
    cond_channels: int = 32
    # tonemap
    mu: float = 5000.0
    gamma: float = 2.2
    # training
    learning_rate: float = 2e-5
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    ema_decay: float = 0.999
    batch: int = 8
    patch_size: int = 32
    total_iters: int = 2000
    seed: int = 0
    grad_clip: float = 1.0
    use_noise_loss: bool = True
    use_image_loss: bool = True
    image_loss_kind: str = "l2"
    log_interval: int = 100
    checkpoint_interval: int = 0
    # sampler
    sample_steps: int = 25
    window: int = 512
    cell: int = 128
    sample_seed: int = 0

    def model_config(self) -> ModelConfig:
        return ModelConfig(
            base_channels=self.base_channels,
            channel_multipliers=self.channel_multipliers,
            res_blocks_per_resolution=self.res_blocks_per_resolution,
            time_embed_dim=self.time_embed_dim,
            attn_levels=self.attn_levels,
            cond_channels=self.cond_channels,
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.learning_rate,
            adam_beta1=self.adam_beta1,
            adam_beta2=self.adam_beta2,
            ema_decay=self.ema_decay,
            batch=self.batch,
            patch_size=self.patch_size,
            total_iters=self.total_iters,
            mu=self.mu,
            seed=self.seed,
            grad_clip=self.grad_clip,
            use_noise_loss=self.use_noise_loss,
            use_image_loss=self.use_image_loss,
            image_loss_kind=self.image_loss_kind,
        )

    def schedule(self) -> NoiseSchedule:
        return linear_beta_schedule(self.timesteps, self.beta_start, self.beta_end)


_BOOL_WORDS = {"true": True, "yes": True, "1": True, "on": True,
               "false": False, "no": False, "0": False, "off": False}


def _parse_value(key: str, raw: str, kind):
    raw = raw.strip()
    try:
        if kind is bool:
            word = raw.lower()
            if word not in _BOOL_WORDS:
                raise ValueError(f"not a boolean: {raw!r}")
            return _BOOL_WORDS[word]
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        if kind is str:
            return raw
        # remaining fields are integer tuples, written as comma-separated lists
        if raw == "":
            return ()
        return tuple(int(part) for part in raw.split(","))
    except ValueError as exc:
        raise ConfigError(f"config key {key!r}: {exc}") from exc


def parse_config(text: str) -> RunConfig:
    """Parse config text into a RunConfig; rejects unknown keys."""
    spec = {f.name: f.type for f in fields(RunConfig)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in spec:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate config key {key!r}")
        kind = spec[key] if spec[key] in (int, float, bool, str) else tuple
        values[key] = _parse_value(key, raw, kind)
    try:
        return RunConfig(**values)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    return parse_config(path.read_text())
