"""The complete conditional model (condition generator + noise predictor),
the named parameter store with EMA shadows, and numpy-boundary helpers
used by the sampler."""

import copy
from collections import OrderedDict

import numpy as np
import torch

from .conditioning import ConditionGenerator
from .unet import ModelConfig, NoisePredictor

__all__ = ["HdrDiffusionModel", "ParamStore", "window_predictor"]


class HdrDiffusionModel(torch.nn.Module):
    """Condition generator g and noise predictor f trained jointly.

    ``seed`` makes the random initialization reproducible without
    touching global RNG state.
    """

    def __init__(self, config: ModelConfig, seed: int | None = None,
                 zero_init_head: bool = True, identity_dfa: bool = True):
        super().__init__()
        self.config = config
        if seed is None:
            self._build(zero_init_head, identity_dfa)
        else:
            with torch.random.fork_rng():
                torch.manual_seed(seed)
                self._build(zero_init_head, identity_dfa)

    def _build(self, zero_init_head, identity_dfa):
        self.condition = ConditionGenerator(
            feat_channels=self.config.cond_channels,
            target_channels=self.config.base_channels,
            identity_init=identity_dfa,
        )
        self.unet = NoisePredictor(self.config, zero_init_head=zero_init_head)

    def encode_condition(self, y1, y2, y3) -> torch.Tensor:
        """Aligned LDR features for a batch of 6-channel frame triplets."""
        return self.condition(y1, y2, y3)

    def forward(self, x_t: torch.Tensor, t: torch.Tensor, x_tilde: torch.Tensor) -> torch.Tensor:
        """Noise prediction for (B,3,H,W) latents given aligned features."""
        mod = self.condition.dfa(x_tilde)
        return self.unet(x_t, t, mod)

    def encode_condition_numpy(self, y1: np.ndarray, y2: np.ndarray, y3: np.ndarray) -> np.ndarray:
        """Single-image (H, W, 6) frames in, (H, W, F) aligned features out."""
        frames = [torch.from_numpy(np.ascontiguousarray(y, dtype=np.float32)).permute(2, 0, 1)[None]
                  for y in (y1, y2, y3)]
        with torch.no_grad():
            feat = self.encode_condition(*frames)
        return feat[0].permute(1, 2, 0).numpy()


class ParamStore:
    """Named map over every learnable tensor, its gradient, and EMA shadow.

    Gradients live on the parameters themselves (filled in by backward);
    EMA shadows are updated only by the trainer via ``ema_update``.
    """

    def __init__(self, model: HdrDiffusionModel):
        self.model = model
        self._params = OrderedDict(model.named_parameters())
        self.ema = OrderedDict((name, p.detach().clone()) for name, p in self._params.items())

    def names(self):
        return list(self._params)

    def value(self, name: str) -> torch.Tensor:
        return self._params[name]

    def grad(self, name: str):
        return self._params[name].grad

    def ema_value(self, name: str) -> torch.Tensor:
        return self.ema[name]

    def parameters(self):
        return self._params.values()

    @torch.no_grad()
    def ema_update(self, decay: float):
        """ema <- decay * ema + (1 - decay) * param for every tensor."""
        if not 0.0 <= decay < 1.0:
            raise ValueError(f"ema decay must lie in [0, 1), got {decay}")
        for name, p in self._params.items():
            self.ema[name].mul_(decay).add_(p.detach(), alpha=1.0 - decay)

    def ema_model(self) -> HdrDiffusionModel:
        """A copy of the model carrying the EMA weights (for evaluation)."""
        twin = copy.deepcopy(self.model)
        with torch.no_grad():
            for name, p in twin.named_parameters():
                p.copy_(self.ema[name])
        twin.eval()
        return twin

    def named_numpy(self) -> OrderedDict:
        """float32 copies of parameters and EMA shadows, for checkpointing."""
        out = OrderedDict()
        for name, p in self._params.items():
            out[f"param/{name}"] = p.detach().numpy().astype(np.float32, copy=True)
        for name, shadow in self.ema.items():
            out[f"ema/{name}"] = shadow.numpy().astype(np.float32, copy=True)
        return out

    @torch.no_grad()
    def load_named_numpy(self, tensors) -> None:
        for name, p in self._params.items():
            p.copy_(torch.from_numpy(np.ascontiguousarray(tensors[f"param/{name}"])))
            self.ema[name].copy_(torch.from_numpy(np.ascontiguousarray(tensors[f"ema/{name}"])))


def window_predictor(model: HdrDiffusionModel):
    """Wrap a model as a per-window numpy predictor for the sampler.

    The returned callable maps (x_patch (h, w, 3), t, cond_patch (h, w, F))
    to the predicted noise (h, w, 3) in float64, running the network in
    float32 under no_grad.
    """
    model.eval()

    def predict(x_patch: np.ndarray, t: int, cond_patch: np.ndarray) -> np.ndarray:
        x = torch.from_numpy(np.ascontiguousarray(x_patch, dtype=np.float32)).permute(2, 0, 1)[None]
        c = torch.from_numpy(np.ascontiguousarray(cond_patch, dtype=np.float32)).permute(2, 0, 1)[None]
        with torch.no_grad():
            eps = model(x, torch.tensor([t]), c)
        return eps[0].permute(1, 2, 0).numpy().astype(np.float64)

    return predict
