"""Feature condition generator: attention-based implicit alignment of the
LDR frames plus the domain-feature-alignment mapping that turns aligned
features into per-pixel affine modulation (eta, gamma)."""

from typing import NamedTuple

import torch
import torch.nn as nn

__all__ = ["ModulationPair", "AttentionAlign", "DfaMapper", "ConditionGenerator", "dfa_apply"]


class ModulationPair(NamedTuple):
    """Per-pixel scale and shift applied to a feature map."""

    eta: torch.Tensor
    gamma: torch.Tensor


def _conv(cin, cout):
    # reflective padding keeps spatial dims and avoids zero-border bias
    return nn.Conv2d(cin, cout, kernel_size=3, padding=1, padding_mode="reflect")


class AttentionAlign(nn.Module):
    """Reference-guided soft gating of the non-reference frames.

    All three 6-channel frames pass through one shared feature conv. For
    each non-reference frame a soft attention map in (0, 1) is computed
    from its features concatenated with the reference features; gated
    features are merged into a single aligned feature map. Stride-1
    convolutions throughout, so spatial dims are preserved.
    """

    def __init__(self, feat_channels: int = 32, frame_channels: int = 6):
        super().__init__()
        self.feat_channels = feat_channels
        self.frame_conv = _conv(frame_channels, feat_channels)
        self.att1 = _conv(2 * feat_channels, feat_channels)
        self.att2 = _conv(feat_channels, feat_channels)
        self.merge = _conv(3 * feat_channels, feat_channels)

    def attention_map(self, feat: torch.Tensor, ref: torch.Tensor) -> torch.Tensor:
        return torch.sigmoid(self.att2(self.att1(torch.cat([feat, ref], dim=1))))

    def forward(self, y1: torch.Tensor, y2: torch.Tensor, y3: torch.Tensor) -> torch.Tensor:
        if y1.shape != y2.shape or y2.shape != y3.shape:
            raise ValueError(f"frame shapes differ: {y1.shape}, {y2.shape}, {y3.shape}")
        f1 = self.frame_conv(y1)
        f2 = self.frame_conv(y2)
        f3 = self.frame_conv(y3)
        f1 = self.attention_map(f1, f2) * f1
        f3 = self.attention_map(f3, f2) * f3
        return self.merge(torch.cat([f1, f2, f3], dim=1))


class DfaMapper(nn.Module):
    """Two consecutive convolutions mapping aligned features to (eta, gamma).

    With ``identity_init`` the second conv starts at zero weights with a
    bias of 1 on the eta half and 0 on the gamma half, so modulation is
    the identity at initialization and cannot zero out the noise
    predictor's features early in training.
    """

    def __init__(self, feat_channels: int, target_channels: int, identity_init: bool = True):
        super().__init__()
        self.target_channels = target_channels
        self.conv1 = _conv(feat_channels, feat_channels)
        self.act = nn.ReLU()
        self.conv2 = _conv(feat_channels, 2 * target_channels)
        if identity_init:
            nn.init.zeros_(self.conv2.weight)
            with torch.no_grad():
                self.conv2.bias[:target_channels].fill_(1.0)
                self.conv2.bias[target_channels:].fill_(0.0)

    def forward(self, x_tilde: torch.Tensor) -> ModulationPair:
        out = self.conv2(self.act(self.conv1(x_tilde)))
        eta, gamma = torch.split(out, self.target_channels, dim=1)
        return ModulationPair(eta=eta, gamma=gamma)


def dfa_apply(feat: torch.Tensor, mod: ModulationPair) -> torch.Tensor:
    """Elementwise affine modulation eta * feat + gamma."""
    if feat.shape != mod.eta.shape or feat.shape != mod.gamma.shape:
        raise ValueError(f"modulation shape {mod.eta.shape} does not match features {feat.shape}")
    return mod.eta * feat + mod.gamma


class ConditionGenerator(nn.Module):
    """Attention alignment followed by the DFA mapping."""

    def __init__(self, feat_channels: int = 32, target_channels: int = 32,
                 frame_channels: int = 6, identity_init: bool = True):
        super().__init__()
        self.align = AttentionAlign(feat_channels, frame_channels)
        self.dfa = DfaMapper(feat_channels, target_channels, identity_init)

    def forward(self, y1, y2, y3) -> torch.Tensor:
        return self.align(y1, y2, y3)
