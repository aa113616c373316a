"""Time-conditioned U-Net noise predictor with modulation injection at the
input feature stage.

The architecture: a 3x3 stem conv lifts the 3-channel noisy image to
``base_channels`` features, which are scaled and shifted by the condition
generator's (eta, gamma) before entering an encoder / bottleneck / decoder
of residual blocks with group normalization, per-block time-embedding
injection, self-attention at the bottleneck, and skip connections. The
output head is zero-initialized so the initial noise prediction is ~0.
"""

import math
from dataclasses import dataclass, field

import torch
import torch.nn as nn

from .conditioning import ModulationPair, dfa_apply

__all__ = [
    "ModelConfig",
    "TOY_CONFIG",
    "FULL_SCALE_CONFIG",
    "sinusoidal_time_embedding",
    "NoisePredictor",
    "count_parameters",
]


@dataclass(frozen=True)
class ModelConfig:
    """Structural hyperparameters of the noise predictor.

    ``attn_levels`` lists encoder/decoder levels that get self-attention
    after each residual block; the bottleneck always has one attention
    block regardless. Input spatial dims must be divisible by
    2**(len(channel_multipliers) - 1).
    """

    base_channels: int = 32
    channel_multipliers: tuple[int, ...] = (1, 2, 4)
    res_blocks_per_resolution: int = 1
    time_embed_dim: int = 128
    attn_levels: tuple[int, ...] = ()
    cond_channels: int = 32

    def __post_init__(self):
        if self.base_channels < 1 or self.res_blocks_per_resolution < 1:
            raise ValueError("base_channels and res_blocks_per_resolution must be >= 1")
        if not self.channel_multipliers:
            raise ValueError("channel_multipliers must be non-empty")
        if self.time_embed_dim < 1 or self.cond_channels < 1:
            raise ValueError("time_embed_dim and cond_channels must be >= 1")
        bad = [l for l in self.attn_levels if not 0 <= l < len(self.channel_multipliers)]
        if bad:
            raise ValueError(f"attn_levels out of range: {bad}")

    @property
    def downsample_factor(self) -> int:
        return 2 ** (len(self.channel_multipliers) - 1)


TOY_CONFIG = ModelConfig()

# ~75M-parameter configuration: base 128, multipliers (1,1,2,2,4,4),
# one residual block per resolution, 512-wide time embedding.
FULL_SCALE_CONFIG = ModelConfig(
    base_channels=128,
    channel_multipliers=(1, 1, 2, 2, 4, 4),
    res_blocks_per_resolution=1,
    time_embed_dim=512,
    attn_levels=(),
    cond_channels=64,
)


def sinusoidal_time_embedding(t, dim: int) -> torch.Tensor:
    """Sinusoidal embedding of timestep(s) t with geometric frequencies.

    Returns [sin(t/w_0), ..., sin(t/w_{d/2-1}), cos(t/w_0), ...] where
    w_k spans 1 .. 10000 geometrically. Accepts an int or a 1-D tensor;
    output is float64 with a trailing dim of ``dim``.
    """
    if dim % 2 != 0:
        raise ValueError(f"embedding dim must be even, got {dim}")
    if not torch.is_tensor(t):
        t = torch.tensor([t])
        squeeze = True
    else:
        squeeze = False
    half = dim // 2
    if half == 1:
        omega = torch.ones(1, dtype=torch.float64)
    else:
        exponent = torch.arange(half, dtype=torch.float64) / (half - 1)
        omega = torch.pow(torch.tensor(10000.0, dtype=torch.float64), exponent)
    angles = t.to(torch.float64)[:, None] / omega[None, :]
    emb = torch.cat([torch.sin(angles), torch.cos(angles)], dim=-1)
    return emb[0] if squeeze else emb


def _group_count(channels: int, preferred: int = 8) -> int:
    g = min(preferred, channels)
    while channels % g != 0:
        g -= 1
    return g


def _norm(channels):
    return nn.GroupNorm(_group_count(channels), channels)


class ResBlock(nn.Module):
    def __init__(self, cin, cout, temb_dim):
        super().__init__()
        self.norm1 = _norm(cin)
        self.conv1 = nn.Conv2d(cin, cout, 3, padding=1)
        self.temb_proj = nn.Linear(temb_dim, cout)
        self.norm2 = _norm(cout)
        self.conv2 = nn.Conv2d(cout, cout, 3, padding=1)
        self.skip = nn.Conv2d(cin, cout, 1) if cin != cout else nn.Identity()
        self.act = nn.SiLU()

    def forward(self, x, temb):
        h = self.conv1(self.act(self.norm1(x)))
        h = h + self.temb_proj(self.act(temb))[:, :, None, None]
        h = self.conv2(self.act(self.norm2(h)))
        return h + self.skip(x)


class SelfAttention2d(nn.Module):
    """Single-head spatial self-attention with a residual connection."""

    def __init__(self, channels):
        super().__init__()
        self.channels = channels
        self.norm = _norm(channels)
        self.qkv = nn.Conv2d(channels, 3 * channels, 1)
        self.proj = nn.Conv2d(channels, channels, 1)

    def forward(self, x):
        b, c, h, w = x.shape
        q, k, v = self.qkv(self.norm(x)).reshape(b, 3, c, h * w).unbind(dim=1)
        attn = torch.softmax(q.transpose(1, 2) @ k / math.sqrt(c), dim=-1)
        out = (v @ attn.transpose(1, 2)).reshape(b, c, h, w)
        return x + self.proj(out)


class Downsample(nn.Module):
    def __init__(self, channels):
        super().__init__()
        self.conv = nn.Conv2d(channels, channels, 3, stride=2, padding=1)

    def forward(self, x):
        return self.conv(x)


class Upsample(nn.Module):
    def __init__(self, channels):
        super().__init__()
        self.conv = nn.Conv2d(channels, channels, 3, padding=1)

    def forward(self, x):
        return self.conv(nn.functional.interpolate(x, scale_factor=2, mode="nearest"))


class NoisePredictor(nn.Module):
    def __init__(self, config: ModelConfig, in_channels: int = 3, out_channels: int = 3,
                 zero_init_head: bool = True):
        super().__init__()
        self.config = config
        base = config.base_channels
        temb = config.time_embed_dim
        mults = config.channel_multipliers
        R = config.res_blocks_per_resolution

        self.time_mlp = nn.Sequential(nn.Linear(base, temb), nn.SiLU(), nn.Linear(temb, temb))
        self.conv_in = nn.Conv2d(in_channels, base, 3, padding=1)

        self.down_blocks = nn.ModuleList()
        self.downsamples = nn.ModuleList()
        ch = base
        skip_channels = [ch]
        for level, mult in enumerate(mults):
            out_ch = base * mult
            blocks = nn.ModuleList()
            for _ in range(R):
                stage = nn.ModuleList([ResBlock(ch, out_ch, temb)])
                if level in config.attn_levels:
                    stage.append(SelfAttention2d(out_ch))
                blocks.append(stage)
                ch = out_ch
                skip_channels.append(ch)
            self.down_blocks.append(blocks)
            if level < len(mults) - 1:
                self.downsamples.append(Downsample(ch))
                skip_channels.append(ch)

        self.mid_block1 = ResBlock(ch, ch, temb)
        self.mid_attn = SelfAttention2d(ch)
        self.mid_block2 = ResBlock(ch, ch, temb)

        self.up_blocks = nn.ModuleList()
        self.upsamples = nn.ModuleList()
        for level in reversed(range(len(mults))):
            out_ch = base * mults[level]
            blocks = nn.ModuleList()
            for _ in range(R + 1):
                stage = nn.ModuleList([ResBlock(ch + skip_channels.pop(), out_ch, temb)])
                if level in config.attn_levels:
                    stage.append(SelfAttention2d(out_ch))
                blocks.append(stage)
                ch = out_ch
            self.up_blocks.append(blocks)
            if level > 0:
                self.upsamples.append(Upsample(ch))
        assert not skip_channels

        self.out_norm = _norm(ch)
        self.out_conv = nn.Conv2d(ch, out_channels, 3, padding=1)
        self.act = nn.SiLU()
        if zero_init_head:
            nn.init.zeros_(self.out_conv.weight)
            nn.init.zeros_(self.out_conv.bias)

    def forward(self, x: torch.Tensor, t: torch.Tensor, mod: ModulationPair) -> torch.Tensor:
        """Predict the noise in x given timestep(s) t and input modulation.

        x is (B, C, H, W); t is a (B,) tensor of timesteps; mod carries
        (eta, gamma) of shape (B, base_channels, H, W).
        """
        factor = self.config.downsample_factor
        if x.shape[-2] % factor or x.shape[-1] % factor:
            raise ValueError(f"spatial dims {x.shape[-2:]} not divisible by {factor}")
        temb = sinusoidal_time_embedding(t, self.config.base_channels).to(x.dtype)
        temb = self.time_mlp(temb)

        h = dfa_apply(self.conv_in(x), mod)
        skips = [h]
        for level, blocks in enumerate(self.down_blocks):
            for stage in blocks:
                h = stage[0](h, temb)
                for layer in stage[1:]:
                    h = layer(h)
                skips.append(h)
            if level < len(self.down_blocks) - 1:
                h = self.downsamples[level](h)
                skips.append(h)

        h = self.mid_block1(h, temb)
        h = self.mid_attn(h)
        h = self.mid_block2(h, temb)

        for i, blocks in enumerate(self.up_blocks):
            for stage in blocks:
                h = stage[0](torch.cat([h, skips.pop()], dim=1), temb)
                for layer in stage[1:]:
                    h = layer(h)
            if i < len(self.upsamples):
                h = self.upsamples[i](h)
        assert not skips

        return self.out_conv(self.act(self.out_norm(h)))


def count_parameters(config: ModelConfig, in_channels: int = 3, out_channels: int = 3) -> int:
    """Parameter count of NoisePredictor(config) without allocating it.

    Mirrors the constructor arithmetic exactly (verified against
    instantiated models in the test suite), so large configurations can
    be checked structurally for free.
    """
    def conv(cin, cout, k=3):
        return cin * cout * k * k + cout

    def linear(cin, cout):
        return cin * cout + cout

    def norm(ch):
        return 2 * ch

    def res_block(cin, cout, temb):
        n = norm(cin) + conv(cin, cout) + linear(temb, cout) + norm(cout) + conv(cout, cout)
        if cin != cout:
            n += conv(cin, cout, k=1)
        return n

    def attn(ch):
        return norm(ch) + conv(ch, 3 * ch, k=1) + conv(ch, ch, k=1)

    base, temb = config.base_channels, config.time_embed_dim
    mults, R = config.channel_multipliers, config.res_blocks_per_resolution

    total = linear(base, temb) + linear(temb, temb)
    total += conv(in_channels, base)

    ch = base
    skip_channels = [ch]
    for level, mult in enumerate(mults):
        out_ch = base * mult
        for _ in range(R):
            total += res_block(ch, out_ch, temb)
            if level in config.attn_levels:
                total += attn(out_ch)
            ch = out_ch
            skip_channels.append(ch)
        if level < len(mults) - 1:
            total += conv(ch, ch)  # strided downsample
            skip_channels.append(ch)

    total += res_block(ch, ch, temb) + attn(ch) + res_block(ch, ch, temb)

    for level in reversed(range(len(mults))):
        out_ch = base * mults[level]
        for _ in range(R + 1):
            total += res_block(ch + skip_channels.pop(), out_ch, temb)
            if level in config.attn_levels:
                total += attn(out_ch)
            ch = out_ch
        if level > 0:
            total += conv(ch, ch)  # upsample conv

    total += norm(ch) + conv(ch, out_channels)
    return total
