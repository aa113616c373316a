"""Scene records: a procedural multi-exposure generator for desk-scale
experiments, and a loader for on-disk scene directories.

Expected directory layout per scene:

    ldr_0.<ext>  ldr_1.<ext>  ldr_2.<ext>   three frames, lexicographic
                                            order = ascending exposure;
                                            <ext> is .hdrf or .png
    exposures.txt                           three EV stops, one per line
    gt.hdrf                                 optional ground-truth HDR
"""

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .tensorio import write_tensors, read_tensors
from .tonemap import DEFAULT_GAMMA, HdrImage, LdrSample

__all__ = ["SampleRecord", "synth_scene", "save_scene", "load_dataset_sample", "load_dataset",
           "SYNTH_EV_STOPS"]

SYNTH_EV_STOPS = (-2.0, 0.0, 2.0)

_LDR_EXTS = (".hdrf", ".png")


@dataclass(frozen=True)
class SampleRecord:
    """An exposure bracket, its optional ground-truth HDR, and a scene id."""

    ldr: LdrSample
    gt_hdr: HdrImage | None
    scene_id: str

    def __post_init__(self):
        if self.gt_hdr is not None and self.gt_hdr.shape != self.ldr.shape:
            raise ValueError(
                f"scene {self.scene_id}: ground truth {self.gt_hdr.shape} != LDR {self.ldr.shape}")


def _render_ldr(radiance: np.ndarray, ev: float, gamma: float) -> np.ndarray:
    exposed = np.minimum(1.0, radiance * 2.0**ev)
    return (exposed ** (1.0 / gamma)).clip(0.0, 1.0).astype(np.float32)


def _paint_shapes(canvas: np.ndarray, rng: np.random.Generator, count: int,
                  lo: float, hi: float) -> None:
    size = canvas.shape[0]
    for _ in range(count):
        color = rng.uniform(lo, hi, size=3)
        if rng.random() < 0.5:
            h = int(rng.integers(size // 8, size // 2))
            w = int(rng.integers(size // 8, size // 2))
            r = int(rng.integers(0, size - h + 1))
            c = int(rng.integers(0, size - w + 1))
            canvas[r:r + h, c:c + w] = color
        else:
            radius = float(rng.uniform(size / 12, size / 5))
            cy, cx = rng.uniform(radius, size - radius, size=2)
            yy, xx = np.ogrid[:size, :size]
            mask = (yy - cy) ** 2 + (xx - cx) ** 2 <= radius**2
            canvas[mask] = color


def synth_scene(seed: int, size: int = 64, motion_px: int = 4, sat_frac: float = 0.15,
                gamma: float = DEFAULT_GAMMA) -> SampleRecord:
    """Procedurally generate one dynamic multi-exposure scene.

    The ground truth is a smooth radiance gradient overlaid with random
    rectangles and disks. Three LDR frames are rendered at EV stops
    (-2, 0, +2) via clip(min(1, gt * 2^EV) ** (1/gamma)); the low and
    high frames view the scene translated by up to ``motion_px`` pixels
    (wrap-around), simulating object or camera motion against the middle
    reference. Bright shapes are added until at least ``sat_frac`` of the
    high-exposure frame's entries saturate at 1.0. Deterministic in seed.
    """
    if size < 4:
        raise ValueError(f"size must be >= 4, got {size}")
    if motion_px < 0:
        raise ValueError(f"motion_px must be >= 0, got {motion_px}")
    if not 0.0 <= sat_frac < 1.0:
        raise ValueError(f"sat_frac must lie in [0, 1), got {sat_frac}")

    rng = np.random.default_rng(seed)

    # smooth background: oriented ramp plus a soft sinusoidal bump per channel
    yy, xx = np.mgrid[:size, :size] / max(size - 1, 1)
    gt = np.zeros((size, size, 3), dtype=np.float64)
    for ch in range(3):
        a, b = rng.uniform(-0.15, 0.15, size=2)
        phase = rng.uniform(0, 2 * math.pi)
        freq = rng.uniform(1.0, 2.5)
        gt[..., ch] = 0.18 + a * xx + b * yy + 0.08 * np.sin(freq * math.pi * xx + phase)
    gt = gt.clip(0.02, 0.6)

    _paint_shapes(gt, rng, count=int(rng.integers(4, 8)), lo=0.05, hi=1.0)

    # saturation floor: the +2 EV frame clips where radiance >= 0.25
    high_ev = SYNTH_EV_STOPS[2]
    while np.mean(gt * 2.0**high_ev >= 1.0) < sat_frac:
        _paint_shapes(gt, rng, count=1, lo=0.35, hi=1.0)

    gt = gt.clip(0.0, 1.0).astype(np.float32)

    shifts = {}
    for i in (0, 2):
        dy, dx = rng.integers(-motion_px, motion_px + 1, size=2)
        shifts[i] = np.roll(gt, (int(dy), int(dx)), axis=(0, 1))

    ldrs = (
        _render_ldr(shifts[0], SYNTH_EV_STOPS[0], gamma),
        _render_ldr(gt, SYNTH_EV_STOPS[1], gamma),
        _render_ldr(shifts[2], SYNTH_EV_STOPS[2], gamma),
    )
    exposures = tuple(2.0**ev for ev in SYNTH_EV_STOPS)
    return SampleRecord(
        ldr=LdrSample(ldrs=ldrs, exposures=exposures, gamma=gamma),
        gt_hdr=HdrImage(gt),
        scene_id=f"synth-{seed:08d}",
    )


def save_scene(record: SampleRecord, scene_dir) -> None:
    """Write a record to disk in the documented directory layout."""
    scene_dir = Path(scene_dir)
    scene_dir.mkdir(parents=True, exist_ok=True)
    for i, ldr in enumerate(record.ldr.ldrs):
        write_tensors(scene_dir / f"ldr_{i}.hdrf", {"ldr": ldr})
    evs = [math.log2(e) for e in record.ldr.exposures]
    (scene_dir / "exposures.txt").write_text("".join(f"{ev:g}\n" for ev in evs))
    if record.gt_hdr is not None:
        write_tensors(scene_dir / "gt.hdrf", {"hdr": record.gt_hdr.data})


def _read_image(path: Path) -> np.ndarray:
    if path.suffix == ".hdrf":
        tensors = read_tensors(path)
        return next(iter(tensors.values()))
    if path.suffix == ".png":
        from PIL import Image

        with Image.open(path) as img:
            arr = np.asarray(img.convert("RGB"), dtype=np.float32) / 255.0
        return arr
    raise ValueError(f"unsupported image format: {path}")


def load_dataset_sample(scene_dir, gamma: float = DEFAULT_GAMMA) -> SampleRecord:
    """Load one scene directory into a SampleRecord.

    Exposure stops are converted via 2^EV and normalized so the middle
    frame is 1. Missing or malformed files raise errors naming the path.
    """
    scene_dir = Path(scene_dir)
    if not scene_dir.is_dir():
        raise FileNotFoundError(f"scene directory not found: {scene_dir}")

    ldr_paths = sorted(p for p in scene_dir.iterdir()
                       if p.suffix in _LDR_EXTS and p.name.startswith("ldr"))
    if len(ldr_paths) != 3:
        raise ValueError(f"{scene_dir}: expected exactly 3 LDR images, found {len(ldr_paths)}")

    exposure_file = scene_dir / "exposures.txt"
    if not exposure_file.exists():
        raise FileNotFoundError(f"missing exposure file: {exposure_file}")
    try:
        stops = [float(line) for line in exposure_file.read_text().split()]
    except ValueError as exc:
        raise ValueError(f"{exposure_file}: cannot parse EV stops: {exc}") from exc
    if len(stops) != 3:
        raise ValueError(f"{exposure_file}: expected 3 EV stops, found {len(stops)}")
    exposures = tuple(2.0**ev / 2.0 ** stops[1] for ev in stops)

    ldrs = tuple(_read_image(p) for p in ldr_paths)

    gt_path = scene_dir / "gt.hdrf"
    gt = HdrImage(next(iter(read_tensors(gt_path).values()))) if gt_path.exists() else None

    return SampleRecord(ldr=LdrSample(ldrs=ldrs, exposures=exposures, gamma=gamma),
                        gt_hdr=gt, scene_id=scene_dir.name)


def load_dataset(root, gamma: float = DEFAULT_GAMMA) -> list[SampleRecord]:
    """Load every scene subdirectory under root, ordered by name."""
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"dataset directory not found: {root}")
    scene_dirs = sorted(p for p in root.iterdir() if p.is_dir())
    if not scene_dirs:
        raise ValueError(f"no scene subdirectories under {root}")
    return [load_dataset_sample(p, gamma=gamma) for p in scene_dirs]
