"""Synthetic scene generation for training and evaluating axial magnifiers.

A sample is built from a stack of layers (background plus masked
foregrounds), each translated independently between the first frame, the
next frame, and the magnified target frame. The magnified target uses the
axially magnified translation: the component of each layer's motion along
the chosen axis scaled by one factor, the orthogonal component by another.
Per-pixel factor maps are assembled from the first frame's masks, topmost
layer winning.

Everything is seeded: sample ``i`` of a dataset draws from an RNG keyed by
``(seed, i)``, so serial and parallel generation produce bit-identical
datasets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from . import axtf
from .imaging import (
    NoiseSpec,
    add_noise,
    load_frame,
    quantize_with_dither,
    save_frame,
    translate_bilinear,
)

EVAL_MODES = ("none", "subpixel", "subpixel-generic", "noise")

SUBPIXEL_LEVELS = 15
NOISE_LEVELS = 21
AMPLIFIED_TARGET_PX = 10.0
NOISE_EVAL_MOTION_PX = 0.05


@dataclass(frozen=True)
class DatasetConfig:
    count: int = 1
    seed: int = 0
    size: int = 384
    k_min: int = 8  # total layers including the background
    k_max: int = 15
    alpha_min: float = 1.0
    alpha_max: float = 80.0
    angle_min: float = 0.0
    angle_max: float = 90.0
    source: str = "procedural"  # or "directories"
    image_dir: str | None = None
    mask_dir: str | None = None
    eval_mode: str = "none"
    share_dither_seed: bool = False

    def __post_init__(self):
        if self.eval_mode not in EVAL_MODES:
            raise ValueError(f"unknown eval_mode {self.eval_mode!r}")
        if self.source not in ("procedural", "directories"):
            raise ValueError(f"unknown source {self.source!r}")
        if self.k_min < 2 or self.k_max < self.k_min:
            raise ValueError("need k_max >= k_min >= 2")
        if not (1.0 <= self.alpha_min <= self.alpha_max):
            raise ValueError("factor range must satisfy 1 <= alpha_min <= alpha_max")

    @property
    def levels(self) -> int:
        if self.eval_mode == "noise":
            return NOISE_LEVELS
        if self.eval_mode in ("subpixel", "subpixel-generic"):
            return SUBPIXEL_LEVELS
        return 1

    @property
    def total_count(self) -> int:
        # for eval modes, `count` is samples per level
        return self.count * self.levels


@dataclass
class Layer:
    image: np.ndarray  # (H, W, 3) in [0, 1]
    mask: np.ndarray  # (H, W) in {0, 1}


@dataclass
class LayerStack:
    layers: list

    def __post_init__(self):
        if not self.layers:
            raise ValueError("stack needs at least a background layer")
        dims = self.layers[0].image.shape[:2]
        if not np.all(self.layers[0].mask == 1.0):
            raise ValueError("background mask must be all ones")
        for layer in self.layers:
            if layer.image.shape[:2] != dims or layer.mask.shape != dims:
                raise ValueError("layer dimensions disagree")


@dataclass
class MotionAssignment:
    translations: np.ndarray  # (K, 2) pixel translations (dx, dy)
    factors: np.ndarray  # (K, 2) factors along (axis, orthogonal)
    angle_deg: float


@dataclass
class TrainSample:
    i1: np.ndarray
    i2: np.ndarray
    i_mag: np.ndarray
    angle_deg: float
    mag_map: np.ndarray  # (H, W, 2)
    meta: MotionAssignment


def axis_vector(angle_deg) -> np.ndarray:
    a = math.radians(angle_deg)
    return np.array([math.cos(a), math.sin(a)])


def magnified_translation(d, alpha, angle_deg) -> np.ndarray:
    """Scale a translation's axial components independently.

    Projects ``d`` onto the unit direction at ``angle_deg`` and its
    orthogonal, scales the components by ``alpha = (a_par, a_perp)``, and
    re-embeds: ``a_par*(d.p)p + a_perp*(d.q)q``.
    """
    d = np.asarray(d, dtype=np.float64)
    if not np.all(np.isfinite(d)) or not np.isfinite(angle_deg):
        raise ValueError("non-finite translation or angle")
    p = axis_vector(angle_deg)
    q = np.array([-p[1], p[0]])
    return alpha[0] * (d @ p) * p + alpha[1] * (d @ q) * q


def motion_bound(alpha_pair) -> float:
    """Per-component translation cap: min(10, 30 / max factor)."""
    return min(10.0, 30.0 / max(alpha_pair))


def _normalize_texture(rng, t, low=0.1, high=0.9):
    t = t - t.min()
    span = t.max()
    if span < 1e-9:
        return np.full_like(t, 0.5)
    t = t / span
    lo = rng.uniform(0.0, low)
    hi = rng.uniform(high, 1.0)
    return lo + t * (hi - lo)


def _procedural_texture(rng, dims) -> np.ndarray:
    h, w = dims
    style = rng.integers(0, 3)
    out = np.empty((h, w, 3))
    if style == 0:  # band-limited noise
        sigma = rng.uniform(0.6, 2.5)
        for c in range(3):
            out[:, :, c] = _normalize_texture(rng, gaussian_filter(rng.random((h, w)), sigma))
    elif style == 1:  # gradient plus fine noise
        theta = rng.uniform(0, 2 * np.pi)
        yy, xx = np.mgrid[0:h, 0:w]
        g = (np.cos(theta) * xx + np.sin(theta) * yy) / max(h, w)
        for c in range(3):
            noise = gaussian_filter(rng.random((h, w)), rng.uniform(0.6, 1.5))
            out[:, :, c] = _normalize_texture(rng, g * rng.uniform(0.5, 1.0) + noise * 0.6)
    else:  # oriented waves over noise
        yy, xx = np.mgrid[0:h, 0:w]
        acc = np.zeros((h, w))
        for _ in range(rng.integers(2, 5)):
            theta = rng.uniform(0, 2 * np.pi)
            lam = rng.uniform(6, 40)
            phase = rng.uniform(0, 2 * np.pi)
            acc += rng.uniform(0.3, 1.0) * np.sin(
                2 * np.pi * (np.cos(theta) * xx + np.sin(theta) * yy) / lam + phase
            )
        base = gaussian_filter(rng.random((h, w)), 1.2)
        for c in range(3):
            out[:, :, c] = _normalize_texture(rng, acc * rng.uniform(0.4, 1.0) + base)
    return out.astype(np.float32)


def _blob_mask(rng, dims) -> np.ndarray:
    h, w = dims
    r0 = rng.uniform(0.10, 0.22) * min(h, w)
    cy = rng.uniform(r0, h - r0)
    cx = rng.uniform(r0, w - r0)
    n_harm = rng.integers(2, 5)
    amps = rng.uniform(0.0, 0.25, n_harm)
    phases = rng.uniform(0, 2 * np.pi, n_harm)
    yy, xx = np.mgrid[0:h, 0:w]
    theta = np.arctan2(yy - cy, xx - cx)
    radius = r0 * (
        1.0 + sum(a * np.cos((j + 2) * theta + p) for j, (a, p) in enumerate(zip(amps, phases)))
    )
    mask = (np.hypot(yy - cy, xx - cx) <= radius).astype(np.float32)
    return mask


def _directory_pool(directory):
    files = sorted(p for p in Path(directory).iterdir() if p.suffix.lower() == ".png")
    if not files:
        raise FileNotFoundError(f"no .png files in {directory}")
    return files


def _canvas_image(rng, path, dims) -> np.ndarray:
    from PIL import Image

    img = Image.open(path).convert("RGB").resize((dims[1], dims[0]), Image.BILINEAR)
    return np.asarray(img, dtype=np.float32) / 255.0


def _directory_mask(rng, path, dims) -> np.ndarray:
    from PIL import Image

    h, w = dims
    img = Image.open(path).convert("L")
    mask = np.asarray(img, dtype=np.float32) / 255.0
    ys, xs = np.nonzero(mask > 0.5)
    if len(ys) == 0:
        return _blob_mask(rng, dims)
    crop = mask[ys.min() : ys.max() + 1, xs.min() : xs.max() + 1]
    scale = rng.uniform(0.15, 0.5) * min(h, w) / max(crop.shape)
    nh = max(2, int(round(crop.shape[0] * scale)))
    nw = max(2, int(round(crop.shape[1] * scale)))
    small = np.asarray(
        Image.fromarray((crop * 255).astype(np.uint8)).resize((nw, nh), Image.BILINEAR),
        dtype=np.float32,
    ) / 255.0
    out = np.zeros((h, w), np.float32)
    oy = rng.integers(0, h - nh + 1)
    ox = rng.integers(0, w - nw + 1)
    out[oy : oy + nh, ox : ox + nw] = (small >= 0.5).astype(np.float32)
    return out


def sample_scene(rng, config: DatasetConfig) -> LayerStack:
    """Draw a random layer stack: full background plus K-1 masked foregrounds."""
    dims = (config.size, config.size)
    n_layers = int(rng.integers(config.k_min, config.k_max + 1))
    layers = []
    if config.source == "directories":
        if not config.image_dir or not config.mask_dir:
            raise ValueError("directory mode needs image_dir and mask_dir")
        images = _directory_pool(config.image_dir)
        masks = _directory_pool(config.mask_dir)
        bg = _canvas_image(rng, images[rng.integers(len(images))], dims)
        layers.append(Layer(bg, np.ones(dims, np.float32)))
        for _ in range(n_layers - 1):
            img = _canvas_image(rng, images[rng.integers(len(images))], dims)
            mask = _directory_mask(rng, masks[rng.integers(len(masks))], dims)
            layers.append(Layer(img, mask))
    else:
        layers.append(Layer(_procedural_texture(rng, dims), np.ones(dims, np.float32)))
        for _ in range(n_layers - 1):
            layers.append(Layer(_procedural_texture(rng, dims), _blob_mask(rng, dims)))
    return LayerStack(layers)


def compose(stack: LayerStack) -> np.ndarray:
    """Back-to-front overwrite compositing."""
    out = stack.layers[0].image.copy()
    for layer in stack.layers[1:]:
        m = layer.mask[:, :, None]
        out = m * layer.image + (1.0 - m) * out
    return out


def factor_map(stack: LayerStack, factors) -> np.ndarray:
    """Per-pixel factor pairs: topmost first-frame layer wins everywhere."""
    h, w = stack.layers[0].mask.shape
    lam = np.empty((h, w, 2), np.float32)
    lam[:] = factors[0]
    for layer, f in zip(stack.layers[1:], factors[1:]):
        m = layer.mask[:, :, None]
        lam = m * np.asarray(f, np.float32) + (1.0 - m) * lam
    return lam


def _translate_stack(stack: LayerStack, translations) -> LayerStack:
    # background keeps its all-ones mask; foreground masks are re-binarized
    d0 = translations[0]
    layers = [
        Layer(
            translate_bilinear(stack.layers[0].image, d0[0], d0[1]),
            stack.layers[0].mask,
        )
    ]
    for layer, d in zip(stack.layers[1:], translations[1:]):
        img = translate_bilinear(layer.image, d[0], d[1])
        mask = translate_bilinear(layer.mask, d[0], d[1])
        layers.append(Layer(img, (mask >= 0.5).astype(np.float32)))
    return LayerStack(layers)


def render_pair(stack: LayerStack, assignment: MotionAssignment, dither_seeds) -> TrainSample:
    """Deterministically render (I1, I2, magnified target) for a stack.

    ``dither_seeds`` is a 3-tuple of quantization dither seeds for the
    three images (equal seeds give the byte-identity contract for zero
    motion).
    """
    mag_translations = np.stack(
        [
            magnified_translation(d, a, assignment.angle_deg)
            for d, a in zip(assignment.translations, assignment.factors)
        ]
    )
    i1 = compose(stack)
    i2 = compose(_translate_stack(stack, assignment.translations))
    i_mag = compose(_translate_stack(stack, mag_translations))
    lam = factor_map(stack, assignment.factors)
    i1 = quantize_with_dither(i1, dither_seeds[0])
    i2 = quantize_with_dither(i2, dither_seeds[1])
    i_mag = quantize_with_dither(i_mag, dither_seeds[2])
    return TrainSample(i1, i2, i_mag, assignment.angle_deg, lam, assignment)


def _dither_seeds(rng, config):
    if config.share_dither_seed:
        seed = int(rng.integers(0, 2**63))
        return (seed, seed, seed)
    return tuple(int(s) for s in rng.integers(0, 2**63, size=3))


def make_pair(stack: LayerStack, rng, config: DatasetConfig) -> TrainSample:
    """Sample a training motion assignment and render it.

    Per layer: factors uniform in [alpha_min, alpha_max] for both axes,
    then each translation component uniform in [-u, u] with
    u = min(10, 30/max factor), capping inputs at 10 px and amplified
    motions at 30 px per component. One angle is shared by all layers.
    """
    n = len(stack.layers)
    angle = float(rng.uniform(config.angle_min, config.angle_max))
    factors = rng.uniform(config.alpha_min, config.alpha_max, size=(n, 2))
    translations = np.empty((n, 2))
    for k in range(n):
        u = motion_bound(factors[k])
        translations[k] = rng.uniform(-u, u, size=2)
    assignment = MotionAssignment(translations, factors, angle)
    return render_pair(stack, assignment, _dither_seeds(rng, config))


def subpixel_motions() -> np.ndarray:
    return np.logspace(np.log10(0.04), np.log10(1.0), SUBPIXEL_LEVELS)


def noise_factors() -> np.ndarray:
    return np.logspace(-2.0, 2.0, NOISE_LEVELS)


def _make_eval_sample(stack, rng, config, level):
    n = len(stack.layers)
    if config.eval_mode == "subpixel-generic":
        motion = float(subpixel_motions()[level])
        angle = 0.0
        alpha = AMPLIFIED_TARGET_PX / motion
        factors = np.full((n, 2), alpha)
        # per-layer random direction, |d| = motion, so the amplified
        # magnitude is exactly the 10 px target
        thetas = rng.uniform(0, 2 * np.pi, size=n)
        translations = motion * np.stack([np.cos(thetas), np.sin(thetas)], axis=1)
        extra = {"motion_px": motion}
    else:
        if config.eval_mode == "subpixel":
            motion = float(subpixel_motions()[level])
        else:
            motion = NOISE_EVAL_MOTION_PX
        angle = float(rng.uniform(0.0, 90.0))
        a_par = AMPLIFIED_TARGET_PX / motion
        factors = np.full((n, 2), 0.0)
        factors[:, 0] = a_par
        factors[:, 1] = a_par / 2.0
        # per-axis motion of magnitude `motion` with random signs per layer
        p = axis_vector(angle)
        q = np.array([-p[1], p[0]])
        signs = rng.choice([-1.0, 1.0], size=(n, 2))
        translations = motion * (signs[:, :1] * p + signs[:, 1:] * q)
        extra = {"motion_px": motion}
    assignment = MotionAssignment(translations, factors, angle)
    sample = render_pair(stack, assignment, _dither_seeds(rng, config))
    if config.eval_mode == "noise":
        factor = float(noise_factors()[level])
        extra = {"noise_factor": factor, "motion_px": motion}
        sample.i1 = add_noise(sample.i1, NoiseSpec(factor, int(rng.integers(0, 2**63))))
        sample.i2 = add_noise(sample.i2, NoiseSpec(factor, int(rng.integers(0, 2**63))))
    return sample, extra


def generate_sample(config: DatasetConfig, index: int):
    """Build sample ``index`` of the dataset; returns (sample, meta dict).

    The RNG stream is keyed by (seed, index), so any sample can be built
    independently and generation order does not matter.
    """
    # amplified translations reach 30 px per component in training mode and
    # 10 px in eval modes; warped layers need headroom of half the canvas
    min_size = 64 if config.eval_mode == "none" else 32
    if config.size < min_size:
        raise ValueError(
            f"size {config.size} too small for {config.eval_mode!r} motions "
            f"(needs >= {min_size})"
        )
    rng = np.random.default_rng([config.seed, index])
    stack = sample_scene(rng, config)
    if config.eval_mode == "none":
        sample = make_pair(stack, rng, config)
        extra = {}
        level = 0
    else:
        level = index // config.count
        sample, extra = _make_eval_sample(stack, rng, config, level)
    meta = {"index": index, "level": level, "eval_mode": config.eval_mode, **extra}
    return sample, meta


def _meta_text(sample: TrainSample, meta: dict) -> str:
    def fmt(v):
        return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)

    lines = [f"angle_deg={fmt(sample.angle_deg)}"]
    for key in ("index", "level", "eval_mode", "motion_px", "noise_factor"):
        if key in meta:
            lines.append(f"{key}={fmt(meta[key])}")
    asg = sample.meta
    lines.append(f"layers={len(asg.translations)}")
    for k, (d, a) in enumerate(zip(asg.translations, asg.factors), start=1):
        lines.append(f"d_{k}={fmt(d[0])},{fmt(d[1])}")
        lines.append(f"alpha_{k}={fmt(a[0])},{fmt(a[1])}")
    return "\n".join(lines) + "\n"


def write_sample(sample: TrainSample, meta: dict, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_frame(out / "frameA.png", sample.i1)
    save_frame(out / "frameB.png", sample.i2)
    save_frame(out / "amplified.png", sample.i_mag)
    axtf.write_tensor(out / "mag_map.axtf", sample.mag_map)
    (out / "meta.txt").write_text(_meta_text(sample, meta))


def write_dataset(config: DatasetConfig, out_root, progress=None) -> int:
    """Generate the whole dataset under ``out_root``; returns sample count."""
    root = Path(out_root)
    root.mkdir(parents=True, exist_ok=True)
    total = config.total_count
    for index in range(total):
        sample, meta = generate_sample(config, index)
        write_sample(sample, meta, root / str(index))
        if progress is not None:
            progress(index, total)
    return total


def parse_meta(path) -> dict:
    meta = {}
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        key, value = line.split("=", 1)
        if key in ("index", "level", "layers"):
            meta[key] = int(value)
        elif key == "eval_mode":
            meta[key] = value
        elif "," in value:
            meta[key] = tuple(float(v) for v in value.split(","))
        else:
            meta[key] = float(value)
    return meta


def read_sample(sample_dir) -> dict:
    """Load one sample directory back into arrays plus parsed metadata."""
    d = Path(sample_dir)
    meta = parse_meta(d / "meta.txt")
    return {
        "i1": load_frame(d / "frameA.png"),
        "i2": load_frame(d / "frameB.png"),
        "i_mag": load_frame(d / "amplified.png"),
        "mag_map": axtf.read_tensor(d / "mag_map.axtf"),
        "angle_deg": float(meta["angle_deg"]),
        "meta": meta,
    }


def list_samples(root):
    """Sample directories under a dataset root, in index order."""
    return sorted(
        (p for p in Path(root).iterdir() if p.is_dir() and p.name.isdigit()),
        key=lambda p: int(p.name),
    )
