"""Frames and the imaging primitives shared by every other module.

A frame is a float32 ndarray in [0, 1]: ``(H, W)`` for grayscale or
``(H, W, 3)`` for color. All operations here are pure functions; RNG state
enters explicitly through seeds, so everything is safe to call from
multiple threads.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError
from scipy.ndimage import map_coordinates
from scipy.signal import fftconvolve

from . import axtf

LEVELS = 255.0  # 8-bit interchange grid


@dataclass(frozen=True)
class NoiseSpec:
    """Intensity-dependent additive Gaussian noise, seeded for determinism."""

    factor: float
    seed: int

    def __post_init__(self):
        if not (self.factor >= 0):
            raise ValueError("noise factor must be >= 0")


def validate_frame(frame) -> np.ndarray:
    """Check frame invariants (finite, [0,1], 2D or HxWx{1,3}) and return it."""
    arr = np.asarray(frame)
    if arr.ndim not in (2, 3) or (arr.ndim == 3 and arr.shape[2] not in (1, 3)):
        raise ValueError(f"bad frame shape {arr.shape}")
    if arr.shape[0] <= 0 or arr.shape[1] <= 0:
        raise ValueError("frame dimensions must be positive")
    if not np.all(np.isfinite(arr)):
        raise ValueError("frame contains non-finite values")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ValueError("frame values outside [0, 1]")
    return arr


def load_frame(path) -> np.ndarray:
    """Load an 8/16-bit PNG (or an AXTF tensor) as a float frame in [0, 1].

    Grayscale comes back as ``(H, W)``, color as ``(H, W, 3)``. 16-bit input
    is accepted; values are scaled to [0, 1] by the source bit depth.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(str(path))
    if path.suffix.lower() == ".axtf":
        arr = axtf.read_tensor(path).astype(np.float32)
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"{path}: non-finite tensor values")
        return validate_frame(np.clip(arr, 0.0, 1.0)).astype(np.float32)
    try:
        img = Image.open(path)
        img.load()
    except UnidentifiedImageError as exc:
        raise ValueError(f"{path}: corrupt or unsupported image header") from exc
    if img.mode == "P":
        img = img.convert("RGB")
    if img.mode in ("L", "RGB"):
        arr = np.asarray(img, dtype=np.float32) / 255.0
    elif img.mode in ("I", "I;16"):
        arr = np.asarray(img, dtype=np.float32) / 65535.0
    else:
        raise ValueError(f"{path}: unsupported bit depth / mode {img.mode!r}")
    return validate_frame(arr).astype(np.float32)


def save_frame(path, frame) -> None:
    """Write a frame as an 8-bit PNG (values rounded onto the 255-level grid)."""
    arr = np.asarray(frame, dtype=np.float64)
    data = np.rint(np.clip(arr, 0.0, 1.0) * LEVELS).astype(np.uint8)
    if data.ndim == 3 and data.shape[2] == 1:
        data = data[:, :, 0]
    mode = "L" if data.ndim == 2 else "RGB"
    Image.fromarray(data, mode=mode).save(path)


def to_gray(frame) -> np.ndarray:
    """Mean-of-channels grayscale reduction (identity for 2D input)."""
    arr = np.asarray(frame)
    if arr.ndim == 3:
        return arr.mean(axis=2)
    return arr


def translate_bilinear(frame, dx, dy, boundary="replicate") -> np.ndarray:
    """Shift a frame so that output(x, y) samples input at (x - dx, y - dy).

    Positive dx moves content toward +x (right), positive dy toward +y
    (down, in row order). Bilinear sampling; integer shifts are exact.
    """
    if not (np.isfinite(dx) and np.isfinite(dy)):
        raise ValueError("translation must be finite")
    arr = np.asarray(frame, dtype=np.float64)
    h, w = arr.shape[:2]
    if max(abs(dx), abs(dy)) >= min(h, w) / 2:
        raise ValueError("translation too large for frame")
    mode = {"replicate": "nearest", "reflect": "reflect"}.get(boundary)
    if mode is None:
        raise ValueError(f"unknown boundary mode {boundary!r}")
    yy, xx = np.meshgrid(
        np.arange(h, dtype=np.float64) - dy,
        np.arange(w, dtype=np.float64) - dx,
        indexing="ij",
    )
    coords = np.stack([yy, xx])
    if arr.ndim == 2:
        out = map_coordinates(arr, coords, order=1, mode=mode)
    else:
        out = np.stack(
            [map_coordinates(arr[:, :, c], coords, order=1, mode=mode)
             for c in range(arr.shape[2])],
            axis=2,
        )
    return out.astype(np.asarray(frame).dtype, copy=False)


def _gaussian_window(size=11, sigma=1.5) -> np.ndarray:
    half = (size - 1) / 2.0
    x = np.arange(size) - half
    g = np.exp(-(x**2) / (2.0 * sigma**2))
    k = np.outer(g, g)
    return k / k.sum()


def ssim(a, b) -> float:
    """Structural similarity on the [0, 1] range.

    11x11 Gaussian window (sigma 1.5), C1 = 0.01^2, C2 = 0.03^2, averaged
    over window positions fully inside the frames. Color input is reduced
    to grayscale by the channel mean.
    """
    fa = np.asarray(to_gray(a), dtype=np.float64)
    fb = np.asarray(to_gray(b), dtype=np.float64)
    if fa.shape != fb.shape:
        raise ValueError(f"dimension mismatch {fa.shape} vs {fb.shape}")
    window = _gaussian_window()
    c1, c2 = 0.01**2, 0.03**2
    mu_a = fftconvolve(fa, window, mode="valid")
    mu_b = fftconvolve(fb, window, mode="valid")
    ea2 = fftconvolve(fa * fa, window, mode="valid")
    eb2 = fftconvolve(fb * fb, window, mode="valid")
    eab = fftconvolve(fa * fb, window, mode="valid")
    var_a = ea2 - mu_a**2
    var_b = eb2 - mu_b**2
    cov = eab - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def psnr(a, b) -> float:
    """Peak signal-to-noise ratio in dB for unit dynamic range."""
    err = np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)
    mse = np.mean(err**2)
    if mse == 0:
        return np.inf
    return float(10.0 * np.log10(1.0 / mse))


def add_noise(frame, spec: NoiseSpec) -> np.ndarray:
    """Photon-style additive Gaussian noise.

    Per-pixel std is ``factor * sqrt(max(value, 1/255)) / 255``; the result
    is clamped to [0, 1]. Bit-identical under a fixed seed; factor 0 is the
    identity.
    """
    arr = np.asarray(frame, dtype=np.float64)
    if spec.factor == 0:
        return np.asarray(frame).copy()
    rng = np.random.default_rng(spec.seed)
    std = spec.factor * np.sqrt(np.maximum(arr, 1.0 / LEVELS)) / LEVELS
    out = arr + std * rng.standard_normal(arr.shape)
    return np.clip(out, 0.0, 1.0).astype(np.float32)


def quantize_with_dither(frame, seed) -> np.ndarray:
    """Dithered 8-bit quantization.

    Adds i.i.d. uniform noise in [-0.5/255, +0.5/255], rounds to the nearest
    of the 256 grid levels, and returns values in [0, 1] exactly on the
    k/255 grid. The dither randomizes the rounding direction so sub-level
    intensity differences survive quantization on average.
    """
    arr = np.asarray(frame, dtype=np.float64)
    rng = np.random.default_rng(seed)
    u = rng.uniform(-0.5 / LEVELS, 0.5 / LEVELS, size=arr.shape)
    q = np.rint((arr + u) * LEVELS)
    return (np.clip(q, 0, LEVELS) / LEVELS).astype(np.float32)
