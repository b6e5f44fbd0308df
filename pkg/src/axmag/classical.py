"""Non-learned magnifiers: linear Eulerian and phase-based (generic/axial).

All three consume a frame stack (T, H, W) or (T, H, W, 3) with values in
[0, 1] and return the same shape, unclamped (clamping happens at image
export). Color is processed per channel. The whole clip is held in memory;
these are analysis tools, not streaming video processors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter
from scipy.signal import butter, lfilter

from .pyramid import PyramidSpec, build_csp, collapse_csp

FILTER_KINDS = ("ideal-fft", "butterworth-2nd-order", "difference-of-frames")


@dataclass(frozen=True)
class TemporalFilterSpec:
    """Temporal band selection applied to motion representations."""

    kind: str
    low_cut: float = 0.0
    high_cut: float = 0.0
    fps: float = 30.0

    def __post_init__(self):
        if self.kind not in FILTER_KINDS:
            raise ValueError(f"unknown temporal filter kind {self.kind!r}")
        if self.kind != "difference-of-frames":
            if not (0 <= self.low_cut < self.high_cut <= self.fps / 2):
                raise ValueError(
                    "need 0 <= low_cut < high_cut <= fps/2 for bandpass filters"
                )


@dataclass
class MagnificationSpec:
    """Axial magnification request: direction, two factors, optional map.

    ``per_pixel_map`` is an (H, W, 2) grid of factors along the requested
    axis and its orthogonal; when present it overrides the scalar factors.
    """

    angle_deg: float
    alpha_par: float
    alpha_perp: float = 0.0
    per_pixel_map: np.ndarray | None = None
    mode: str = "static"

    def __post_init__(self):
        if not np.isfinite(self.angle_deg):
            raise ValueError("angle must be finite")
        if self.alpha_par < 0 or self.alpha_perp < 0:
            raise ValueError("magnification factors must be >= 0")
        if self.mode not in ("static", "dynamic"):
            raise ValueError(f"unknown mode {self.mode!r}")


def temporal_bandpass(signal, tf: TemporalFilterSpec) -> np.ndarray:
    """Filter a time series (time on axis 0) per the filter spec.

    ideal-fft zeroes every DFT bin outside [low_cut, high_cut] Hz (two
    sided); butterworth runs a forward second-order bandpass; the
    difference kind returns x_t - x_{t-1} with a zero first sample.
    """
    x = np.asarray(signal, dtype=np.float64)
    if tf.kind == "difference-of-frames":
        out = np.zeros_like(x)
        out[1:] = x[1:] - x[:-1]
        return out
    if tf.kind == "ideal-fft":
        freqs = np.fft.rfftfreq(x.shape[0], d=1.0 / tf.fps)
        spec = np.fft.rfft(x, axis=0)
        keep = (freqs >= tf.low_cut) & (freqs <= tf.high_cut)
        spec[~keep] = 0.0
        return np.fft.irfft(spec, n=x.shape[0], axis=0)
    if x.shape[0] < 3:
        raise ValueError("IIR filtering needs at least 3 samples")
    b, a = butter(1, [tf.low_cut, tf.high_cut], btype="bandpass", fs=tf.fps)
    return lfilter(b, a, x, axis=0)


def linear_evm(frames, alpha, tf: TemporalFilterSpec) -> np.ndarray:
    """First-order (intensity) Eulerian magnification.

    The frame is split with a two-level Gaussian blur; only the blurred
    component's temporal bandpass is amplified, which keeps the highest
    spatial frequencies out of the amplification path:
    ``out_t = frame_t + alpha * bandpass(blur(frame))_t``.
    """
    stack = np.asarray(frames, dtype=np.float64)
    if stack.shape[0] < 3:
        raise ValueError("need at least 3 frames")
    spatial_sigma = 2.0
    if stack.ndim == 4:
        sigma = (0, spatial_sigma, spatial_sigma, 0)
    else:
        sigma = (0, spatial_sigma, spatial_sigma)
    base = gaussian_filter(stack, sigma=sigma, mode="nearest")
    return stack + alpha * temporal_bandpass(base, tf)


def _nearest_resample(grid, dims):
    h, w = dims
    rows = np.clip(np.rint(np.arange(h) * grid.shape[0] / h), 0, grid.shape[0] - 1)
    cols = np.clip(np.rint(np.arange(w) * grid.shape[1] / w), 0, grid.shape[1] - 1)
    return grid[rows.astype(int)][:, cols.astype(int)]


def _smooth_phase(dphi, weight, sigma=2.0):
    # Magnitude-weighted Gaussian smoothing of phase differences; weights
    # pair the frame with its reference so the difference of a near-zero
    # coefficient (pure numerical noise) cannot contaminate neighbors.
    num = gaussian_filter(dphi * weight, sigma=sigma, mode="nearest")
    den = gaussian_filter(weight, sigma=sigma, mode="nearest")
    return num / np.maximum(den, 1e-12)


def _phase_magnify_channel(frames, band_alpha, tf, spec, mode):
    """Shared phase-manipulation core.

    ``band_alpha(orientation, band_dims)`` returns a scalar or a grid of
    amplification factors for every band of that orientation.
    """
    pyrs = [build_csp(f, spec) for f in frames]
    n_frames = len(pyrs)
    kk = spec.orientations
    for s in range(pyrs[0].depth):
        for k in range(kk):
            coeffs = np.stack([p.bands[s * kk + k] for p in pyrs])
            mags = np.abs(coeffs)
            if mode == "static":
                dphi = np.angle(coeffs * np.conj(coeffs[0]))
                weight = mags * mags[0]
            else:
                steps = np.zeros_like(coeffs, dtype=np.float64)
                steps[1:] = np.angle(coeffs[1:] * np.conj(coeffs[:-1]))
                dphi = np.cumsum(steps, axis=0)
                weight = mags.copy()
                weight[1:] *= mags[:-1]
                weight[0] *= mags[0]
            if tf is not None:
                dphi = temporal_bandpass(dphi, tf)
            alpha = band_alpha(k, coeffs.shape[1:])
            for t in range(n_frames):
                smoothed = _smooth_phase(dphi[t], weight[t])
                pyrs[t].bands[s * kk + k] = coeffs[t] * np.exp(1j * alpha * smoothed)
    return np.stack([collapse_csp(p) for p in pyrs])


def _per_channel(frames, fn):
    stack = np.asarray(frames, dtype=np.float64)
    if stack.ndim == 3:
        return fn(stack)
    out = np.empty_like(stack)
    for c in range(stack.shape[3]):
        out[..., c] = fn(stack[..., c])
    return out


def phase_mag_generic(frames, alpha, tf=None, spec=None, mode="static") -> np.ndarray:
    """Phase-based magnification with a uniform factor on all orientations.

    Per band, the wrapped phase difference against the reference (first
    frame in static mode; accumulated frame-to-frame steps in dynamic mode)
    is optionally temporally filtered, smoothed, scaled by ``alpha``, and
    added back onto the current phase before collapsing.
    """
    stack = np.asarray(frames, dtype=np.float64)
    if stack.shape[0] < 2:
        raise ValueError("need at least 2 frames")
    if mode not in ("static", "dynamic"):
        raise ValueError(f"unknown mode {mode!r}")
    if spec is None:
        spec = PyramidSpec(orientations=4, octave_fraction=1.0)
    return _per_channel(
        stack, lambda ch: _phase_magnify_channel(ch, lambda k, d: alpha, tf, spec, mode)
    )


def phase_mag_axial(frames, mspec: MagnificationSpec, tf=None, spec=None) -> np.ndarray:
    """Axial variant: a two-orientation half-octave pyramid whose angular
    windows are rotated to (phi, phi-perp); the aligned orientation gets
    ``alpha_par``, the orthogonal one ``alpha_perp``."""
    stack = np.asarray(frames, dtype=np.float64)
    if stack.shape[0] < 2:
        raise ValueError("need at least 2 frames")
    if spec is None:
        spec = PyramidSpec(orientations=2, octave_fraction=0.5)
    if spec.orientations != 2:
        raise ValueError("axial phase magnification requires exactly 2 orientations")
    spec = PyramidSpec(
        orientations=2,
        octave_fraction=spec.octave_fraction,
        depth=spec.depth,
        include_residuals=spec.include_residuals,
        angle_offset_deg=mspec.angle_deg,
    )
    pmap = mspec.per_pixel_map
    if pmap is not None and pmap.shape[:2] != stack.shape[1:3]:
        raise ValueError("per_pixel_map dimensions do not match the frames")

    def band_alpha(k, dims):
        if pmap is not None:
            return _nearest_resample(pmap[:, :, k], dims)
        return mspec.alpha_par if k == 0 else mspec.alpha_perp

    return _per_channel(
        stack, lambda ch: _phase_magnify_channel(ch, band_alpha, tf, spec, mspec.mode)
    )
