"""Complex steerable pyramid, built and collapsed in the frequency domain.

The filter bank tiles the frequency plane with raised-cosine radial windows
(log-spaced by a configurable octave fraction) and cos^(K-1) angular windows
covering a half-plane, normalized so the squared magnitudes — counting each
oriented filter together with its implicit conjugate mirror — sum to one at
every frequency sample. Analysis is therefore its own inverse: collapse is
exact to machine precision, and band phases behave like local translations
under the Fourier shift theorem.

Oriented bands are stored subsampled: each band's centered spectrum is
cropped to the smallest grid that still contains the filter's support, so
grid sizes shrink with scale without breaking exact reconstruction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import axtf

MIN_BAND_SIZE = 8


@dataclass(frozen=True)
class PyramidSpec:
    """Shape of the decomposition.

    ``octave_fraction`` is the radial spacing in octaves (1 = full octave,
    0.5 = half octave, doubling the number of radial bands). ``depth=None``
    picks the deepest pyramid whose smallest band is at least 8x8.
    ``angle_offset_deg`` rotates the angular windows, aligning orientation
    0 with an arbitrary direction (used by the axial magnifier).
    """

    orientations: int = 2
    octave_fraction: float = 1.0
    depth: int | None = None
    include_residuals: bool = True
    angle_offset_deg: float = 0.0

    def __post_init__(self):
        if self.orientations < 2:
            raise ValueError("need at least 2 orientations")
        if self.octave_fraction not in (1.0, 0.5):
            raise ValueError("octave_fraction must be 1 or 1/2")
        if self.depth is not None and self.depth < 1:
            raise ValueError("depth must be >= 1")


@dataclass
class SteerablePyramid:
    """Decomposition result: complex oriented bands plus real residuals."""

    spec: PyramidSpec
    source_dims: tuple
    bands: list  # index s * K + k -> complex ndarray
    highpass_residual: np.ndarray | None
    lowpass_residual: np.ndarray | None

    @property
    def depth(self) -> int:
        return len(self.bands) // self.spec.orientations

    def band(self, scale, orientation) -> np.ndarray:
        k = self.spec.orientations
        if not (0 <= scale < self.depth and 0 <= orientation < k):
            raise IndexError(f"band ({scale}, {orientation}) out of range")
        return self.bands[scale * k + orientation]


def band_phase(pyr: SteerablePyramid, scale, orientation) -> np.ndarray:
    """Element-wise argument of a band's coefficients, in (-pi, pi]."""
    return np.angle(pyr.band(scale, orientation))


def max_depth(dims, octave_fraction) -> int:
    """Deepest pyramid whose smallest oriented band is >= 8x8."""
    short = min(dims)
    d = 0
    while _store_size(short, 2.0 ** (-d * octave_fraction)) >= MIN_BAND_SIZE:
        d += 1
    return max(d, 1)


def _store_size(dim, r_hi) -> int:
    # Smallest centered crop that retains every bin with |freq| <= r_hi*Nyquist.
    if r_hi >= 1.0:
        return int(dim)
    return min(int(dim), int(math.ceil(r_hi * dim)) + 2)


def _cos_ramp_down(t):
    # 1 for t <= 0, cos(pi/2 * t) on [0, 1], 0 beyond.
    tc = np.clip(t, 0.0, 1.0)
    w = np.cos(0.5 * np.pi * tc)
    return np.where(t <= 0.0, 1.0, np.where(t >= 1.0, 0.0, w))


class FilterBank:
    """Frequency-domain filters for one (spec, dims) pair, centered layout."""

    def __init__(self, spec: PyramidSpec, dims):
        h, w = dims
        self.spec = spec
        self.dims = (int(h), int(w))
        delta = spec.octave_fraction
        self.depth = spec.depth if spec.depth is not None else max_depth(dims, delta)
        if _store_size(min(dims), 2.0 ** (-(self.depth - 1) * delta)) < MIN_BAND_SIZE:
            raise ValueError(f"frame {dims} too small for depth {self.depth}")

        fy = np.fft.fftshift(np.fft.fftfreq(h)) * 2.0
        fx = np.fft.fftshift(np.fft.fftfreq(w)) * 2.0
        gy, gx = np.meshgrid(fy, fx, indexing="ij")
        r = np.hypot(gy, gx)
        theta = np.arctan2(gy, gx)
        with np.errstate(divide="ignore"):
            logr = np.log2(r)

        # Radial partition: highpass edge at Nyquist, cos^2-overlapping band
        # windows spaced `delta` apart, lowpass below the last band.
        self.highpass = _cos_ramp_down(-logr / delta)
        self.radial = [
            self._band_window(logr, -(s + 1) * delta, delta) for s in range(self.depth)
        ]
        low_edge = -self.depth * delta
        self.lowpass = _cos_ramp_down((logr - (low_edge - delta)) / delta)

        # Angular partition: half-plane cos^(K-1) windows; the normalization
        # makes sum_k [A_k(th)^2 + A_k(th+pi)^2] = 1 for every angle.
        kk = spec.orientations
        p = kk - 1
        norm = math.sqrt(
            (2.0 ** (2 * p)) * (math.factorial(p) ** 2)
            / (kk * math.factorial(2 * p))
        )
        offset = math.radians(spec.angle_offset_deg)
        self.angular = []
        for k in range(kk):
            d = np.mod(theta - (offset + np.pi * k / kk) + np.pi, 2 * np.pi) - np.pi
            win = norm * np.where(np.abs(d) < 0.5 * np.pi, np.cos(d), 0.0) ** p
            self.angular.append(win)

        self.band_sizes = [
            (
                _store_size(h, 2.0 ** (-s * delta)),
                _store_size(w, 2.0 ** (-s * delta)),
            )
            for s in range(self.depth)
        ]
        self.low_size = (
            _store_size(h, 2.0 ** (-self.depth * delta)),
            _store_size(w, 2.0 ** (-self.depth * delta)),
        )

    @staticmethod
    def _band_window(logr, center, delta):
        t = np.abs(logr - center) / delta
        tc = np.clip(t, 0.0, 1.0)
        return np.where(t < 1.0, np.cos(0.5 * np.pi * tc), 0.0)

    def band_filter(self, scale, orientation) -> np.ndarray:
        return self.radial[scale] * self.angular[orientation]

    def crop(self, spectrum, size):
        nh, nw = size
        h, w = self.dims
        r0 = h // 2 - nh // 2
        c0 = w // 2 - nw // 2
        return spectrum[r0 : r0 + nh, c0 : c0 + nw]

    def pad(self, spectrum):
        nh, nw = spectrum.shape
        h, w = self.dims
        out = np.zeros((h, w), dtype=complex)
        r0 = h // 2 - nh // 2
        c0 = w // 2 - nw // 2
        out[r0 : r0 + nh, c0 : c0 + nw] = spectrum
        return out

    def squared_sum(self) -> np.ndarray:
        """Sum of squared filter magnitudes over the whole bank.

        Oriented filters contribute |H(w)|^2 + |H(-w)|^2 (the band plus its
        conjugate mirror, which reconstruction restores by taking twice the
        real part); the real-symmetric residual filters contribute once.
        A tight frame makes this 1 at every frequency sample.
        """
        total = self.highpass**2 + self.lowpass**2
        for s in range(self.depth):
            for k in range(self.spec.orientations):
                f = self.band_filter(s, k)
                total += f**2 + _mirror(f) ** 2
        return total


def _mirror(filt):
    # Value at -omega on the centered grid: flip both axes then roll to keep
    # the asymmetric even-size bin (the one without a positive partner) fixed.
    out = filt[::-1, ::-1]
    return np.roll(out, (1 - filt.shape[0] % 2, 1 - filt.shape[1] % 2), axis=(0, 1))


@lru_cache(maxsize=16)
def get_filter_bank(spec: PyramidSpec, dims) -> FilterBank:
    return FilterBank(spec, dims)


def build_csp(frame, spec: PyramidSpec) -> SteerablePyramid:
    """Decompose a single-channel frame into a complex steerable pyramid."""
    arr = np.asarray(frame, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError("build_csp expects a single-channel frame")
    if min(arr.shape) < 32:
        raise ValueError("frame too small (needs dims >= 32)")
    bank = get_filter_bank(spec, arr.shape)
    fdft = np.fft.fftshift(np.fft.fft2(arr))

    bands = []
    for s in range(bank.depth):
        for k in range(spec.orientations):
            sub = bank.crop(fdft * bank.band_filter(s, k), bank.band_sizes[s])
            bands.append(np.fft.ifft2(np.fft.ifftshift(sub)))
    high = low = None
    if spec.include_residuals:
        high = np.fft.ifft2(np.fft.ifftshift(fdft * bank.highpass)).real
        lowdft = bank.crop(fdft * bank.lowpass, bank.low_size)
        low = np.fft.ifft2(np.fft.ifftshift(lowdft)).real
    return SteerablePyramid(spec, arr.shape, bands, high, low)


def collapse_csp(pyr: SteerablePyramid) -> np.ndarray:
    """Invert :func:`build_csp`; exact when residuals are included."""
    bank = get_filter_bank(pyr.spec, tuple(pyr.source_dims))
    kk = pyr.spec.orientations
    if len(pyr.bands) != bank.depth * kk:
        raise ValueError("pyramid bands inconsistent with its spec")

    oriented = np.zeros(bank.dims, dtype=complex)
    for s in range(bank.depth):
        for k in range(kk):
            band = pyr.bands[s * kk + k]
            if band.shape != bank.band_sizes[s]:
                raise ValueError(
                    f"band ({s},{k}) has shape {band.shape}, "
                    f"expected {bank.band_sizes[s]}"
                )
            sub = np.fft.fftshift(np.fft.fft2(band))
            oriented += np.conj(bank.band_filter(s, k)) * bank.pad(sub)
    out = 2.0 * np.fft.ifft2(np.fft.ifftshift(oriented)).real

    residual = np.zeros(bank.dims, dtype=complex)
    if pyr.highpass_residual is not None:
        residual += bank.highpass * np.fft.fftshift(np.fft.fft2(pyr.highpass_residual))
    if pyr.lowpass_residual is not None:
        lowdft = np.fft.fftshift(np.fft.fft2(pyr.lowpass_residual))
        residual += bank.lowpass * bank.pad(lowdft)
    out += np.fft.ifft2(np.fft.ifftshift(residual)).real
    return out


def write_pyramid(pyr: SteerablePyramid, out_dir) -> None:
    """Serialize a pyramid: one AXTF tensor per band (re/im stacked on the
    last axis) plus a plain-text manifest listing the bands."""
    from pathlib import Path

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    spec = pyr.spec
    lines = [
        f"dims {pyr.source_dims[0]} {pyr.source_dims[1]}",
        f"orientations {spec.orientations}",
        f"octave_fraction {spec.octave_fraction}",
        f"depth {pyr.depth}",
        f"angle_offset_deg {spec.angle_offset_deg}",
    ]
    for s in range(pyr.depth):
        for k in range(spec.orientations):
            name = f"band_{s}_{k}.axtf"
            band = pyr.band(s, k)
            axtf.write_tensor(out / name, np.stack([band.real, band.imag], axis=-1))
            lines.append(f"band {s} {k} {name}")
    for label, grid in (
        ("highpass", pyr.highpass_residual),
        ("lowpass", pyr.lowpass_residual),
    ):
        if grid is not None:
            name = f"{label}.axtf"
            axtf.write_tensor(out / name, grid)
            lines.append(f"{label} {name}")
    (out / "manifest.txt").write_text("\n".join(lines) + "\n")


def read_pyramid(in_dir) -> SteerablePyramid:
    """Inverse of :func:`write_pyramid` (float32 storage precision)."""
    from pathlib import Path

    src = Path(in_dir)
    fields = {}
    band_entries = []
    residuals = {"highpass": None, "lowpass": None}
    for line in (src / "manifest.txt").read_text().splitlines():
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "band":
            band_entries.append((int(parts[1]), int(parts[2]), parts[3]))
        elif parts[0] in residuals:
            residuals[parts[0]] = axtf.read_tensor(src / parts[1]).astype(np.float64)
        else:
            fields[parts[0]] = parts[1:]
    spec = PyramidSpec(
        orientations=int(fields["orientations"][0]),
        octave_fraction=float(fields["octave_fraction"][0]),
        depth=int(fields["depth"][0]),
        include_residuals=residuals["highpass"] is not None,
        angle_offset_deg=float(fields["angle_offset_deg"][0]),
    )
    kk = spec.orientations
    bands = [None] * (int(fields["depth"][0]) * kk)
    for s, k, name in band_entries:
        re_im = axtf.read_tensor(src / name).astype(np.float64)
        bands[s * kk + k] = re_im[..., 0] + 1j * re_im[..., 1]
    dims = (int(fields["dims"][0]), int(fields["dims"][1]))
    return SteerablePyramid(spec, dims, bands, residuals["highpass"], residuals["lowpass"])
