import numpy as np
import pytest
from scipy.ndimage import gaussian_filter

from axmag.classical import (
    MagnificationSpec,
    TemporalFilterSpec,
    linear_evm,
    phase_mag_axial,
    phase_mag_generic,
    temporal_bandpass,
)
from axmag.imaging import translate_bilinear
from axmag.pyramid import PyramidSpec


def _grating(n=128, lam=16.0, amp=0.25, axis=1):
    wave = 0.5 + amp * np.cos(2 * np.pi * np.arange(n) / lam)
    if axis == 1:
        return np.tile(wave, (n, 1))
    return np.tile(wave[:, None], (1, n))


def _bin_shift(a, b, lam, axis=1):
    # Fourier shift theorem on the grating's dominant frequency bin
    if axis == 1:
        fa, fb = np.fft.fft(a.mean(axis=0)), np.fft.fft(b.mean(axis=0))
        n = a.shape[1]
    else:
        fa, fb = np.fft.fft(a.mean(axis=1)), np.fft.fft(b.mean(axis=1))
        n = a.shape[0]
    k = int(round(n / lam))
    return -np.angle(fb[k] * np.conj(fa[k])) * lam / (2 * np.pi)


class TestTemporalBandpass:
    def test_invalid_band(self):
        with pytest.raises(ValueError):
            TemporalFilterSpec("ideal-fft", 2.0, 1.0, fps=30)
        with pytest.raises(ValueError):
            TemporalFilterSpec("ideal-fft", 0.0, 20.0, fps=30)
        with pytest.raises(ValueError):
            TemporalFilterSpec("no-such-kind")

    def test_dc_killed(self):
        tf = TemporalFilterSpec("ideal-fft", 0.5, 2.0, fps=10)
        out = temporal_bandpass(np.full(64, 3.0), tf)
        assert np.abs(out).max() <= 1e-12

    def test_inband_passthrough(self):
        fps, n = 16.0, 64
        t = np.arange(n) / fps
        x = np.sin(2 * np.pi * 2.0 * t)
        tf = TemporalFilterSpec("ideal-fft", 1.5, 2.5, fps=fps)
        assert np.abs(temporal_bandpass(x, tf) - x).max() <= 1e-10

    def test_out_of_band_attenuation(self):
        fps, n = 16.0, 64
        t = np.arange(n) / fps
        x1 = np.sin(2 * np.pi * 1.0 * t)
        x5 = np.sin(2 * np.pi * 5.0 * t)
        tf = TemporalFilterSpec("ideal-fft", 0.5, 1.5, fps=fps)
        out = temporal_bandpass(x1 + x5, tf)
        assert np.abs(out - x1).max() <= 1e-10

    def test_difference_of_frames(self):
        x = np.array([1.0, 2.0, 4.0, 7.0])
        tf = TemporalFilterSpec("difference-of-frames")
        assert np.allclose(temporal_bandpass(x, tf), [0, 1, 2, 3])

    def test_butterworth_band_selection(self):
        fps, n = 32.0, 256
        t = np.arange(n) / fps
        inband = np.sin(2 * np.pi * 2.0 * t)
        outband = np.sin(2 * np.pi * 10.0 * t)
        tf = TemporalFilterSpec("butterworth-2nd-order", 1.5, 2.5, fps=fps)
        yi = temporal_bandpass(inband, tf)[n // 2 :]
        yo = temporal_bandpass(outband, tf)[n // 2 :]
        assert np.sqrt(np.mean(yi**2)) >= 0.5
        assert np.sqrt(np.mean(yo**2)) <= 0.2

    def test_multidim_axis0(self):
        rng = np.random.default_rng(0)
        x = rng.random((32, 4, 5))
        tf = TemporalFilterSpec("ideal-fft", 1.0, 3.0, fps=10)
        out = temporal_bandpass(x, tf)
        assert out.shape == x.shape
        col = temporal_bandpass(x[:, 2, 3], tf)
        assert np.allclose(out[:, 2, 3], col)


class TestLinearEvm:
    def test_static_video_identity(self):
        f = np.random.default_rng(1).random((32, 32))
        frames = np.stack([f] * 6)
        tf = TemporalFilterSpec("ideal-fft", 0.5, 1.5, fps=8)
        assert np.abs(linear_evm(frames, 9.0, tf) - frames).max() <= 1e-12

    def test_alpha_zero_identity(self):
        rng = np.random.default_rng(2)
        frames = rng.random((6, 32, 32))
        tf = TemporalFilterSpec("ideal-fft", 0.5, 1.5, fps=8)
        assert np.abs(linear_evm(frames, 0.0, tf) - frames).max() <= 1e-12

    def test_ramp_amplification(self):
        # translating ramp: Taylor is exact, so displacement is read back
        # through (f0 - out) / slope in the interior
        w, n_frames, fps, alpha = 64, 16, 8.0, 9.0
        slope = 1.0 / w
        ramp = np.tile(np.arange(w) * slope, (w, 1))
        t = np.arange(n_frames) / fps
        deltas = 0.1 * np.sin(2 * np.pi * 1.0 * t)
        frames = np.stack([translate_bilinear(ramp, d, 0.0) for d in deltas])
        tf = TemporalFilterSpec("ideal-fft", 0.5, 1.5, fps=fps)
        out = linear_evm(frames, alpha, tf)
        inner = slice(8, w - 8)
        disp = [
            np.mean((ramp - out[k])[inner, inner]) / slope for k in range(n_frames)
        ]
        assert abs(np.max(np.abs(disp)) - 1.0) <= 0.15

    def test_too_few_frames(self):
        tf = TemporalFilterSpec("ideal-fft", 0.5, 1.5, fps=8)
        with pytest.raises(ValueError):
            linear_evm(np.zeros((2, 32, 32)), 1.0, tf)


class TestPhaseMagGeneric:
    def test_static_frames_identity(self):
        f = np.random.default_rng(3).random((64, 64))
        frames = np.stack([f, f, f])
        out = phase_mag_generic(frames, 9.0, spec=PyramidSpec(2, 1.0))
        assert np.abs(out - frames).max() <= 1e-4

    def test_grating_displacement_law(self):
        lam, delta, alpha = 16.0, 0.2, 9.0
        f0 = _grating(lam=lam)
        f1 = translate_bilinear(f0, delta, 0.0)
        out = phase_mag_generic(
            np.stack([f0, f1]), alpha, spec=PyramidSpec(2, 0.5), mode="static"
        )
        measured = _bin_shift(f0, out[1], lam)
        assert 1.8 <= measured <= 2.2  # (1 + alpha) * delta = 2.0

    def test_alpha_zero_keeps_motion(self):
        lam, delta = 16.0, 0.2
        f0 = _grating(lam=lam)
        f1 = translate_bilinear(f0, delta, 0.0)
        out = phase_mag_generic(np.stack([f0, f1]), 0.0, spec=PyramidSpec(2, 0.5))
        assert abs(_bin_shift(f0, out[1], lam) - 0.2) <= 0.02

    def test_displacement_linear_in_alpha(self):
        lam, delta = 16.0, 0.2
        f0 = _grating(lam=lam)
        f1 = translate_bilinear(f0, delta, 0.0)
        spec = PyramidSpec(2, 0.5)
        d = {}
        for alpha in (4.0, 9.0):
            out = phase_mag_generic(np.stack([f0, f1]), alpha, spec=spec)
            d[alpha] = _bin_shift(f0, out[1], lam)
        ratio = d[9.0] / d[4.0]
        assert abs(ratio - 2.0) <= 0.2  # (1+9)/(1+4)

    def test_color_processed_per_channel(self):
        f0 = np.stack([_grating(n=64)] * 3, axis=2)
        f1 = translate_bilinear(f0, 0.2, 0.0)
        out = phase_mag_generic(np.stack([f0, f1]), 3.0, spec=PyramidSpec(2, 1.0))
        mono = phase_mag_generic(
            np.stack([f0[..., 0], f1[..., 0]]), 3.0, spec=PyramidSpec(2, 1.0)
        )
        assert np.allclose(out[1][..., 1], mono[1], atol=1e-12)


class TestPhaseMagAxial:
    def test_axial_separation_on_gratings(self):
        lam = 32.0
        n = 128
        f0 = 0.5 + 0.2 * (
            np.tile(np.cos(2 * np.pi * np.arange(n) / lam), (n, 1))
            + np.tile(np.cos(2 * np.pi * np.arange(n)[:, None] / lam), (1, n))
        )
        f1 = translate_bilinear(f0, 1.0, 0.0)
        ms = MagnificationSpec(angle_deg=0.0, alpha_par=10.0, alpha_perp=0.0)
        out = phase_mag_axial(np.stack([f0, f1]), ms)
        assert 9.0 <= _bin_shift(f0, out[1], lam, axis=1) <= 12.0
        assert abs(_bin_shift(f0, out[1], lam, axis=0)) <= 0.3

    def test_equal_factors_reduce_to_generic(self):
        f0 = _grating(lam=16.0)
        f1 = translate_bilinear(f0, 0.2, 0.0)
        ms = MagnificationSpec(angle_deg=37.0, alpha_par=9.0, alpha_perp=9.0)
        outa = phase_mag_axial(np.stack([f0, f1]), ms)
        outg = phase_mag_generic(np.stack([f0, f1]), 9.0, spec=PyramidSpec(2, 0.5))
        assert np.abs(outa - outg).mean() <= 1e-3

    def test_swapped_angle_and_factors_identical(self):
        rng = np.random.default_rng(4)
        tex = gaussian_filter(rng.random((96, 96)), 1.5)
        tex = np.clip(0.5 + 2.0 * (tex - tex.mean()), 0, 1)
        f1 = translate_bilinear(tex, 0.7, -0.3)
        ms = MagnificationSpec(angle_deg=25.0, alpha_par=8.0, alpha_perp=2.0)
        ms_swapped = MagnificationSpec(angle_deg=115.0, alpha_par=2.0, alpha_perp=8.0)
        a = phase_mag_axial(np.stack([tex, f1]), ms)
        b = phase_mag_axial(np.stack([tex, f1]), ms_swapped)
        assert np.abs(a - b).max() <= 1e-6

    def test_x_vs_y_role_swap(self):
        n, lam = 128, 32.0
        f0 = 0.5 + 0.2 * (
            np.tile(np.cos(2 * np.pi * np.arange(n) / lam), (n, 1))
            + np.tile(np.cos(2 * np.pi * np.arange(n)[:, None] / lam), (1, n))
        )
        f1 = translate_bilinear(f0, 1.0, 0.0)
        out_x = phase_mag_axial(
            np.stack([f0, f1]),
            MagnificationSpec(angle_deg=0.0, alpha_par=5.0, alpha_perp=1.0),
        )
        out_y = phase_mag_axial(
            np.stack([f0, f1]),
            MagnificationSpec(angle_deg=90.0, alpha_par=1.0, alpha_perp=5.0),
        )
        dx_x = _bin_shift(f0, out_x[1], lam, axis=1)
        dx_y = _bin_shift(f0, out_y[1], lam, axis=1)
        assert abs(dx_x - dx_y) <= 0.05  # same assignment, two namings

    def test_two_frame_static_dynamic_equivalence(self):
        f0 = _grating(n=64)
        f1 = translate_bilinear(f0, 0.3, 0.1)
        frames = np.stack([f0, f1])
        a = phase_mag_axial(
            frames, MagnificationSpec(0.0, 5.0, 1.0, mode="static")
        )
        b = phase_mag_axial(
            frames, MagnificationSpec(0.0, 5.0, 1.0, mode="dynamic")
        )
        assert np.array_equal(a, b)

    def test_per_pixel_map_matches_scalar(self):
        f0 = _grating(n=64)
        f1 = translate_bilinear(f0, 0.3, 0.0)
        pmap = np.empty((64, 64, 2))
        pmap[:, :, 0] = 6.0
        pmap[:, :, 1] = 2.0
        a = phase_mag_axial(
            np.stack([f0, f1]), MagnificationSpec(10.0, 6.0, 2.0)
        )
        b = phase_mag_axial(
            np.stack([f0, f1]),
            MagnificationSpec(10.0, 0.0, 0.0, per_pixel_map=pmap),
        )
        assert np.array_equal(a, b)

    def test_requires_two_orientations(self):
        frames = np.zeros((2, 64, 64))
        with pytest.raises(ValueError):
            phase_mag_axial(
                frames,
                MagnificationSpec(0.0, 1.0, 0.0),
                spec=PyramidSpec(orientations=4),
            )

    def test_magnification_spec_validation(self):
        with pytest.raises(ValueError):
            MagnificationSpec(0.0, -1.0, 0.0)
        with pytest.raises(ValueError):
            MagnificationSpec(0.0, 1.0, 0.0, mode="nope")
