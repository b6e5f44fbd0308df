import numpy as np
import pytest
from scipy.ndimage import gaussian_filter

from axmag.imaging import psnr
from axmag.pyramid import (
    PyramidSpec,
    band_phase,
    build_csp,
    collapse_csp,
    get_filter_bank,
    read_pyramid,
    write_pyramid,
)

SPECS = [
    PyramidSpec(orientations=2, octave_fraction=0.5),
    PyramidSpec(orientations=2, octave_fraction=1.0),
    PyramidSpec(orientations=4, octave_fraction=1.0),
    PyramidSpec(orientations=3, octave_fraction=0.5, angle_offset_deg=17.0),
]


def _texture(dims, seed=0, sigma=1.5):
    rng = np.random.default_rng(seed)
    t = gaussian_filter(rng.random(dims), sigma)
    t = 0.5 + 0.45 * (t - t.mean()) / (3 * t.std())
    return np.clip(t, 0, 1)


@pytest.mark.parametrize("spec", SPECS)
@pytest.mark.parametrize("dims", [(64, 64), (67, 53), (96, 128)])
def test_tight_frame_identity(spec, dims):
    total = get_filter_bank(spec, dims).squared_sum()
    assert np.abs(total - 1.0).max() <= 1e-6


@pytest.mark.parametrize("spec", SPECS)
def test_perfect_reconstruction(spec):
    f = _texture((96, 80), seed=1)
    rec = collapse_csp(build_csp(f, spec))
    assert np.abs(rec - f).max() <= 1e-10


def test_constant_frame_dc_lands_in_lowpass():
    f = np.full((64, 64), 0.5)
    pyr = build_csp(f, PyramidSpec(2, 1.0))
    for band in pyr.bands:
        assert np.abs(band).max() <= 1e-12
    assert np.abs(pyr.highpass_residual).max() <= 1e-12
    rec = collapse_csp(pyr)
    assert np.allclose(rec, 0.5, atol=1e-6)


def test_sinusoid_orientation_concentration():
    n = 64
    f = 0.5 + 0.3 * np.cos(2 * np.pi * np.arange(n) / 8.0)
    f = np.tile(f, (n, 1))  # varies along x
    pyr = build_csp(f, PyramidSpec(2, 1.0))
    kk = 2
    e = [0.0, 0.0]
    for s in range(pyr.depth):
        for k in range(kk):
            e[k] += float(np.sum(np.abs(pyr.band(s, k)) ** 2))
    assert e[1] <= 0.01 * (e[0] + e[1])


def test_white_noise_energy_bookkeeping():
    # tight frame: filtered spectral energies sum to the input spectral energy
    f = np.random.default_rng(2).random((64, 64))
    pyr = build_csp(f, PyramidSpec(2, 0.5))
    total = 0.0
    for band in pyr.bands:
        # oriented bands own their conjugate mirror as well
        total += 2.0 * np.sum(np.abs(np.fft.fft2(band)) ** 2)
    total += np.sum(np.abs(np.fft.fft2(pyr.highpass_residual)) ** 2)
    total += np.sum(np.abs(np.fft.fft2(pyr.lowpass_residual)) ** 2)
    ref = np.sum(np.abs(np.fft.fft2(f)) ** 2)
    assert abs(total - ref) <= 1e-4 * ref


def test_natural_image_psnr():
    f = _texture((256, 256), seed=3, sigma=2.0)
    rec = collapse_csp(build_csp(f, PyramidSpec(2, 0.5)))
    assert psnr(rec, f) >= 40.0


def test_zeroed_bands_kill_bandpass_content():
    n = 64
    f = 0.3 * np.cos(2 * np.pi * np.arange(n) / 8.0)
    f = np.tile(f, (n, 1))
    pyr = build_csp(f + 0.5, PyramidSpec(2, 1.0))
    for i in range(len(pyr.bands)):
        pyr.bands[i] = np.zeros_like(pyr.bands[i])
    rec = collapse_csp(pyr) - 0.5
    assert np.sum(rec**2) <= 0.02 * np.sum(f**2)


def test_band_phase_values():
    pyr = build_csp(_texture((64, 64)), PyramidSpec(2, 1.0))
    pyr.bands[0] = np.array([[1 + 0j, 0 + 1j]])
    phases = band_phase(pyr, 0, 0)
    assert phases[0, 0] == 0.0
    assert phases[0, 1] == pytest.approx(np.pi / 2)
    with pytest.raises(IndexError):
        band_phase(pyr, 99, 0)


def test_translation_phase_shift_matches_fourier_theorem():
    n, lam, delta = 64, 8.0, 0.25
    x = np.arange(n)
    f0 = 0.5 + 0.3 * np.cos(2 * np.pi * x / lam)
    f0 = np.tile(f0, (n, 1))
    f1 = np.roll(f0, 1, axis=1)  # integer circular shift, exact
    spec = PyramidSpec(2, 1.0)
    p0, p1 = build_csp(f0, spec), build_csp(f1, spec)
    # lam=8 -> r = 2/lam = 2^-2, i.e. the scale-1 band for full octaves
    d = np.angle(p1.band(1, 0) * np.conj(p0.band(1, 0)))
    mag = np.abs(p0.band(1, 0))
    strong = mag > 0.1 * mag.max()
    # shift theorem: |phase change| = 2*pi*delta/lam (sign follows e^{-iw d})
    expected = 2 * np.pi * 1.0 / lam
    assert np.allclose(np.abs(d[strong]), expected, atol=1e-6)


def test_band_level_shift_equivariance():
    f = _texture((64, 64), seed=4)
    shift = 4
    g = np.roll(f, shift, axis=1)
    spec = PyramidSpec(2, 1.0)
    pf, pg = build_csp(f, spec), build_csp(g, spec)
    for s in range(pf.depth):
        band_f = pf.band(s, 0)
        band_g = pg.band(s, 0)
        n = band_f.shape[1]
        sub_shift = shift * n / 64.0
        # shift the band spectrally by the scaled displacement
        freq = np.fft.fftfreq(n)
        ramp = np.exp(-2j * np.pi * freq * sub_shift)[None, :]
        shifted = np.fft.ifft(np.fft.fft(band_f, axis=1) * ramp, axis=1)
        assert np.abs(np.abs(shifted) - np.abs(band_g)).max() <= 1e-4


def test_negation_flips_phase_by_pi():
    f = _texture((64, 64), seed=5) - 0.5
    spec = PyramidSpec(2, 1.0)
    pa, pb = build_csp(f, spec), build_csp(-f, spec)
    for s in range(pa.depth):
        for k in range(2):
            ca, cb = pa.band(s, k), pb.band(s, k)
            mask = np.abs(ca) > 1e-8
            dphi = np.abs(np.angle(cb[mask] * np.conj(ca[mask])))
            assert np.allclose(dphi, np.pi, atol=1e-8)


def test_depth_validation():
    with pytest.raises(ValueError):
        build_csp(np.zeros((64, 64)), PyramidSpec(2, 1.0, depth=12))
    with pytest.raises(ValueError):
        build_csp(np.zeros((16, 16)), PyramidSpec(2, 1.0))
    with pytest.raises(ValueError):
        PyramidSpec(orientations=1)


def test_serialization_roundtrip(tmp_path):
    f = _texture((64, 48), seed=6)
    pyr = build_csp(f, PyramidSpec(2, 0.5, angle_offset_deg=30.0))
    write_pyramid(pyr, tmp_path / "pyr")
    back = read_pyramid(tmp_path / "pyr")
    assert back.spec.orientations == 2
    assert back.spec.angle_offset_deg == 30.0
    for i, band in enumerate(pyr.bands):
        assert np.abs(band - back.bands[i]).max() <= 1e-5
    rec = collapse_csp(back)
    assert psnr(rec, f) >= 60.0
