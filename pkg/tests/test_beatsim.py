import math

import numpy as np
import pytest

from nfsar.beatsim import (
    CalibrationResult,
    CaptureErrors,
    DualRadarLayout,
    apply_calibration,
    calibrate,
    merge_dual_band,
    simulate_beat,
    simulate_dual,
    subtract_background,
)
from nfsar.core import Aperture, BeatCube, ChirpConfig, Scene, wavenumber_axis

CH = ChirpConfig(77e9, 100e12, 40e-6, 5e6, 64)
SINGLE = Aperture.linear([0.0])
REFLECTOR = Scene.of((0.0, 0.0, 0.3))


def _direct(positions, k, scene, phase=0.0, bias=0.0):
    """Independent evaluation of the beat model with explicit loops."""
    out = np.zeros(positions.shape[:-1] + (k.size,), complex)
    for idx in np.ndindex(positions.shape[:-1]):
        e = positions[idx]
        for s in scene.scatterers:
            R = math.dist(e, s.position)
            for i, kk in enumerate(k):
                out[idx + (i,)] += s.sigma / R**2 * np.exp(1j * (2 * kk * (R + bias) + phase))
    return out


def test_single_scatterer_amplitude_and_phase():
    cube = simulate_beat(Scene.of((0.0, 0.0, 0.5)), SINGLE, CH)
    assert np.allclose(np.abs(cube.samples), 4.0, rtol=1e-12)
    k = wavenumber_axis(CH)
    assert np.allclose(np.angle(cube.samples[0] * np.exp(-2j * k * 0.5)), 0.0, atol=1e-9)


def test_matches_direct_evaluation_with_errors():
    ap = Aperture.rectilinear([-0.01, 0.0, 0.01], [-0.02, 0.0, 0.02], Z0=0.01)
    sc = Scene.of((0.003, -0.01, 0.25), (-0.02, 0.01, 0.3), sigma=0.7)
    err = CaptureErrors(phase_offset=-1.1, range_bias=2e-3)
    got = simulate_beat(sc, ap, CH, err).samples
    want = _direct(ap.positions(), wavenumber_axis(CH), sc, -1.1, 2e-3)
    assert np.allclose(got, want, rtol=1e-12, atol=0)


def test_superposition_and_scaling():
    ap = Aperture.linear(np.linspace(-0.05, 0.05, 9))
    a = Scene.of((0.0, 0.01, 0.2))
    b = Scene.of((0.0, -0.02, 0.35), sigma=2.0)
    s_ab = simulate_beat(a + b, ap, CH).samples
    assert np.array_equal(s_ab, simulate_beat(a, ap, CH).samples + simulate_beat(b, ap, CH).samples)
    scaled = simulate_beat(Scene.of((0.0, 0.01, 0.2), sigma=3.0), ap, CH).samples
    assert np.allclose(scaled, 3.0 * simulate_beat(a, ap, CH).samples, rtol=1e-15, atol=0)


def test_phase_slope_equals_twice_range():
    err = CaptureErrors(range_bias=1e-3)
    s = simulate_beat(REFLECTOR, SINGLE, CH, err).samples[0]
    k = wavenumber_axis(CH)
    slope = np.polyfit(k - k.mean(), np.unwrap(np.angle(s)), 1)[0]
    assert math.isclose(slope, 2 * (0.3 + 1e-3), rel_tol=1e-9)


def test_noise_is_deterministic_and_per_element():
    ap = Aperture.linear(np.linspace(-0.05, 0.05, 5))
    err = CaptureErrors(noise_sigma=0.1)
    a = simulate_beat(REFLECTOR, ap, CH, err, rng_seed=4).samples
    b = simulate_beat(REFLECTOR, ap, CH, err, rng_seed=4).samples
    c = simulate_beat(REFLECTOR, ap, CH, err, rng_seed=5).samples
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    # element i draws the same noise regardless of the aperture it belongs to
    head = Aperture.linear(ap.y[:2])
    d = simulate_beat(REFLECTOR, head, CH, err, rng_seed=4).samples
    assert np.array_equal(d, a[:2])


def test_noise_level():
    ap = Aperture.linear(np.linspace(-0.05, 0.05, 64))
    clean = simulate_beat(REFLECTOR, ap, CH).samples
    noisy = simulate_beat(REFLECTOR, ap, CH, CaptureErrors(noise_sigma=0.5), rng_seed=1).samples
    assert np.std(noisy - clean) == pytest.approx(0.5, rel=0.05)


def test_coincident_scatterer_rejected():
    with pytest.raises(ValueError):
        simulate_beat(Scene.of((0.0, 0.0, 0.0)), SINGLE, CH)


def test_errors_validation():
    with pytest.raises(ValueError):
        CaptureErrors(noise_sigma=-1)
    with pytest.raises(ValueError):
        CaptureErrors(range_bias=np.inf)
    with pytest.raises(ValueError):
        DualRadarLayout(np.nan)


def test_dual_colocated_identical():
    ap = Aperture.rectilinear([0.0, 0.001], [0.0, 0.001])
    err = CaptureErrors(noise_sigma=0.0)
    c1, c2 = simulate_dual(REFLECTOR, ap, CH, CH, DualRadarLayout(0.0), err, err, seed=3)
    assert np.array_equal(c1.samples, c2.samples)


def test_dual_offset_uses_shifted_positions():
    ap = Aperture.rectilinear([-0.01, 0.0, 0.01], [0.0, 0.005])
    sc = Scene.of((0.0, 0.0, 0.3))
    _, c2 = simulate_dual(sc, ap, CH, CH, DualRadarLayout(0.05))
    pos = ap.positions().copy()
    pos[..., 0] += 0.05
    assert np.allclose(c2.samples, _direct(pos, wavenumber_axis(CH), sc), rtol=1e-12, atol=0)
    assert np.allclose(c2.aperture.positions(), pos)


def test_dual_bands_disjoint():
    ch60 = ChirpConfig(60e9, 100e12, 40e-6, 5e6, 32)
    ap = Aperture.rectilinear([0.0, 0.001], [0.0, 0.001])
    c1, c2 = simulate_dual(REFLECTOR, ap, ch60, CH, DualRadarLayout(0.0))
    assert c1.k.size == 32 and c2.k.size == 64
    assert c1.k[-1] < c2.k[0]
    with pytest.raises(ValueError):
        simulate_dual(REFLECTOR, Aperture.linear([0.0, 1.0]), CH, CH, DualRadarLayout(0.0))


def test_merge_identical_bands():
    ap = Aperture.linear([0.0, 0.001])
    cube = simulate_beat(REFLECTOR, ap, CH)
    merged = merge_dual_band(cube, cube)
    assert np.allclose(merged.k, cube.k, rtol=1e-14)
    assert np.allclose(merged.samples, cube.samples, rtol=1e-12, atol=0)


def test_merge_gap_is_zero_and_length():
    ch60 = ChirpConfig(60e9, 100e12, 40e-6, 5e6, 64)
    ap = Aperture.linear([0.0, 0.001])
    lo = simulate_beat(REFLECTOR, ap, ch60)
    hi = simulate_beat(REFLECTOR, ap, CH)
    merged = merge_dual_band(lo, hi)
    dk = hi.k[1] - hi.k[0]
    assert merged.k.size == round((hi.k[-1] - lo.k[0]) / dk) + 1
    assert np.allclose(np.diff(merged.k), dk, rtol=1e-9)
    gap = (merged.k > lo.k[-1] + 1e-9) & (merged.k < hi.k[0] - 1e-9)
    assert gap.any()
    assert np.all(merged.samples[:, gap] == 0)
    # inside the upper band the values are linear interpolants of the upper cube
    band = (merged.k >= hi.k[0]) & (merged.k <= hi.k[-1])
    kk = merged.k[band]
    want = np.interp(kk, hi.k, hi.samples[1].real) + 1j * np.interp(kk, hi.k, hi.samples[1].imag)
    assert np.allclose(merged.samples[1, band], want, rtol=1e-12, atol=1e-12)


def test_merge_rejects_mismatched_elements():
    a = simulate_beat(REFLECTOR, Aperture.linear([0.0, 0.001]), CH)
    b = simulate_beat(REFLECTOR, Aperture.linear([0.0, 0.002]), CH)
    with pytest.raises(ValueError):
        merge_dual_band(a, b)


def test_merge_rejects_nonuniform_axis():
    a = simulate_beat(REFLECTOR, SINGLE, CH)
    k = a.k.copy()
    k[3] += 0.3 * (k[1] - k[0])
    bad = BeatCube(a.samples, a.aperture, a.chirp, k)
    with pytest.raises(ValueError):
        merge_dual_band(bad, a)


def test_apply_calibration_identity_and_roundtrip():
    ap = Aperture.linear(np.linspace(-0.02, 0.02, 5))
    clean = simulate_beat(REFLECTOR, ap, CH)
    assert np.array_equal(apply_calibration(clean, CalibrationResult()).samples, clean.samples)
    err = CaptureErrors(0.3, 1e-3)
    dirty = simulate_beat(REFLECTOR, ap, CH, err)
    fixed = apply_calibration(dirty, CalibrationResult(0.3, 1e-3, CH))
    rel = np.max(np.abs(fixed.samples - clean.samples)) / np.max(np.abs(clean.samples))
    assert rel < 1e-9
    twice = apply_calibration(fixed, CalibrationResult(0.3, 1e-3, CH))
    assert not np.allclose(twice.samples, fixed.samples)


def test_apply_calibration_rejects_other_chirp():
    cube = simulate_beat(REFLECTOR, SINGLE, CH)
    other = ChirpConfig(60e9, 100e12, 40e-6, 5e6, 64)
    with pytest.raises(ValueError):
        apply_calibration(cube, CalibrationResult(0.1, 0.0, other))


def test_calibrate_noiseless():
    cube = simulate_beat(REFLECTOR, SINGLE, CH, CaptureErrors(0.3, 1e-3))
    cal = calibrate(cube, 0.3)
    assert abs(cal.phase_offset - 0.3) < 1e-6
    assert abs(cal.range_bias - 1e-3) < 1e-6
    zero = calibrate(simulate_beat(REFLECTOR, SINGLE, CH), 0.3)
    assert abs(zero.phase_offset) < 1e-9 and abs(zero.range_bias) < 1e-12


def test_calibrate_wraps_phase():
    cube = simulate_beat(REFLECTOR, SINGLE, CH, CaptureErrors(3.0 + 2 * np.pi))
    assert calibrate(cube, 0.3).phase_offset == pytest.approx(3.0, abs=1e-6)


def test_calibrate_rejects_multi_element_and_negative_slope():
    ap = Aperture.linear([0.0, 0.001])
    with pytest.raises(ValueError):
        calibrate(simulate_beat(REFLECTOR, ap, CH), 0.3)
    cube = simulate_beat(REFLECTOR, SINGLE, CH)
    with pytest.raises(ValueError):
        calibrate(cube.with_samples(np.conj(cube.samples)), 0.3)


def test_subtract_background():
    ap = Aperture.linear([0.0, 0.001])
    bg = simulate_beat(Scene.of((0.0, 0.0, 0.5)), ap, CH)
    both = simulate_beat(Scene.of((0.0, 0.0, 0.5), (0.0, 0.0, 0.3)), ap, CH)
    target = simulate_beat(REFLECTOR, ap, CH)
    assert np.allclose(subtract_background(both, bg).samples, target.samples, rtol=1e-12, atol=1e-15)
    with pytest.raises(ValueError):
        subtract_background(both, simulate_beat(REFLECTOR, SINGLE, CH))
