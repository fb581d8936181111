"""
Monostatic beat-signal synthesis, calibration and dual-band merging.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import Aperture, BeatCube, ChirpConfig, Scene, uniform_step, wavenumber_axis


@dataclass(frozen=True)
class CaptureErrors:
    """Impairments injected into a simulated capture.

    ``phase_offset`` is constant over wavenumber and elements, ``range_bias``
    is added to every range, and ``noise_sigma`` is the total standard
    deviation of circular complex Gaussian noise.
    """

    phase_offset: float = 0.0
    range_bias: float = 0.0
    noise_sigma: float = 0.0

    def __post_init__(self):
        if not self.noise_sigma >= 0:
            raise ValueError("noise_sigma must be >= 0")
        if not (math.isfinite(self.range_bias) and math.isfinite(self.phase_offset)):
            raise ValueError("phase_offset and range_bias must be finite")


@dataclass(frozen=True)
class DualRadarLayout:
    delta_x: float = 0.0

    def __post_init__(self):
        if not math.isfinite(self.delta_x):
            raise ValueError("delta_x must be finite")


@dataclass(frozen=True)
class CalibrationResult:
    phase_offset: float = 0.0
    range_bias: float = 0.0
    chirp: Optional[ChirpConfig] = None


NO_ERRORS = CaptureErrors()


def derive_seed(seed: int, stream: int) -> int:
    """Independent child seed of ``seed`` for a numbered capture."""
    return int(np.random.SeedSequence([int(seed), int(stream)]).generate_state(1)[0])


def _noise(shape: tuple, sigma: float, seed: int) -> np.ndarray:
    # one stream per element so results do not depend on evaluation order
    n_el = int(np.prod(shape[:-1]))
    out = np.empty((n_el, shape[-1]), dtype=complex)
    for i in range(n_el):
        rng = np.random.default_rng([int(seed), i])
        z = rng.standard_normal((2, shape[-1]))
        out[i] = (z[0] + 1j * z[1]) * (sigma / math.sqrt(2.0))
    return out.reshape(shape)


def simulate_positions(
    positions: np.ndarray,
    k: np.ndarray,
    scene: Scene,
    errors: CaptureErrors = NO_ERRORS,
    rng_seed: int = 0,
    path_loss: bool = True,
) -> np.ndarray:
    """Beat samples for arbitrary element positions, shape ``positions.shape[:-1] + k.shape``."""
    el = np.asarray(positions, dtype=float)
    grid = el.shape[:-1]
    el = el.reshape(-1, 3)
    k = np.asarray(k, dtype=float)
    out = np.zeros((el.shape[0], k.size), dtype=complex)
    for p, sigma in zip(scene.positions, scene.sigmas):
        R = np.linalg.norm(el - p, axis=1)
        if np.any(R == 0):
            raise ValueError(f"scatterer at {tuple(float(v) for v in p)} coincides with an aperture element")
        amp = sigma / R**2 if path_loss else np.full_like(R, sigma)
        out += amp[:, None] * np.exp(2j * np.outer(R + errors.range_bias, k))
    if errors.phase_offset:
        out *= np.exp(1j * errors.phase_offset)
    out = out.reshape(grid + (k.size,))
    if errors.noise_sigma > 0:
        out = out + _noise(out.shape, errors.noise_sigma, rng_seed)
    return out


def simulate_beat(
    scene: Scene,
    aperture: Aperture,
    chirp: ChirpConfig,
    errors: CaptureErrors = NO_ERRORS,
    rng_seed: int = 0,
    path_loss: bool = True,
) -> BeatCube:
    """Simulate the dechirped beat signal of ``scene`` over every aperture element.

    Each sample is ``sum(sigma / R**2 * exp(2j k (R + range_bias))) * exp(j phase_offset)``
    plus seeded noise. The residual video phase term is neglected.
    """
    s = simulate_positions(
        aperture.positions(), wavenumber_axis(chirp), scene, errors, rng_seed, path_loss
    )
    return BeatCube(s, aperture, chirp)


def simulate_dual(
    scene: Scene,
    aperture: Aperture,
    chirp1: ChirpConfig,
    chirp2: ChirpConfig,
    layout: DualRadarLayout,
    errors1: CaptureErrors = NO_ERRORS,
    errors2: CaptureErrors = NO_ERRORS,
    seed: int = 0,
) -> tuple:
    """Captures from two radars scanned together, radar 2 offset by ``layout.delta_x``.

    Radar 1 draws noise from ``seed``; radar 2 from an independent child seed.
    """
    if aperture.geometry != "rectilinear":
        raise ValueError("dual-radar capture needs a rectilinear aperture")
    cube1 = simulate_beat(scene, aperture, chirp1, errors1, seed)
    ap2 = Aperture.rectilinear(aperture.x + layout.delta_x, aperture.y, aperture.Z0)
    cube2 = simulate_beat(scene, ap2, chirp2, errors2, derive_seed(seed, 1))
    return cube1, cube2


def _interp_complex(x_new, x, y):
    return np.interp(x_new, x, y.real) + 1j * np.interp(x_new, x, y.imag)


def merge_dual_band(cube60: BeatCube, cube77: BeatCube) -> BeatCube:
    """Merge two sub-band captures onto one uniform wavenumber grid.

    The grid uses the second cube's spacing and spans both bands. Bins inside
    a band are linearly interpolated from that band; where the bands overlap
    the second cube wins. Bins between the bands are zero.
    """
    ap_a, ap_b = cube60.aperture, cube77.aperture
    if ap_a.shape != ap_b.shape or not np.allclose(
        ap_a.positions(), ap_b.positions(), rtol=0, atol=1e-9
    ):
        raise ValueError("cubes must share the same element grid")
    ka, kb = cube60.k, cube77.k
    for k in (ka, kb):
        d = np.diff(k)
        if np.max(np.abs(d - d.mean())) > 1e-9 * abs(d.mean()):
            raise ValueError("wavenumber axes must be uniform")
    dk = uniform_step(kb)
    kmin = min(ka[0], kb[0])
    kmax = max(ka[-1], kb[-1])
    n = int(round((kmax - kmin) / dk)) + 1
    k_out = kmin + dk * np.arange(n)
    tol = 1e-9 * dk

    sa = cube60.samples.reshape(-1, ka.size)
    sb = cube77.samples.reshape(-1, kb.size)
    out = np.zeros((sa.shape[0], n), dtype=complex)
    for k_src, s_src in ((ka, sa), (kb, sb)):
        inside = (k_out >= k_src[0] - tol) & (k_out <= k_src[-1] + tol)
        kk = np.clip(k_out[inside], k_src[0], k_src[-1])
        for e in range(out.shape[0]):
            out[e, inside] = _interp_complex(kk, k_src, s_src[e])
    return BeatCube(out.reshape(ap_b.shape + (n,)), ap_b, cube77.chirp, k_out)


def subtract_background(cube: BeatCube, background: BeatCube) -> BeatCube:
    """Remove an empty-scene capture from ``cube``."""
    if cube.samples.shape != background.samples.shape:
        raise ValueError("background capture has a different shape")
    return cube.with_samples(cube.samples - background.samples)


def apply_calibration(cube: BeatCube, cal: CalibrationResult) -> BeatCube:
    """Undo a constant phase offset and range bias.

    Not idempotent: applying the same correction twice removes it twice.
    """
    if cal.chirp is not None and cal.chirp != cube.chirp:
        raise ValueError("calibration was estimated for a different chirp")
    corr = np.exp(-1j * cal.phase_offset) * np.exp(-2j * cube.k * cal.range_bias)
    return cube.with_samples(cube.samples * corr)


def _wrap(phi: float) -> float:
    """Wrap to (-pi, pi]."""
    w = math.remainder(phi, 2 * math.pi)
    return math.pi if w == -math.pi else w


def calibrate(measured: BeatCube, true_range: float) -> CalibrationResult:
    """Estimate phase offset and range bias from a reflector at a known range.

    Fits ``phase(k) = 2k (true_range + range_bias) + phase_offset`` by least
    squares on the unwrapped phase of a single-element capture.
    """
    if measured.aperture.size != 1:
        raise ValueError("calibration expects a single-element capture")
    s = measured.samples.reshape(-1)
    k = measured.k
    phase = np.unwrap(np.angle(s))
    k_ref = k.mean()
    A = np.stack([k - k_ref, np.ones_like(k)], axis=1)
    (slope, at_ref), *_ = np.linalg.lstsq(A, phase, rcond=None)
    if slope <= 0:
        raise ValueError("unwrapped phase slope implies a non-positive range")
    intercept = at_ref - slope * k_ref
    return CalibrationResult(
        phase_offset=_wrap(intercept),
        range_bias=slope / 2 - true_range,
        chirp=measured.chirp,
    )
