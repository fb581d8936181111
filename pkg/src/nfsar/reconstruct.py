"""
Fourier-domain near-field image reconstruction.

Every algorithm maps a :class:`~nfsar.core.BeatCube` to an
:class:`~nfsar.core.ImageVolume` on the voxel grid of a :class:`ReconGrid`.
Amplitude terms are ignored except for the ``k_z`` factor of the rectilinear
methods. Final inverse transforms are evaluated exactly at the requested
voxel centers.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import ndimage

from .core import BeatCube, ImageVolume, _check_uniform, uniform_step
from .spectral import (
    dispersion_kz,
    ft_nd,
    inverse_at,
    inverse_grid,
    next_pow2,
    polar_regrid,
    stolt_resample,
)

ALGORITHMS = {
    "linear_fft_1d": ("linear", ("y",)),
    "linear_rma_2d": ("linear", ("y", "z")),
    "rectilinear_fft_2d": ("rectilinear", ("x", "y")),
    "rectilinear_rma_3d": ("rectilinear", ("x", "y", "z")),
    "circular_pfa_2d": ("circular", ("x", "z")),
    "cylindrical_pfa_3d": ("cylindrical", ("x", "y", "z")),
}

# angular oversampling of the polar spectrum ahead of bilinear regridding
ALPHA_UPSAMPLE = 8


@dataclass(frozen=True, eq=False)
class ReconGrid:
    """Requested voxel centers per dimension, plus the target plane ``z0``.

    ``z0`` is only used by the fixed-plane FFT methods (and by the
    back-projection oracle when the grid has no z axis).
    """

    axes: dict
    z0: Optional[float] = None

    def __post_init__(self):
        axes = {}
        for name, a in self.axes.items():
            if name not in ("x", "y", "z"):
                raise ValueError(f"unknown axis {name!r}")
            a = np.atleast_1d(np.asarray(a, dtype=float))
            _check_uniform(name, a)
            if a.size > 1 and a[1] < a[0]:
                raise ValueError(f"axis {name} must be increasing")
            axes[name] = a
        object.__setattr__(self, "axes", axes)

    @classmethod
    def linspace(cls, z0=None, **spans) -> "ReconGrid":
        """``ReconGrid.linspace(x=(-0.1, 0.1, 41), ...)``."""
        return cls({n: np.linspace(*s) for n, s in spans.items()}, z0)

    def pitch(self, name: str) -> float:
        a = self.axes[name]
        return uniform_step(a) if a.size > 1 else 0.0

    def extent(self, name: str) -> float:
        a = self.axes[name]
        return float(a[-1] - a[0])

    def center(self, name: str) -> float:
        a = self.axes[name]
        return float(0.5 * (a[0] + a[-1]))


def _require(cube: BeatCube, grid: ReconGrid, algorithm: str) -> None:
    geometry, dims = ALGORITHMS[algorithm]
    if cube.aperture.geometry != geometry:
        raise ValueError(f"{algorithm} needs a {geometry} aperture, got {cube.aperture.geometry}")
    if tuple(grid.axes) != dims:
        raise ValueError(f"{algorithm} expects grid axes {dims}, got {tuple(grid.axes)}")


def _pad_len(n: int, step: float = 0.0, extent: float = 0.0) -> int:
    """Transform length: at least twice the samples and a spatial period of twice ``extent``."""
    need = 2 * n
    if step > 0:
        need = max(need, 2 * extent / step)
    return next_pow2(need)


def _padded(axis: np.ndarray, grid: ReconGrid, name: str) -> int:
    return _pad_len(axis.size, uniform_step(axis), grid.extent(name))


def _to_grid(P, k_axes, grid: ReconGrid, offsets=None) -> ImageVolume:
    """Inverse-transform every axis of ``P`` onto the grid, in axis order."""
    names = list(grid.axes)
    offsets = offsets or {}
    vals = P
    for d, (name, k) in enumerate(zip(names, k_axes)):
        x = grid.axes[name] - offsets.get(name, 0.0)
        vals = inverse_at(vals, k, x, axis=d)
    return ImageVolume(vals, grid.axes)


def _stolt_axis(k, kz_min: float) -> np.ndarray:
    """Uniform k_z grid from ``kz_min`` to ``2*max(k)`` at the source spacing of ``2k``."""
    dkz = 2 * uniform_step(k)
    kz_max = 2 * k[-1]
    kz_min = min(max(kz_min, 0.0), 2 * k[0])
    n = int(np.ceil((kz_max - kz_min) / dkz)) + 1
    return kz_max - dkz * np.arange(n)[::-1]


def _cos_max_angle(transverse_el: list, transverse_vox: list, dz_min: float) -> float:
    """Cosine of the widest element-to-voxel angle off the aperture normal."""
    if dz_min <= 0:
        return 0.0
    spread = 0.0
    for e, v in zip(transverse_el, transverse_vox):
        spread += max(abs(e.max() - v.min()), abs(v.max() - e.min())) ** 2
    return float(dz_min / np.hypot(np.sqrt(spread), dz_min))


def linear_fft_1d(cube: BeatCube, grid: ReconGrid) -> ImageVolume:
    """1-D image along y of a target line at ``z = grid.z0`` from a linear scan."""
    _require(cube, grid, "linear_fft_1d")
    if grid.z0 is None:
        raise ValueError("linear_fft_1d needs the target plane z0")
    ap = cube.aperture
    k = cube.k
    S = ft_nd(cube.samples, [ap.y, None], dims=[0], n=[_padded(ap.y, grid, "y")])
    ky = S.axes[0]
    kz = dispersion_kz(k[None, :], ky[:, None] ** 2)
    prop = np.isfinite(kz)
    kz = np.nan_to_num(kz)
    P = np.where(prop, S.values * np.exp(-1j * kz * (grid.z0 - ap.Z0)), 0).sum(axis=1)
    return _to_grid(P, [ky], grid)


def rectilinear_fft_2d(cube: BeatCube, grid: ReconGrid) -> ImageVolume:
    """2-D image in x-y of a target plane at ``z = grid.z0`` from a rectilinear scan."""
    _require(cube, grid, "rectilinear_fft_2d")
    if grid.z0 is None:
        raise ValueError("rectilinear_fft_2d needs the target plane z0")
    ap = cube.aperture
    k = cube.k
    S = ft_nd(
        cube.samples,
        [ap.x, ap.y, None],
        dims=[0, 1],
        n=[_padded(ap.x, grid, "x"), _padded(ap.y, grid, "y")],
    )
    kx, ky = S.axes[0], S.axes[1]
    P = np.zeros((kx.size, ky.size), dtype=complex)
    dz = grid.z0 - ap.Z0
    kperp_sq = kx[:, None] ** 2 + ky[None, :] ** 2
    for i, ki in enumerate(k):
        kz = dispersion_kz(ki, kperp_sq)
        prop = np.isfinite(kz)
        kz = np.nan_to_num(kz)
        P += np.where(prop, S.values[..., i] * kz * np.exp(-1j * kz * dz), 0)
    return _to_grid(P, [kx, ky], grid)


def linear_rma_2d(cube: BeatCube, grid: ReconGrid) -> ImageVolume:
    """2-D image in y-z from a linear scan by range migration with Stolt interpolation."""
    _require(cube, grid, "linear_rma_2d")
    ap = cube.aperture
    k = cube.k
    S = ft_nd(np.conj(cube.samples), [ap.y, None], dims=[0], n=[_padded(ap.y, grid, "y")])
    ky = S.axes[0]
    z = grid.axes["z"]
    cos_max = _cos_max_angle([ap.y], [grid.axes["y"]], np.min(np.abs(z - ap.Z0)))
    kz_axis = _stolt_axis(k, 2 * k[0] * cos_max)
    zc = grid.center("z")
    # demodulating to the grid center keeps the interpolated spectrum smooth
    Pz = stolt_resample(S.values, k, [ky], kz_axis, z_phase=ap.Z0 - zc)
    return _to_grid(Pz, [ky, kz_axis], grid, offsets={"z": zc})


def rectilinear_rma_3d(cube: BeatCube, grid: ReconGrid) -> ImageVolume:
    """3-D image from a rectilinear scan by range migration with Stolt interpolation."""
    _require(cube, grid, "rectilinear_rma_3d")
    ap = cube.aperture
    k = cube.k
    S = ft_nd(
        np.conj(cube.samples),
        [ap.x, ap.y, None],
        dims=[0, 1],
        n=[_padded(ap.x, grid, "x"), _padded(ap.y, grid, "y")],
    )
    kx, ky = S.axes[0], S.axes[1]
    kz_src = dispersion_kz(k, (kx[:, None] ** 2 + ky[None, :] ** 2)[..., None])
    weighted = S.values * np.nan_to_num(kz_src)
    z = grid.axes["z"]
    cos_max = _cos_max_angle(
        [ap.x, ap.y], [grid.axes["x"], grid.axes["y"]], np.min(np.abs(z - ap.Z0))
    )
    kz_axis = _stolt_axis(k, 2 * k[0] * cos_max)
    zc = grid.center("z")
    Pz = stolt_resample(weighted, k, [kx, ky], kz_axis, z_phase=ap.Z0 - zc)
    return _to_grid(Pz, [kx, ky, kz_axis], grid, offsets={"z": zc})


def _angular_setup(theta: np.ndarray):
    dth = uniform_step(theta)
    full = theta.size * dth >= 2 * np.pi * (1 - 1e-9)
    npad = theta.size if full else _pad_len(theta.size)
    lags = (np.arange(npad) - npad // 2) * dth
    return dth, full, npad, lags


def _polar_spectrum(S_theta, G_theta, ktheta, theta, full, npad):
    """Matched-filter a theta spectrum and return ``P(alpha, .)`` on an oversampled alpha grid."""
    dth = uniform_step(theta)
    Q = S_theta * np.conj(G_theta)
    nfft = ALPHA_UPSAMPLE * npad
    if full:
        P, alpha = inverse_grid(Q, ktheta, theta[0], nfft, axis=0)
        return P, alpha
    center = 0.5 * (theta[0] + theta[-1])
    P, alpha = inverse_grid(Q, ktheta, center - 0.5 * npad * dth, nfft, axis=0)
    # keep angles whose lags to every element stay inside the kernel window
    half = 0.5 * (theta[-1] - theta[0]) + 0.5 * theta.size * dth
    keep = np.abs(alpha - center) <= half
    return P[keep], alpha[keep]


def _cartesian_axes(kr_max: float, kr_min: float, alpha, full: bool, grid: ReconGrid):
    """Rectangular (kx, kz) axes covering the annular sector of the polar data."""
    if full:
        lo_x, hi_x, lo_z, hi_z = -kr_max, kr_max, -kr_max, kr_max
    else:
        a = np.linspace(alpha[0], alpha[-1], 721)
        ring = np.concatenate([kr_min * np.exp(1j * a), kr_max * np.exp(1j * a)])
        for c in np.arange(-4, 5) * (np.pi / 2):
            if alpha[0] <= c <= alpha[-1]:
                ring = np.append(ring, kr_max * np.exp(1j * c))
        lo_x, hi_x = ring.real.min(), ring.real.max()
        lo_z, hi_z = ring.imag.min(), ring.imag.max()
    out = []
    for lo, hi, name in ((lo_x, hi_x, "x"), (lo_z, hi_z, "z")):
        period = 2 * max(grid.extent(name), 4 * max(grid.pitch(name), 1e-3))
        dk = 2 * np.pi / period
        if full:
            # symmetric about zero so quarter-turns map the grid onto itself
            m = int(np.ceil(hi / dk))
            out.append(dk * np.arange(-m, m + 1))
        else:
            n = int(np.ceil((hi - lo) / dk)) + 1
            out.append(lo + dk * np.arange(n))
    return out


def circular_pfa_2d(cube: BeatCube, grid: ReconGrid) -> ImageVolume:
    """2-D image in x-z from a circular scan by the polar formatting algorithm."""
    _require(cube, grid, "circular_pfa_2d")
    ap = cube.aperture
    k = cube.k
    theta = ap.theta
    dth, full, npad, lags = _angular_setup(theta)
    S = ft_nd(cube.samples, [theta, None], dims=[0], n=[npad])
    g = np.exp(2j * np.outer(np.cos(lags), k) * ap.R0)
    G = ft_nd(g, [lags, None], dims=[0])
    P, alpha = _polar_spectrum(S.values, G.values, S.axes[0], theta, full, npad)
    kr = 2 * k
    kx_axis, kz_axis = _cartesian_axes(kr[-1], kr[0], alpha, full, grid)
    Pxz = polar_regrid(P, alpha, kr, kx_axis, kz_axis)
    return _to_grid(Pxz, [kx_axis, kz_axis], grid)


def cylindrical_pfa_3d(cube: BeatCube, grid: ReconGrid) -> ImageVolume:
    """3-D image from a cylindrical scan by the polar formatting algorithm."""
    _require(cube, grid, "cylindrical_pfa_3d")
    ap = cube.aperture
    k = cube.k
    theta = ap.theta
    dth, full, npad, lags = _angular_setup(theta)
    S = ft_nd(
        cube.samples, [theta, ap.y, None], dims=[0, 1], n=[npad, _padded(ap.y, grid, "y")]
    )
    ktheta, ky = S.axes[0], S.axes[1]
    kr_full = 2 * k
    alpha = None
    slices = []
    for j, kyj in enumerate(ky):
        kr = dispersion_kz(k, kyj**2)
        g = np.exp(1j * np.outer(np.cos(lags), np.nan_to_num(kr)) * ap.R0)
        G = ft_nd(g, [lags, None], dims=[0])
        Sj = np.where(np.isfinite(kr), S.values[:, j, :], 0)
        P, alpha = _polar_spectrum(Sj, G.values, ktheta, theta, full, npad)
        slices.append((P, kr))
    kx_axis, kz_axis = _cartesian_axes(kr_full[-1], 0.0, alpha, full, grid)
    out = np.zeros((kx_axis.size, ky.size, kz_axis.size), dtype=complex)
    for j, (P, kr) in enumerate(slices):
        if np.isfinite(kr).sum() >= 2:
            out[:, j, :] = polar_regrid(P, alpha, kr, kx_axis, kz_axis)
    return _to_grid(out, [kx_axis, ky, kz_axis], grid)


RECONSTRUCTORS = {
    "linear_fft_1d": linear_fft_1d,
    "linear_rma_2d": linear_rma_2d,
    "rectilinear_fft_2d": rectilinear_fft_2d,
    "rectilinear_rma_3d": rectilinear_rma_3d,
    "circular_pfa_2d": circular_pfa_2d,
    "cylindrical_pfa_3d": cylindrical_pfa_3d,
}


def reconstruct(cube: BeatCube, grid: ReconGrid, algorithm: str) -> ImageVolume:
    try:
        fn = RECONSTRUCTORS[algorithm]
    except KeyError:
        raise ValueError(f"unknown algorithm {algorithm!r}") from None
    return fn(cube, grid)


def voxel_positions(grid: ReconGrid) -> np.ndarray:
    """(x, y, z) of every voxel, shaped ``grid shape + (3,)``.

    Missing x or y coordinates are 0; a missing z takes ``grid.z0``.
    """
    names = list(grid.axes)
    mesh = np.meshgrid(*grid.axes.values(), indexing="ij")
    shape = mesh[0].shape
    cols = []
    for name, default in (("x", 0.0), ("y", 0.0), ("z", grid.z0)):
        if name in names:
            cols.append(mesh[names.index(name)])
        else:
            if default is None:
                raise ValueError("grid without a z axis needs z0")
            cols.append(np.full(shape, float(default)))
    return np.stack(cols, axis=-1)


def backprojection_oracle(
    cube: BeatCube, grid: ReconGrid, chunk_elems: int = 4_000_000
) -> ImageVolume:
    """Direct conjugate-phase sum ``sum_e sum_k s(e, k) exp(-2j k R(e, v))`` per voxel.

    Slow but exact; works for every geometry. This is the adjoint of the
    noiseless forward model without path loss.
    """
    el = cube.aperture.positions().reshape(-1, 3)
    s = cube.samples.reshape(el.shape[0], -1)
    k = cube.k
    vox = voxel_positions(grid)
    shape = vox.shape[:-1]
    vox = vox.reshape(-1, 3)
    out = np.zeros(vox.shape[0], dtype=complex)
    dk = np.diff(k)
    uniform = k.size > 1 and np.allclose(dk, dk[0], rtol=1e-9, atol=0)
    step_v = max(1, chunk_elems // max(el.shape[0], 1))
    for v0 in range(0, vox.shape[0], step_v):
        v = vox[v0 : v0 + step_v]
        R = np.sqrt(((el[:, None, :] - v[None, :, :]) ** 2).sum(-1))
        acc = np.zeros(v.shape[0], dtype=complex)
        if uniform:
            ph = np.exp(-2j * k[0] * R)
            rot = np.exp(-2j * dk[0] * R)
            for i in range(k.size):
                acc += s[:, i] @ ph
                ph *= rot
        else:
            for i in range(k.size):
                acc += s[:, i] @ np.exp(-2j * k[i] * R)
        out[v0 : v0 + step_v] = acc
    return ImageVolume(out.reshape(shape), grid.axes)


def normalized_correlation(a: np.ndarray, b: np.ndarray) -> float:
    """Pearson correlation of two magnitude images (mean removed)."""
    a = np.abs(np.asarray(a)).ravel()
    b = np.abs(np.asarray(b)).ravel()
    a = a - a.mean()
    b = b - b.mean()
    den = np.linalg.norm(a) * np.linalg.norm(b)
    return float(a @ b / den) if den > 0 else 0.0


@dataclass(frozen=True)
class Peak:
    position: dict
    amplitude: float
    relative_db: float


def find_peaks(image: ImageVolume, max_peaks: int = 10, threshold_db: float = -6.0) -> list:
    """Local magnitude maxima within ``threshold_db`` of the global maximum, strongest first.

    A voxel is a local maximum if no neighbour (including diagonals) exceeds it;
    of a flat plateau only the first voxel in C order is kept.
    """
    mag = image.magnitude
    top = float(mag.max())
    if top <= 0:
        return []
    is_max = mag == ndimage.maximum_filter(mag, size=3, mode="constant", cval=-np.inf)
    is_max &= mag >= top * 10 ** (threshold_db / 20)
    labels, _ = ndimage.label(is_max, structure=np.ones((3,) * mag.ndim))
    idx = np.argwhere(is_max)
    seen, peaks = set(), []
    for i in sorted(map(tuple, idx), key=lambda t: (-mag[t], t)):
        lab = labels[i]
        if lab in seen:
            continue
        seen.add(lab)
        pos = {n: float(a[j]) for (n, a), j in zip(image.axes.items(), i)}
        amp = float(mag[i])
        peaks.append(Peak(pos, amp, float(20 * np.log10(amp / top))))
        if len(peaks) >= max_peaks:
            break
    return peaks
