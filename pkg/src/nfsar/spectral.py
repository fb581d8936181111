"""
Spatial Fourier transforms and spectral regridding.

Transforms keep physical coordinates: a forward transform of samples at
``u0 + n*du`` is ``(1/sqrt(N)) * sum x_n exp(-1j k u_n)`` evaluated on a
zero-centered wavenumber axis ``k_m = (m - N//2) * 2*pi/(N*du)``. The inverse
uses ``exp(+1j k u)`` with the same normalization, so round trips are exact and
Parseval holds as an equality.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import uniform_step


class AxisError(ValueError):
    pass


def _as_uniform(axis, name="axis") -> tuple:
    a = np.asarray(axis, dtype=float)
    if a.ndim != 1 or a.size < 2:
        raise AxisError(f"{name}: need a 1-D axis with at least two samples")
    d = np.diff(a)
    step = (a[-1] - a[0]) / (a.size - 1)
    if step <= 0 or np.max(np.abs(d - step)) > 1e-6 * step:
        raise AxisError(f"{name}: axis must be uniform and increasing")
    return a, step


def next_pow2(n: float) -> int:
    return 1 << max(0, int(np.ceil(np.log2(max(n, 1)))))


@dataclass(frozen=True, eq=False)
class SpectralGrid:
    """Values over mixed spatial/spectral axes.

    ``axes[d]`` holds wavenumbers (rad/m) for every transformed dimension and
    the untouched coordinates otherwise; ``spatial[d]`` remembers the spatial
    axis a transformed dimension came from (``None`` if untransformed).
    """

    values: np.ndarray
    axes: tuple
    spatial: tuple

    @property
    def dims(self) -> tuple:
        return tuple(d for d, s in enumerate(self.spatial) if s is not None)


def spectral_axis(n: int, step: float) -> np.ndarray:
    dk = 2 * np.pi / (n * step)
    return (np.arange(n) - n // 2) * dk


def ft_nd(values, axes, dims=None, n=None, taper: bool = False) -> SpectralGrid:
    """Forward spatial Fourier transform along ``dims``.

    Args:
        values: complex samples.
        axes: one coordinate array per dimension of ``values`` (entries for
            dimensions that are not transformed may be ``None``).
        dims: dimensions to transform, default all.
        n: optional transform length per entry of ``dims``; extra samples are
            zeros appended past the end of the spatial axis.
        taper: apply a Hann taper along each transformed dimension first.
    """
    x = np.asarray(values, dtype=complex)
    dims = tuple(range(x.ndim)) if dims is None else tuple(d % x.ndim for d in dims)
    if n is None:
        n = [x.shape[d] for d in dims]
    out_axes = list(axes)
    spatial = [None] * x.ndim
    for d, nd in zip(dims, n):
        u, du = _as_uniform(axes[d], f"axis {d}")
        if u.size != x.shape[d]:
            raise AxisError(f"axis {d} has {u.size} samples, data has {x.shape[d]}")
        if nd < u.size:
            raise AxisError("transform length shorter than the data")
        if taper:
            w = np.hanning(u.size + 2)[1:-1]
            x = x * w.reshape([-1 if i == d else 1 for i in range(x.ndim)])
        u_full = u[0] + du * np.arange(nd)
        k = spectral_axis(nd, du)
        X = np.fft.fftshift(np.fft.fft(x, n=nd, axis=d, norm="ortho"), axes=d)
        shape = [-1 if i == d else 1 for i in range(x.ndim)]
        x = X * np.exp(-1j * k * u_full[0]).reshape(shape)
        out_axes[d] = k
        spatial[d] = u_full
    return SpectralGrid(x, tuple(out_axes), tuple(spatial))


def ift_nd(grid: SpectralGrid, dims=None) -> tuple:
    """Inverse of :func:`ft_nd`; returns ``(values, axes)`` on the spatial grid."""
    x = np.asarray(grid.values, dtype=complex)
    dims = grid.dims if dims is None else tuple(d % x.ndim for d in dims)
    axes = list(grid.axes)
    for d in dims:
        u = grid.spatial[d]
        if u is None:
            raise AxisError(f"dimension {d} was not transformed")
        k = np.asarray(grid.axes[d])
        shape = [-1 if i == d else 1 for i in range(x.ndim)]
        x = x * np.exp(1j * k * u[0]).reshape(shape)
        x = np.fft.ifft(np.fft.ifftshift(x, axes=d), axis=d, norm="ortho")
        axes[d] = u
    return x, tuple(axes)


def spatial_shift_phase(grid: SpectralGrid, offsets) -> SpectralGrid:
    """Translate the underlying spatial function by ``offsets`` (one per transformed dim)."""
    x = grid.values
    dims = grid.dims
    if len(offsets) != len(dims):
        raise AxisError("need one offset per transformed dimension")
    phase = np.zeros(x.shape)
    for d, off in zip(dims, offsets):
        shape = [-1 if i == d else 1 for i in range(x.ndim)]
        phase = phase + (np.asarray(grid.axes[d]) * off).reshape(shape)
    return SpectralGrid(x * np.exp(-1j * phase), grid.axes, grid.spatial)


def inverse_grid(values, k_axis, x0: float, nfft: int, axis: int = -1):
    """Evaluate ``(1/sqrt(N)) sum_m V_m exp(1j k_m x)`` on ``x = x0 + j*dx``.

    ``dx = 2*pi/(nfft*dk)`` and ``j = 0..nfft-1``; ``nfft`` may exceed the
    number of wavenumbers (band-limited interpolation).
    """
    V = np.asarray(values, dtype=complex)
    axis = axis % V.ndim
    k, dk = _as_uniform(k_axis, "wavenumber axis")
    if k.size != V.shape[axis] or nfft < k.size:
        raise AxisError("wavenumber axis does not match the data")
    shape = [-1 if i == axis else 1 for i in range(V.ndim)]
    dx = 2 * np.pi / (nfft * dk)
    x = x0 + dx * np.arange(nfft)
    F = np.fft.ifft(V * np.exp(1j * k * x0).reshape(shape), n=nfft, axis=axis) * nfft
    F = F * (np.exp(1j * k[0] * (x - x0)) / np.sqrt(k.size)).reshape(shape)
    return F, x


def inverse_at(values, k_axis, x_out, axis: int = -1) -> np.ndarray:
    """Evaluate ``(1/sqrt(N)) sum_m V_m exp(1j k_m x)`` exactly at the points ``x_out``.

    A dense DFT matrix is used, so the points need not lie on any FFT grid.
    """
    V = np.asarray(values, dtype=complex)
    axis = axis % V.ndim
    k = np.asarray(k_axis, dtype=float)
    if k.ndim != 1 or k.size != V.shape[axis]:
        raise AxisError("wavenumber axis does not match the data")
    x_out = np.atleast_1d(np.asarray(x_out, dtype=float))
    E = np.exp(1j * np.outer(x_out, k)) / np.sqrt(k.size)
    out = np.tensordot(E, V, axes=([1], [axis]))
    return np.moveaxis(out, 0, axis)


def _interp_rows(x_new, x, y):
    """Row-wise linear interpolation of complex ``y`` (rows) from ``x`` (rows) onto ``x_new``."""
    out = np.zeros((y.shape[0], x_new.size), dtype=complex)
    for i in range(y.shape[0]):
        xi = x[i]
        ok = np.isfinite(xi)
        if ok.sum() < 2:
            continue
        xs, ys = xi[ok], y[i, ok]
        inside = (x_new >= xs[0]) & (x_new <= xs[-1])
        if not inside.any():
            continue
        xn = x_new[inside]
        out[i, inside] = np.interp(xn, xs, ys.real) + 1j * np.interp(xn, xs, ys.imag)
    return out


def dispersion_kz(k, kperp_sq):
    """``sqrt(4k^2 - kperp^2)`` where propagating, NaN where evanescent."""
    arg = 4 * np.asarray(k) ** 2 - kperp_sq
    with np.errstate(invalid="ignore"):
        return np.where(arg > 0, np.sqrt(np.where(arg > 0, arg, 0.0)), np.nan)


def stolt_resample(values, k_axis, kperp_axes, kz_axis, z_phase: float = 0.0) -> np.ndarray:
    """Map spectra sampled on a uniform ``k`` grid to a uniform ``k_z`` grid.

    ``values`` has the transverse spectral dims first (one per entry of
    ``kperp_axes``) and wavenumber last. For each transverse coordinate the
    source sits at ``k_z = sqrt(4k^2 - |k_perp|^2)``; it is multiplied by
    ``exp(-1j k_z z_phase)`` and linearly interpolated onto ``kz_axis``.
    Evanescent source samples are dropped and targets outside the source
    support are zero.
    """
    V = np.asarray(values, dtype=complex)
    k = np.asarray(k_axis, dtype=float)
    kz_axis = np.asarray(kz_axis, dtype=float)
    if V.shape[-1] != k.size or V.ndim != len(kperp_axes) + 1:
        raise AxisError("values must be (transverse..., k)")
    grids = np.meshgrid(*[np.asarray(a, float) for a in kperp_axes], indexing="ij")
    kperp_sq = sum(g**2 for g in grids) if grids else np.zeros(())
    kz = dispersion_kz(k, kperp_sq[..., None])
    if not np.isfinite(kz).any():
        raise AxisError("no propagating source samples")
    src = np.where(np.isfinite(kz), V * np.exp(-1j * np.nan_to_num(kz) * z_phase), 0)
    flat = src.reshape(-1, k.size)
    out = _interp_rows(kz_axis, kz.reshape(-1, k.size), flat)
    return out.reshape(V.shape[:-1] + (kz_axis.size,))


def polar_regrid(values, alpha_axis, kr_axis, kx_axis, kz_axis) -> np.ndarray:
    """Bilinear resampling of a polar spectrum ``P(alpha, k_r)`` onto ``(k_x, k_z)``.

    ``alpha_axis`` must be uniform; ``kr_axis`` increasing (not necessarily
    uniform, NaN entries are treated as missing). Targets whose radius or angle
    falls outside the sampled support are zero. An angular axis spanning the
    full circle wraps around.
    """
    P = np.asarray(values, dtype=complex)
    alpha, da = _as_uniform(alpha_axis, "angle axis")
    kr = np.asarray(kr_axis, dtype=float)
    if P.shape != (alpha.size, kr.size):
        raise AxisError("values must be shaped (angle, radius)")
    ok = np.isfinite(kr)
    P, kr = P[:, ok], kr[ok]
    KX, KZ = np.meshgrid(np.asarray(kx_axis, float), np.asarray(kz_axis, float), indexing="ij")
    out = np.zeros(KX.shape, dtype=complex)
    if kr.size < 2:
        return out
    if np.any(np.diff(kr) <= 0):
        raise AxisError("radial axis must be increasing")
    r = np.hypot(KX, KZ)
    a = np.arctan2(KZ, KX)
    full = alpha.size * da >= 2 * np.pi * (1 - 1e-9)
    center = 0.5 * (alpha[0] + alpha[-1])
    a = center + np.angle(np.exp(1j * (a - center)))
    fa = (a - alpha[0]) / da
    if full:
        inside_a = np.ones(fa.shape, bool)
        fa = np.mod(fa, alpha.size)
    else:
        last = alpha.size - 1
        inside_a = (fa >= -1e-9) & (fa <= last + 1e-9)
        fa = np.clip(fa, 0, last)
    inside = inside_a & (r >= kr[0]) & (r <= kr[-1])
    if not inside.any():
        return out
    fa, rr = fa[inside], r[inside]
    i0 = np.floor(fa).astype(np.int64)
    ta = fa - i0
    if full:
        i0 %= alpha.size
        i1 = (i0 + 1) % alpha.size
    else:
        i0 = np.minimum(i0, alpha.size - 1)
        i1 = np.minimum(i0 + 1, alpha.size - 1)
    j1 = np.clip(np.searchsorted(kr, rr, side="right"), 1, kr.size - 1)
    j0 = j1 - 1
    tr = (rr - kr[j0]) / (kr[j1] - kr[j0])
    val = (
        P[i0, j0] * (1 - ta) * (1 - tr)
        + P[i1, j0] * ta * (1 - tr)
        + P[i0, j1] * (1 - ta) * tr
        + P[i1, j1] * ta * tr
    )
    out[inside] = val
    return out


def msp_check_linear(r: float, w: float, x: float, u_axis, ku_axis=None) -> float:
    """Compare a cylindrical wavefront with its plane-wave expansion along a line.

    Evaluates ``exp(1j r sqrt((x-u)^2 + w^2))`` and the discretized integral
    ``sum exp(1j ku (u-x) + 1j kw w) dku`` with ``kw = sqrt(r^2 - ku^2)`` over the
    propagating band, and returns the magnitude of their normalized inner
    product over ``u``.
    """
    if not r > 0:
        raise ValueError("r must be positive")
    u, du = _as_uniform(u_axis, "u axis")
    R = np.sqrt((x - u) ** 2 + w**2)
    if r * du * np.max(np.abs(x - u) / R) >= np.pi:
        raise ValueError("u axis undersamples the wavefront phase")
    if ku_axis is None:
        # 8x finer than the aperture's FFT grid keeps the periodic images of
        # the plane-wave sum well outside the window
        dku = 2 * np.pi / (8 * (u[-1] - u[0]))
        m = int(np.floor(r / dku))
        ku_axis = dku * np.arange(-m, m + 1)
    ku = np.asarray(ku_axis, dtype=float)
    ku = ku[np.abs(ku) < r]
    dku = uniform_step(ku) if ku.size > 1 else 1.0
    kw = np.sqrt(r**2 - ku**2)
    lhs = np.exp(1j * r * R)
    rhs = np.exp(1j * (np.outer(u - x, ku) + kw * w)).sum(axis=1) * dku
    num = np.abs(np.vdot(lhs, rhs))
    return float(num / (np.linalg.norm(lhs) * np.linalg.norm(rhs)))
