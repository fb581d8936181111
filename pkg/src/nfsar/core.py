"""
Waveform, aperture, scene and capture types for near-field FMCW SAR.

All quantities are SI. Config-level unit conversion happens in
:mod:`nfsar.config`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

C = 299_792_458.0

GEOMETRIES = ("linear", "rectilinear", "circular", "cylindrical")


class GeometryError(ValueError):
    pass


def _check_uniform(name: str, arr: np.ndarray, rtol: float = 1e-6) -> None:
    arr = np.asarray(arr, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise GeometryError(f"{name}: expected a non-empty 1-D array")
    if not np.all(np.isfinite(arr)):
        raise GeometryError(f"{name}: non-finite positions")
    if arr.size < 2:
        return
    d = np.diff(arr)
    if not (np.all(d > 0) or np.all(d < 0)):
        raise GeometryError(f"{name}: positions must be strictly monotonic")
    step = d.mean()
    if np.max(np.abs(d - step)) > rtol * abs(step):
        raise GeometryError(f"{name}: positions must be uniformly spaced")


def uniform_step(arr: np.ndarray) -> float:
    """Mean sample spacing of a uniform axis."""
    arr = np.asarray(arr, dtype=float)
    if arr.size < 2:
        raise GeometryError("axis needs at least two samples to define a step")
    return float((arr[-1] - arr[0]) / (arr.size - 1))


@dataclass(frozen=True)
class ChirpConfig:
    """FMCW chirp parameters.

    Attributes:
        f0: start frequency (Hz)
        K: chirp slope (Hz/s)
        T: chirp duration (s)
        fs: ADC sampling rate (Hz)
        Nk: number of fast-time samples, spread uniformly over [0, T]
    """

    f0: float
    K: float
    T: float
    fs: float
    Nk: int

    def __post_init__(self):
        if not (self.f0 > 0 and self.T > 0 and self.fs > 0):
            raise ValueError("f0, T and fs must be positive")
        if self.K < 0:
            raise ValueError("chirp slope must be non-negative")
        if int(self.Nk) != self.Nk or self.Nk < 2:
            raise ValueError("Nk must be an integer >= 2")
        object.__setattr__(self, "Nk", int(self.Nk))

    @property
    def bandwidth(self) -> float:
        return self.K * self.T

    @property
    def fast_time(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.Nk)

    @property
    def k(self) -> np.ndarray:
        return wavenumber_axis(self)

    @property
    def wavelength(self) -> float:
        """Wavelength at the band center."""
        return C / (self.f0 + 0.5 * self.bandwidth)


def wavenumber_axis(chirp: ChirpConfig) -> np.ndarray:
    """Instantaneous one-way wavenumber at each fast-time sample (rad/m)."""
    i = np.arange(chirp.Nk)
    f = chirp.f0 + chirp.K * i * chirp.T / (chirp.Nk - 1)
    return 2 * np.pi / C * f


def range_resolution(chirp: ChirpConfig) -> float:
    B = chirp.bandwidth
    if B <= 0:
        raise ValueError("range resolution needs a positive bandwidth")
    return C / (2 * B)


def max_range(chirp: ChirpConfig) -> float:
    """Largest range whose beat frequency stays below the ADC rate."""
    if chirp.K <= 0:
        raise ValueError("max range needs a positive chirp slope")
    return chirp.fs * C / (2 * chirp.K)


@dataclass(frozen=True, eq=False)
class Aperture:
    """Element positions of a monostatic synthetic array.

    Linear arrays lie on the line ``(0, y', Z0)``, rectilinear arrays on the
    plane ``z = Z0``. Circular arrays sit at ``(R0 cos t, 0, R0 sin t)`` and
    cylindrical arrays at ``(R0 cos t, y', R0 sin t)``.
    """

    geometry: str
    x: Optional[np.ndarray] = None
    y: Optional[np.ndarray] = None
    theta: Optional[np.ndarray] = None
    Z0: float = 0.0
    R0: float = 0.0

    def __post_init__(self):
        g = self.geometry
        if g not in GEOMETRIES:
            raise GeometryError(f"unknown geometry {g!r}")
        need = {
            "linear": ("y",),
            "rectilinear": ("x", "y"),
            "circular": ("theta",),
            "cylindrical": ("theta", "y"),
        }[g]
        for name in ("x", "y", "theta"):
            val = getattr(self, name)
            if name in need:
                if val is None:
                    raise GeometryError(f"{g} aperture requires {name}")
                val = np.asarray(val, dtype=float).copy()
                _check_uniform(name, val)
                val.setflags(write=False)
                object.__setattr__(self, name, val)
            elif val is not None:
                raise GeometryError(f"{g} aperture does not use {name}")
        if g in ("circular", "cylindrical") and not self.R0 > 0:
            raise GeometryError("R0 must be positive")
        if not np.isfinite(self.Z0):
            raise GeometryError("Z0 must be finite")

    @classmethod
    def linear(cls, y, Z0=0.0):
        return cls("linear", y=y, Z0=Z0)

    @classmethod
    def rectilinear(cls, x, y, Z0=0.0):
        return cls("rectilinear", x=x, y=y, Z0=Z0)

    @classmethod
    def circular(cls, theta, R0):
        return cls("circular", theta=theta, R0=R0)

    @classmethod
    def cylindrical(cls, theta, y, R0):
        return cls("cylindrical", theta=theta, y=y, R0=R0)

    @property
    def shape(self) -> tuple:
        """Element grid shape, in the order the beat cube stores it."""
        return {
            "linear": lambda: (self.y.size,),
            "rectilinear": lambda: (self.x.size, self.y.size),
            "circular": lambda: (self.theta.size,),
            "cylindrical": lambda: (self.theta.size, self.y.size),
        }[self.geometry]()

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def positions(self) -> np.ndarray:
        """(x, y, z) of every element, shaped ``self.shape + (3,)``."""
        g = self.geometry
        if g == "linear":
            y = self.y
            return np.stack([np.zeros_like(y), y, np.full_like(y, self.Z0)], axis=-1)
        if g == "rectilinear":
            X, Y = np.meshgrid(self.x, self.y, indexing="ij")
            return np.stack([X, Y, np.full_like(X, self.Z0)], axis=-1)
        if g == "circular":
            t = self.theta
            return np.stack(
                [self.R0 * np.cos(t), np.zeros_like(t), self.R0 * np.sin(t)], axis=-1
            )
        T, Y = np.meshgrid(self.theta, self.y, indexing="ij")
        return np.stack([self.R0 * np.cos(T), Y, self.R0 * np.sin(T)], axis=-1)

    def shifted(self, dx: float) -> np.ndarray:
        """Element positions displaced by ``dx`` along x."""
        pos = self.positions().copy()
        pos[..., 0] += dx
        return pos

    def to_dict(self) -> dict:
        d = {"geometry": self.geometry, "Z0": self.Z0, "R0": self.R0}
        for name in ("x", "y", "theta"):
            val = getattr(self, name)
            if val is not None:
                d[name] = [float(v) for v in val]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Aperture":
        return cls(
            d["geometry"],
            x=d.get("x"),
            y=d.get("y"),
            theta=d.get("theta"),
            Z0=d.get("Z0", 0.0),
            R0=d.get("R0", 0.0),
        )


@dataclass(frozen=True)
class Scatterer:
    position: tuple
    sigma: float = 1.0

    def __post_init__(self):
        pos = tuple(float(p) for p in self.position)
        if len(pos) != 3 or not all(np.isfinite(pos)):
            raise ValueError("scatterer position must be three finite numbers")
        if not self.sigma >= 0:
            raise ValueError("reflectivity must be non-negative")
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "sigma", float(self.sigma))


@dataclass(frozen=True)
class Scene:
    scatterers: tuple = ()

    def __post_init__(self):
        object.__setattr__(
            self,
            "scatterers",
            tuple(s if isinstance(s, Scatterer) else Scatterer(*s) for s in self.scatterers),
        )

    @classmethod
    def of(cls, *points, sigma=1.0) -> "Scene":
        return cls(tuple(Scatterer(p, sigma) for p in points))

    def __add__(self, other: "Scene") -> "Scene":
        return Scene(self.scatterers + other.scatterers)

    def __len__(self):
        return len(self.scatterers)

    @property
    def positions(self) -> np.ndarray:
        return np.array([s.position for s in self.scatterers], dtype=float).reshape(-1, 3)

    @property
    def sigmas(self) -> np.ndarray:
        return np.array([s.sigma for s in self.scatterers], dtype=float)


@dataclass(frozen=True, eq=False)
class BeatCube:
    """Complex beat samples shaped ``aperture.shape + (chirp.Nk,)``.

    ``k`` defaults to the chirp's wavenumber axis; merged dual-band cubes
    carry their own axis.
    """

    samples: np.ndarray
    aperture: Aperture
    chirp: ChirpConfig
    k: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=complex)
        k = wavenumber_axis(self.chirp) if self.k is None else np.asarray(self.k, float)
        if s.shape != self.aperture.shape + (k.size,):
            raise ValueError(
                f"samples shape {s.shape} does not match aperture "
                f"{self.aperture.shape} x {k.size} wavenumbers"
            )
        if not np.all(np.isfinite(s)):
            raise ValueError("beat samples contain NaN/Inf")
        object.__setattr__(self, "samples", s)
        object.__setattr__(self, "k", k)

    def with_samples(self, samples: np.ndarray) -> "BeatCube":
        return BeatCube(samples, self.aperture, self.chirp, self.k)


@dataclass(frozen=True, eq=False)
class ImageVolume:
    """Reconstructed reflectivity on a rectangular grid.

    ``axes`` maps each dimension name (``"x"``, ``"y"``, ``"z"``) to its voxel
    centers, in array order.
    """

    values: np.ndarray
    axes: dict

    def __post_init__(self):
        v = np.asarray(self.values)
        axes = {name: np.asarray(a, dtype=float) for name, a in self.axes.items()}
        if v.shape != tuple(a.size for a in axes.values()):
            raise ValueError("image shape does not match its axes")
        if not np.all(np.isfinite(v)):
            raise ValueError("image contains NaN/Inf")
        for name, a in axes.items():
            if a.size > 1:
                _check_uniform(name, a)
                if a[1] < a[0]:
                    raise ValueError(f"axis {name} must be increasing")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "axes", axes)

    @property
    def magnitude(self) -> np.ndarray:
        return np.abs(self.values)

    @property
    def pitch(self) -> dict:
        return {n: (uniform_step(a) if a.size > 1 else 0.0) for n, a in self.axes.items()}

    def peak(self) -> dict:
        """Coordinates of the global magnitude maximum."""
        idx = np.unravel_index(np.argmax(self.magnitude), self.values.shape)
        return {n: float(a[i]) for (n, a), i in zip(self.axes.items(), idx)}


def validate_scene(scene: Scene, chirp: ChirpConfig, aperture: Aperture) -> list:
    """Return human-readable warnings about a scene; never raises."""
    warnings = []
    pos = scene.positions
    if len(pos) == 0:
        return ["scene has no scatterers"]
    el = aperture.positions().reshape(-1, 3)
    rmax = max_range(chirp) if chirp.K > 0 else np.inf
    for n, p in enumerate(pos):
        R = np.linalg.norm(el - p, axis=1)
        if R.max() > rmax:
            warnings.append(
                f"scatterer {n} at {tuple(p)} exceeds maximum range "
                f"({R.max():.4g} m > {rmax:.4g} m)"
            )
    g = aperture.geometry
    plane = {"linear": (0, "x"), "circular": (1, "y")}.get(g)
    if plane is not None:
        axis, name = plane
        for n, p in enumerate(pos):
            if abs(p[axis]) > 1e-12:
                warnings.append(
                    f"scatterer {n} lies off the {g} imaging plane ({name}={p[axis]:.4g} m)"
                )
    return warnings
