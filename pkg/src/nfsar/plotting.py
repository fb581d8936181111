"""Report figures, rendered off-screen to PNG files."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .core import ImageVolume  # noqa: E402


def _db(mag: np.ndarray, floor: float = -40.0) -> np.ndarray:
    top = mag.max()
    if top <= 0:
        return np.full(mag.shape, floor)
    with np.errstate(divide="ignore"):
        return np.maximum(20 * np.log10(mag / top), floor)


def _mm(a):
    return np.asarray(a) * 1e3


def plot_image(vol: ImageVolume, path, title: str = "", peaks=()) -> Path:
    """Normalized dB image: a profile for 1-D, a map for 2-D, max projections for 3-D."""
    mag = vol.magnitude
    names = list(vol.axes)
    axes = [vol.axes[n] for n in names]
    if mag.ndim == 1:
        fig, ax = plt.subplots(figsize=(6, 3.5))
        ax.plot(_mm(axes[0]), _db(mag))
        ax.set_xlabel(f"{names[0]} (mm)")
        ax.set_ylabel("magnitude (dB)")
        for p in peaks:
            ax.axvline(p.position[names[0]] * 1e3, color="r", lw=0.8, ls="--")
        ax.grid(True, alpha=0.3)
    else:
        pairs = [(0, 1)] if mag.ndim == 2 else [(0, 1), (0, 2), (1, 2)]
        fig, axs = plt.subplots(1, len(pairs), figsize=(4.5 * len(pairs), 4), squeeze=False)
        for ax, (i, j) in zip(axs[0], pairs):
            drop = tuple(d for d in range(mag.ndim) if d not in (i, j))
            img = mag.max(axis=drop) if drop else mag
            extent = [axes[i][0] * 1e3, axes[i][-1] * 1e3, axes[j][0] * 1e3, axes[j][-1] * 1e3]
            im = ax.imshow(_db(img).T, origin="lower", extent=extent, aspect="auto", cmap="jet")
            for p in peaks:
                ax.plot(p.position[names[i]] * 1e3, p.position[names[j]] * 1e3, "w+", ms=8)
            ax.set_xlabel(f"{names[i]} (mm)")
            ax.set_ylabel(f"{names[j]} (mm)")
        fig.colorbar(im, ax=axs[0].tolist(), label="dB")
    fig.suptitle(title)
    path = Path(path)
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return path


def plot_triggers(records: dict, ideal: np.ndarray, path, title: str = "") -> Path:
    """Trigger position error against breakpoint index, one trace per radar and sweep."""
    fig, ax = plt.subplots(figsize=(7, 3.5))
    for label, rec in records.items():
        for which, marker in ((1, "."), (2, "x")):
            ev = rec.radar(which)
            if not ev:
                continue
            b = np.array([e.breakpoint for e in ev])
            err = np.array([e.position for e in ev]) - ideal[b]
            ax.plot(b, err * 1e3, marker, ms=3, ls="none", label=f"{label} radar {which}")
    ax.set_xlabel("breakpoint index")
    ax.set_ylabel("position error (um)")
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=7)
    ax.set_title(title)
    path = Path(path)
    fig.savefig(path, dpi=100, bbox_inches="tight")
    plt.close(fig)
    return path
