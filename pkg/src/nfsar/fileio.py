"""
On-disk formats for beat cubes and images.

Raw files are headerless little-endian arrays (``float32`` magnitude for
images, interleaved ``complex64`` for beat cubes) in C order. Each raw file
has a JSON sidecar ``<file>.json`` holding the shape, axes, units and the
provenance hash of the configuration that produced it, which is enough to
read the data back without any other input.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .core import Aperture, BeatCube, ChirpConfig, ImageVolume

FORMATS = ("raw", "csv", "pgm")
SIDECAR_VERSION = 1

_IMAGE_DTYPE = np.dtype("<f4")
_CUBE_DTYPE = np.dtype("<c8")


class FormatError(ValueError):
    pass


def provenance_hash(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _sidecar(path: Path) -> Path:
    return path.with_name(path.name + ".json")


def _write_json(path: Path, meta: dict) -> None:
    path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _read_json(path: Path) -> dict:
    try:
        return json.loads(_sidecar(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise FormatError(f"missing sidecar for {path}") from None


def write_raw_image(vol: ImageVolume, path, provenance: str = "") -> list:
    path = Path(path)
    data = np.ascontiguousarray(vol.magnitude, dtype=_IMAGE_DTYPE)
    path.write_bytes(data.tobytes(order="C"))
    meta = {
        "kind": "image",
        "version": SIDECAR_VERSION,
        "dtype": "float32-le",
        "order": "C",
        "shape": list(data.shape),
        "axis_names": list(vol.axes),
        "axes": {n: [float(v) for v in a] for n, a in vol.axes.items()},
        "units": {"axes": "m", "values": "linear magnitude"},
        "provenance": provenance,
    }
    _write_json(_sidecar(path), meta)
    return [path, _sidecar(path)]


def read_raw_image(path) -> ImageVolume:
    path = Path(path)
    meta = _read_json(path)
    if meta.get("kind") != "image":
        raise FormatError(f"{path} is not an image")
    data = np.fromfile(path, dtype=_IMAGE_DTYPE)
    shape = tuple(meta["shape"])
    if data.size != int(np.prod(shape)):
        raise FormatError(f"{path}: expected {int(np.prod(shape))} values, found {data.size}")
    axes = {n: np.asarray(meta["axes"][n]) for n in meta["axis_names"]}
    return ImageVolume(data.reshape(shape), axes)


def write_csv(vol: ImageVolume, path) -> list:
    """One row per index of the first axis; the last axis varies fastest along a row."""
    mag = vol.magnitude
    if mag.ndim > 2:
        raise FormatError("CSV output supports 1-D and 2-D images only")
    rows = mag.reshape(mag.shape[0], -1)
    lines = [",".join(repr(float(v)) for v in row) for row in rows]
    path = Path(path)
    path.write_text("\n".join(lines) + "\n", encoding="ascii")
    return [path]


def read_csv(path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", ndmin=2)


def pgm_slice(vol: ImageVolume) -> np.ndarray:
    """2-D magnitude shown in a graymap.

    A 1-D image becomes a single row; a 3-D image is cut through its peak
    along the last axis.
    """
    mag = vol.magnitude
    if mag.ndim == 1:
        return mag[None, :]
    if mag.ndim == 2:
        return mag
    if mag.ndim == 3:
        idx = np.unravel_index(np.argmax(mag), mag.shape)
        return mag[:, :, idx[2]]
    raise FormatError("graymap output needs a 1-D, 2-D or 3-D image")


def to_gray(mag: np.ndarray) -> np.ndarray:
    """Max-normalized 8-bit levels; a constant image maps to 255 everywhere."""
    mag = np.asarray(mag, dtype=float)
    hi, lo = mag.max(), mag.min()
    if hi == lo:
        return np.full(mag.shape, 255, dtype=np.uint8)
    return np.clip(np.rint(255.0 * mag / hi), 0, 255).astype(np.uint8)


def write_pgm(vol: ImageVolume, path) -> list:
    img = to_gray(pgm_slice(vol))
    h, w = img.shape
    path = Path(path)
    path.write_bytes(f"P5\n{w} {h}\n255\n".encode("ascii") + img.tobytes())
    return [path]


def read_pgm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    fields, pos = [], 0
    while len(fields) < 4:
        while raw[pos : pos + 1].isspace():
            pos += 1
        if raw[pos : pos + 1] == b"#":
            pos = raw.index(b"\n", pos) + 1
            continue
        end = pos
        while not raw[end : end + 1].isspace():
            end += 1
        fields.append(raw[pos:end].decode("ascii"))
        pos = end
    if fields[0] != "P5":
        raise FormatError("not a binary graymap")
    w, h, maxval = map(int, fields[1:])
    if maxval != 255:
        raise FormatError("only 8-bit graymaps are supported")
    return np.frombuffer(raw[pos + 1 : pos + 1 + w * h], dtype=np.uint8).reshape(h, w)


def emit_image(vol: ImageVolume, fmt: str, stem, provenance: str = "") -> list:
    """Write ``vol`` as ``<stem>.raw`` (+ sidecar), ``<stem>.csv`` or ``<stem>.pgm``."""
    stem = Path(stem)
    if fmt == "raw":
        return write_raw_image(vol, stem.with_suffix(".raw"), provenance)
    if fmt == "csv":
        return write_csv(vol, stem.with_suffix(".csv"))
    if fmt == "pgm":
        return write_pgm(vol, stem.with_suffix(".pgm"))
    raise FormatError(f"unsupported format {fmt!r}; choose from {', '.join(FORMATS)}")


def _chirp_dict(ch: ChirpConfig) -> dict:
    return {"f0": ch.f0, "K": ch.K, "T": ch.T, "fs": ch.fs, "Nk": ch.Nk}


def write_cube(cube: BeatCube, path, provenance: str = "", extra: dict | None = None) -> list:
    path = Path(path)
    data = np.ascontiguousarray(cube.samples, dtype=_CUBE_DTYPE)
    path.write_bytes(data.tobytes(order="C"))
    meta = {
        "kind": "beat_cube",
        "version": SIDECAR_VERSION,
        "dtype": "complex64-le",
        "order": "C",
        "shape": list(data.shape),
        "aperture": cube.aperture.to_dict(),
        "chirp": _chirp_dict(cube.chirp),
        "k": [float(v) for v in cube.k],
        "units": {"positions": "m", "k": "rad/m", "chirp": "SI"},
        "provenance": provenance,
    }
    if extra:
        meta["extra"] = extra
    _write_json(_sidecar(path), meta)
    return [path, _sidecar(path)]


def read_cube(path) -> BeatCube:
    path = Path(path)
    meta = _read_json(path)
    if meta.get("kind") != "beat_cube":
        raise FormatError(f"{path} is not a beat cube")
    data = np.fromfile(path, dtype=_CUBE_DTYPE)
    shape = tuple(meta["shape"])
    if data.size != int(np.prod(shape)):
        raise FormatError(f"{path}: expected {int(np.prod(shape))} samples, found {data.size}")
    return BeatCube(
        data.reshape(shape).astype(complex),
        Aperture.from_dict(meta["aperture"]),
        ChirpConfig(**meta["chirp"]),
        np.asarray(meta["k"]),
    )
