"""
Command-line front end.

Runs are described by a YAML config (see :mod:`nfsar.config`) and write
their artifacts to ``<out>/<ISO date>/<file_name>/``::

    nfsar pipeline --config scan.yaml --seed 7 --format raw --format pgm --oracle
    nfsar sync --config scan.yaml
    nfsar msp-check --wavelength-mm 5 --standoff-m 0.3

Exit status is 0 when every requested artifact was written and no check
failed, 1 when a check failed (artifacts are kept), 3 for configuration
errors and 4 for runtime errors (partial artifacts removed).
"""

from __future__ import annotations

import argparse
import csv
import datetime as dt
import io
import json
import math
import sys
import warnings
from contextlib import contextmanager
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .beatsim import (
    DualRadarLayout,
    apply_calibration,
    calibrate,
    derive_seed,
    merge_dual_band,
    simulate_beat,
    simulate_dual,
)
from .config import ConfigError, RunConfig, parse_config
from .core import Aperture, BeatCube, Scene, max_range, range_resolution, validate_scene
from .fileio import FORMATS, emit_image, read_cube, write_cube
from .reconstruct import backprojection_oracle, find_peaks, normalized_correlation, reconstruct
from .spectral import msp_check_linear
from .sync import (
    MotionProfile,
    generate_pulse_stream,
    run_synchronizer,
    verify_uniform_grid,
)

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 3
EXIT_RUNTIME = 4

# module-qualified codes for runtime failures
SIM = "SIM201"
CAL = "CAL301"
REC = "REC401"
SYN = "SYN501"
IOE = "IO601"

STEPS = ("simulate", "calibrate", "reconstruct", "sync")


class PipelineError(RuntimeError):
    def __init__(self, code: str, message: str):
        self.code = code
        super().__init__(f"{code}: {message}")


@contextmanager
def _stage(code: str):
    try:
        yield
    except PipelineError:
        raise
    except OSError as exc:
        raise PipelineError(IOE, str(exc)) from exc
    except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        raise PipelineError(code, str(exc)) from exc


class _Artifacts:
    """Tracks written files so a failed run can be rolled back."""

    def __init__(self, root: Path):
        self.root = root
        self.files: list = []
        self._made: list = []

    def open_dir(self):
        missing = []
        p = self.root
        while not p.exists():
            missing.append(p)
            p = p.parent
        self.root.mkdir(parents=True, exist_ok=True)
        self._made = list(reversed(missing))

    def add(self, paths):
        self.files.extend(Path(p) for p in paths)

    def path(self, name: str) -> Path:
        return self.root / name

    def write_text(self, name: str, text: str):
        p = self.path(name)
        p.write_text(text, encoding="utf-8")
        self.add([p])

    def rollback(self):
        for p in self.files:
            p.unlink(missing_ok=True)
        for d in reversed(self._made):
            try:
                d.rmdir()
            except OSError:
                break


@dataclass
class RunResult:
    status: int
    run_dir: Optional[Path]
    files: list = field(default_factory=list)
    report: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)


# ---------------------------------------------------------------- stages


def _simulate(cfg: RunConfig, seed: int) -> tuple:
    """Returns (cube used for imaging, {label: raw cube})."""
    if not cfg.dual:
        cube = simulate_beat(cfg.scene, cfg.aperture, cfg.chirp, cfg.errors, seed, cfg.path_loss)
        return cube, {"radar1": cube}
    c1, c2 = simulate_dual(
        cfg.scene,
        cfg.aperture,
        cfg.chirp,
        cfg.chirp2,
        DualRadarLayout(cfg.delta_x),
        cfg.errors,
        cfg.errors2,
        seed,
    )
    return None, {"radar1": c1, "radar2": c2}


def _overlap(cube1: BeatCube, cube2: BeatCube, delta_x: float) -> tuple:
    """Restrict both radars to the x columns they share."""
    x = cube1.aperture.x
    s = int(round(delta_x / (x[1] - x[0]))) if x.size > 1 else 0
    n = x.size
    i1 = slice(max(s, 0), min(n, n + s))
    i2 = slice(max(-s, 0), min(n, n - s))
    ap = Aperture.rectilinear(x[i1], cube1.aperture.y, cube1.aperture.Z0)
    return (
        BeatCube(cube1.samples[i1], ap, cube1.chirp, cube1.k),
        BeatCube(cube2.samples[i2], ap, cube2.chirp, cube2.k),
    )


def _merge(cfg: RunConfig, cubes: dict) -> BeatCube:
    a, b = _overlap(cubes["radar1"], cubes["radar2"], cfg.delta_x)
    lo, hi = sorted((a, b), key=lambda c: c.k[0])
    return merge_dual_band(lo, hi)


def _calibrate(cfg: RunConfig, seed: int) -> dict:
    """Estimate each radar's offsets from a reflector straight ahead of one element."""
    el = Aperture.linear([0.0], 0.0)
    target = Scene.of((0.0, 0.0, cfg.calibration_range))
    out = {}
    radars = [("radar1", cfg.chirp, cfg.errors)]
    if cfg.dual:
        radars.append(("radar2", cfg.chirp2, cfg.errors2))
    for j, (label, chirp, errors) in enumerate(radars):
        cap = simulate_beat(target, el, chirp, errors, derive_seed(seed, 10 + j), cfg.path_loss)
        out[label] = calibrate(cap, cfg.calibration_range)
    return out


def _sync(cfg: RunConfig) -> tuple:
    s = cfg.sync
    sweeps = {"forward": (1,), "reverse": (-1,), "both": (1, -1)}[s.sweeps]
    out = {}
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        for d in sweeps:
            prof = MotionProfile(s.travel, s.v_max, s.accel, d)
            pulses = generate_pulse_stream(prof, s.drive)
            rec = run_synchronizer(pulses, s.plan, s.drive)
            label = "forward" if d > 0 else "reverse"
            out[label] = (rec, verify_uniform_grid(rec, s.plan, s.drive))
    return out, [str(w.message) for w in caught]


def _sweep_agreement(results: dict) -> Optional[float]:
    """Largest forward/reverse position difference per radar and breakpoint."""
    if set(results) != {"forward", "reverse"}:
        return None
    worst = 0.0
    for which in (1, 2):
        fwd = {e.breakpoint: e.position for e in results["forward"][0].radar(which)}
        for e in results["reverse"][0].radar(which):
            if e.breakpoint in fwd:
                worst = max(worst, abs(fwd[e.breakpoint] - e.position))
    return worst


# ---------------------------------------------------------------- reporting


def _fmt(v, unit="", scale=1.0, digits=6):
    return f"{v * scale:.{digits}g}{(' ' + unit) if unit else ''}"


def _peaks_csv(peaks) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["rank", "x_m", "y_m", "z_m", "amplitude", "relative_db"])
    for i, p in enumerate(peaks, 1):
        pos = [p.position.get(n, "") for n in ("x", "y", "z")]
        w.writerow([i, *[repr(v) if v != "" else "" for v in pos], repr(p.amplitude), f"{p.relative_db:.3f}"])
    return buf.getvalue()


def _report_text(rep: dict) -> str:
    lines = [f"run: {rep['name']}", f"date: {rep['date']}", f"seed: {rep['seed']}"]
    lines.append(f"config sha256: {rep['provenance']}")
    if "geometry" in rep:
        lines.append(f"aperture: {rep['geometry']} {rep['aperture_shape']}")
        lines.append(f"range resolution: {_fmt(rep['range_resolution_m'], 'mm', 1e3)}")
        lines.append(f"maximum range: {_fmt(rep['max_range_m'], 'm')}")
    for w in rep.get("scene_warnings", []):
        lines.append(f"warning: {w}")
    for label, c in rep.get("calibration", {}).items():
        lines.append(
            f"calibration {label}: phase offset {_fmt(c['phase_offset_rad'], 'rad')}, "
            f"range bias {_fmt(c['range_bias_m'], 'mm', 1e3)}"
            + (" (applied)" if c["applied"] else "")
        )
    if "algorithm" in rep:
        lines.append(f"algorithm: {rep['algorithm']}, grid {rep['grid_shape']}")
        lines.append(f"peaks ({len(rep['peaks'])}):")
        lines.append("  rank      x (mm)      y (mm)      z (mm)   amplitude   rel (dB)")
        for i, p in enumerate(rep["peaks"], 1):
            cols = [
                f"{p['position_m'][n] * 1e3:11.3f}" if n in p["position_m"] else f"{'-':>11}"
                for n in ("x", "y", "z")
            ]
            lines.append(f"  {i:4d} {''.join(cols)} {p['amplitude']:11.4g} {p['relative_db']:10.2f}")
        if rep.get("oracle_correlation") is not None:
            lines.append(f"oracle correlation: {rep['oracle_correlation']:.4f}")
    if "sync" in rep:
        s = rep["sync"]
        lines.append(f"sync: mm per pulse {s['mm_per_pulse']:.6g}, periodicity {s['periodicity']:g}")
        for label, g in s["sweeps"].items():
            lines.append(
                f"  {label}: {'ok' if g['ok'] else 'FAILED'}; triggers {g['triggers_radar1']}/"
                f"{g['triggers_radar2']}, max position error {g['max_position_error_mm']:.6g} mm, "
                f"alignment error {g['max_alignment_error_mm']:.6g} mm"
                + (f" ({g['message']})" if g["message"] else "")
            )
        if s.get("sweep_agreement_mm") is not None:
            lines.append(f"  forward/reverse agreement: {s['sweep_agreement_mm']:.6g} mm")
    for f in rep.get("failures", []):
        lines.append(f"FAILED: {f}")
    lines.append("artifacts: " + ", ".join(rep.get("artifacts", [])))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- pipeline


def run_pipeline(
    cfg: RunConfig,
    steps=STEPS,
    *,
    out: Optional[str] = None,
    seed: Optional[int] = None,
    formats=None,
    oracle: Optional[bool] = None,
    dry_run: bool = False,
    cube_path=None,
    date: Optional[str] = None,
) -> RunResult:
    """Simulate, calibrate, reconstruct and synchronize as configured, then write artifacts."""
    seed = cfg.seed if seed is None else seed
    output = cfg.output
    if out is not None:
        output = replace(output, dir=out)
    if formats:
        output = replace(output, formats=tuple(dict.fromkeys(formats)))
    for fmt in output.formats:
        if fmt not in FORMATS:
            raise ConfigError("CFG103", f"unsupported format {fmt!r}")
    want_oracle = cfg.recon is not None and (cfg.recon.oracle if oracle is None else oracle)
    date = date or dt.date.today().isoformat()
    run_dir = Path(output.dir) / date / cfg.name

    steps = set(steps)
    imaging = cfg.aperture is not None
    do_sim = imaging and "simulate" in steps and cube_path is None
    do_cal = imaging and "calibrate" in steps and cfg.calibration_range is not None
    do_rec = imaging and "reconstruct" in steps and cfg.recon is not None
    do_sync = "sync" in steps and cfg.sync is not None
    if not (do_sim or do_cal or do_rec or do_sync):
        raise ConfigError("CFG105", f"nothing to do for steps {sorted(steps)} with this config")
    if dry_run:
        return RunResult(EXIT_OK, None, [], {"dry_run": True, "run_dir": str(run_dir)})

    art = _Artifacts(run_dir)
    rep = {"name": cfg.name, "date": date, "seed": seed, "provenance": cfg.provenance}
    failures = []
    try:
        art.open_dir()
        cube = None
        if imaging:
            rep["geometry"] = cfg.aperture.geometry
            rep["aperture_shape"] = list(cfg.aperture.shape)
            rep["range_resolution_m"] = range_resolution(cfg.chirp)
            rep["max_range_m"] = max_range(cfg.chirp)
            rep["scene_warnings"] = validate_scene(cfg.scene, cfg.chirp, cfg.aperture)

        raw_cubes = {}
        if cube_path is not None and (do_rec or do_cal):
            with _stage(IOE):
                cube = read_cube(cube_path)
        elif do_sim or do_rec:
            with _stage(SIM):
                cube, raw_cubes = _simulate(cfg, seed)
            if do_sim:
                with _stage(IOE):
                    for label, c in raw_cubes.items():
                        name = "beat_cube.raw" if len(raw_cubes) == 1 else f"beat_cube_{label}.raw"
                        art.add(write_cube(c, art.path(name), cfg.provenance, {"seed": seed}))

        if do_cal:
            with _stage(CAL):
                cals = _calibrate(cfg, seed)
                rep["calibration"] = {
                    label: {
                        "phase_offset_rad": c.phase_offset,
                        "range_bias_m": c.range_bias,
                        "applied": cfg.apply_calibration and bool(raw_cubes),
                    }
                    for label, c in cals.items()
                }
                if cfg.apply_calibration and raw_cubes:
                    raw_cubes = {k: apply_calibration(c, cals[k]) for k, c in raw_cubes.items()}
                    if not cfg.dual:
                        cube = raw_cubes["radar1"]

        if cfg.dual and raw_cubes:
            with _stage(SIM):
                cube = _merge(cfg, raw_cubes)
            if do_sim:
                with _stage(IOE):
                    art.add(write_cube(cube, art.path("beat_cube.raw"), cfg.provenance, {"seed": seed}))

        if do_rec:
            spec = cfg.recon
            with _stage(REC):
                image = reconstruct(cube, spec.grid, spec.algorithm)
                peaks = find_peaks(image, spec.max_peaks, spec.peak_threshold_db)
                rep["algorithm"] = spec.algorithm
                rep["grid_shape"] = list(image.values.shape)
                rep["peaks"] = [
                    {"position_m": p.position, "amplitude": p.amplitude, "relative_db": p.relative_db}
                    for p in peaks
                ]
                rep["oracle_correlation"] = None
                if want_oracle:
                    ref = backprojection_oracle(cube, spec.grid)
                    rep["oracle_correlation"] = normalized_correlation(image.values, ref.values)
            if not np.all(np.isfinite(image.magnitude)):
                failures.append("image contains NaN/Inf")
            with _stage(IOE):
                for fmt in output.formats:
                    if fmt == "csv" and image.values.ndim > 2:
                        continue
                    art.add(emit_image(image, fmt, art.path("image"), cfg.provenance))
                art.write_text("peaks.csv", _peaks_csv(peaks))
                if output.figures:
                    from .plotting import plot_image

                    title = f"{cfg.name}: {spec.algorithm}"
                    art.add([plot_image(image, art.path("image.png"), title, peaks)])

        if do_sync:
            with _stage(SYN):
                results, sync_warnings = _sync(cfg)
            s = cfg.sync
            rep["sync"] = {
                "mm_per_pulse": s.drive.mm_per_pulse,
                "periodicity": s.plan.periodicity,
                "sweeps": {k: g.as_dict() for k, (_, g) in results.items()},
                "sweep_agreement_mm": _sweep_agreement(results),
                "warnings": sync_warnings,
            }
            for label, (_, g) in results.items():
                if not g.ok:
                    failures.append(f"sync {label}: {g.message}")
            agree = rep["sync"]["sweep_agreement_mm"]
            if agree is not None and agree > s.drive.mm_per_pulse * (1 + 1e-9):
                failures.append(f"sync forward/reverse disagree by {agree:.6g} mm")
            with _stage(IOE):
                buf = io.StringIO()
                w = csv.writer(buf, lineterminator="\n")
                w.writerow(["sweep", "radar", "breakpoint", "pulse", "position_mm", "time_s"])
                for label, (rec, _) in results.items():
                    for row in rec.as_rows():
                        w.writerow([label, *row[:3], repr(row[3]), repr(row[4])])
                art.write_text("sync_triggers.csv", buf.getvalue())
                if output.figures:
                    from .plotting import plot_triggers

                    recs = {k: r for k, (r, _) in results.items()}
                    art.add(
                        [plot_triggers(recs, s.plan.breakpoints, art.path("sync.png"), cfg.name)]
                    )

        rep["failures"] = failures
        with _stage(IOE):
            if imaging and cfg.scan_notes:
                art.write_text("scan_notes.txt", cfg.scan_notes)
            base = "report" if imaging else "sync_report"
            names = [p.name for p in art.files] + [f"{base}.txt", f"{base}.json"]
            rep["artifacts"] = sorted(names)
            art.write_text(f"{base}.json", json.dumps(rep, indent=2, sort_keys=True) + "\n")
            art.write_text(f"{base}.txt", _report_text(rep))
    except BaseException:
        art.rollback()
        raise
    status = EXIT_CHECK_FAILED if failures else EXIT_OK
    return RunResult(status, run_dir, list(art.files), rep, failures)


# ---------------------------------------------------------------- argparse


def _common(p: argparse.ArgumentParser, config_required=True):
    p.add_argument("--config", required=config_required, help="YAML run description")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--out", help="output root (default: output.dir from the config)")
    p.add_argument(
        "--format",
        action="append",
        choices=FORMATS,
        dest="formats",
        help="image format; repeat for several (default: output.formats)",
    )
    p.add_argument("--oracle", action="store_true", default=None, help="add a back-projection cross-check")
    p.add_argument("--dry-run", action="store_true", help="validate the config and exit")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nfsar", description="Near-field FMCW SAR simulation and imaging."
    )
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "simulate": "simulate beat cubes",
        "reconstruct": "reconstruct an image from a simulated or saved cube",
        "pipeline": "simulate, calibrate, reconstruct and synchronize",
        "sync": "simulate the trigger synchronizer",
        "calibrate": "estimate phase offset and range bias from a reflector capture",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        _common(p)
        if name == "reconstruct":
            p.add_argument("--cube", help="beat cube .raw file to reconstruct instead of simulating")
    p = sub.add_parser("msp-check", help="numerical check of the stationary-phase approximation")
    p.add_argument("--wavelength-mm", type=float, default=5.0)
    p.add_argument("--standoff-m", type=float, default=0.3)
    p.add_argument("--half-aperture-m", type=float, default=0.2)
    p.add_argument("--samples", type=int, default=512)
    p.add_argument("--x-m", type=float, default=0.0, help="target cross-range offset")
    return parser


_STEPS = {
    "simulate": ("simulate",),
    "reconstruct": ("reconstruct",),
    "calibrate": ("calibrate",),
    "sync": ("sync",),
    "pipeline": STEPS,
}


def _msp(args) -> int:
    r = 4 * math.pi / (args.wavelength_mm * 1e-3)
    u = np.linspace(-args.half_aperture_m, args.half_aperture_m, args.samples) + args.x_m
    try:
        fid = msp_check_linear(r, args.standoff_m, args.x_m, u)
    except ValueError as exc:
        print(f"error REC401: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"fidelity,{fid:.6f}")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "msp-check":
        return _msp(args)
    try:
        text = Path(args.config).read_text(encoding="utf-8")
    except OSError as exc:
        print(f"error {IOE}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    try:
        cfg = parse_config(text)
        res = run_pipeline(
            cfg,
            _STEPS[args.command],
            out=args.out,
            seed=args.seed,
            formats=args.formats,
            oracle=args.oracle,
            dry_run=args.dry_run,
            cube_path=getattr(args, "cube", None),
        )
    except ConfigError as exc:
        print(f"error {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PipelineError as exc:
        print(f"error {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    if args.dry_run:
        print(f"config ok; would write to {res.report['run_dir']}")
        return EXIT_OK
    print(f"wrote {len(res.files)} files to {res.run_dir}")
    for f in res.failures:
        print(f"check failed: {f}", file=sys.stderr)
    return res.status


if __name__ == "__main__":
    sys.exit(main())
