import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nfsar.sync import (
    DriveConfig,
    MotionProfile,
    TriggerPlan,
    TriggerRecord,
    generate_pulse_stream,
    mm_per_pulse,
    run_synchronizer,
    verify_uniform_grid,
)

DRIVE = DriveConfig(110.0, 20000)
MPP = 0.0055


@pytest.mark.parametrize("m,n,want", [(110, 20000, 0.0055), (5, 5, 1.0), (36, 7200, 0.005)])
def test_mm_per_pulse_examples(m, n, want):
    assert mm_per_pulse(DriveConfig(m, n)) == want


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(mm_per_rev=0, pulses_per_rev=1),
        dict(mm_per_rev=1, pulses_per_rev=0),
        dict(mm_per_rev=1, pulses_per_rev=1.5),
    ],
)
def test_drive_rejects_invalid(kwargs):
    with pytest.raises(ValueError):
        DriveConfig(**kwargs)


def test_profile_rejects_invalid():
    with pytest.raises(ValueError):
        MotionProfile(0.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        MotionProfile(1.0, 1.0, 1.0, direction=0)


def test_constant_velocity_intervals_uniform():
    stream = generate_pulse_stream(MotionProfile(20.0, 50.0, math.inf), DRIVE)
    dt = np.diff(stream.times)
    assert np.max(np.abs(dt - MPP / 50.0)) < 1e-12


def test_triangle_profile_symmetric():
    # whole number of pulses, so the last pulse lands at the end of the move
    prof = MotionProfile(1818 * MPP, 1e6, 500.0)
    assert prof.peak_velocity < prof.v_max
    stream = generate_pulse_stream(prof, DRIVE)
    assert len(stream) == 1818
    dt = np.diff(np.concatenate([[0.0], stream.times]))
    assert dt[0] == dt.max() and dt[-1] == pytest.approx(dt.max(), rel=1e-9)
    assert np.max(np.abs(dt - dt[::-1])) < 1e-9


def test_timestamps_strictly_increase_and_follow_profile():
    prof = MotionProfile(30.0, 200.0, 500.0)
    stream = generate_pulse_stream(prof, DRIVE)
    assert np.all(np.diff(stream.times) > 0)
    i = np.arange(1, len(stream) + 1)
    assert np.allclose(prof.position(stream.times), i * MPP, rtol=0, atol=1e-9)


def test_total_pulse_count():
    assert len(generate_pulse_stream(MotionProfile(100.0, 200.0, 500.0), DRIVE)) == 18181


def test_short_travel_warns_empty():
    with pytest.warns(UserWarning):
        stream = generate_pulse_stream(MotionProfile(0.001, 1.0, 1.0), DRIVE)
    assert len(stream) == 0


def _sweep(plan, travel=60.0, accel=500.0, direction=1, drive=DRIVE):
    prof = MotionProfile(travel, 200.0, accel, direction)
    return run_synchronizer(generate_pulse_stream(prof, drive), plan, drive)


def test_colocated_radars_identical_indices():
    rec = _sweep(TriggerPlan(5.0, 1.0, 40))
    assert [e.pulse_index for e in rec.radar1] == [e.pulse_index for e in rec.radar2]


def test_quantization_bound_step_one_mm():
    plan = TriggerPlan(5.0, 1.0, 40, delta_x=7.3)
    rec = _sweep(plan)
    bp = plan.breakpoints
    for which in (1, 2):
        errs = [abs(e.position - bp[e.breakpoint]) for e in rec.radar(which)]
        assert len(errs) == 40 and max(errs) <= MPP * (1 + 1e-9)
    report = verify_uniform_grid(rec, plan, DRIVE)
    assert report.ok and report.max_alignment_error <= MPP * (1 + 1e-9)


def test_reverse_sweep_matches_forward():
    plan = TriggerPlan(5.0, 1.0, 40, delta_x=2.0)
    fwd = _sweep(plan)
    rev = _sweep(plan, direction=-1)
    for which in (1, 2):
        f = {e.breakpoint: e.position for e in fwd.radar(which)}
        r = {e.breakpoint: e.position for e in rev.radar(which)}
        assert f.keys() == r.keys()
        assert max(abs(f[b] - r[b]) for b in f) <= MPP * (1 + 1e-9)
    assert verify_uniform_grid(rev, plan, DRIVE).ok


def test_reverse_sweep_indices_increase():
    rev = _sweep(TriggerPlan(5.0, 1.0, 40), direction=-1)
    idx = [e.pulse_index for e in rev.radar1]
    assert np.all(np.diff(idx) > 0)
    assert [e.breakpoint for e in rev.radar1] == list(range(39, -1, -1))


def test_retiming_gives_identical_record():
    plan = TriggerPlan(2.0, 0.75, 30, delta_x=3.3)
    drive = DRIVE
    stream = generate_pulse_stream(MotionProfile(40.0, 200.0, 500.0), drive)
    other = stream.retimed(np.cumsum(np.random.default_rng(1).uniform(1e-5, 1e-3, len(stream))))
    a = run_synchronizer(stream, plan, drive)
    b = run_synchronizer(other, plan, drive)
    for which in (1, 2):
        pa = [(e.breakpoint, e.pulse_index, e.position) for e in a.radar(which)]
        pb = [(e.breakpoint, e.pulse_index, e.position) for e in b.radar(which)]
        assert pa == pb


@given(
    accel=st.sampled_from([50.0, 500.0, 1e5, math.inf]),
    step=st.floats(0.05, 3.0),
    offset=st.floats(0.0, 5.0),
    dx=st.floats(0.0, 20.0),
)
@settings(max_examples=40, deadline=None)
def test_bound_holds_for_any_profile(accel, step, offset, dx):
    count = max(1, int((40.0 - offset - dx) / step))
    plan = TriggerPlan(offset, step, count, delta_x=dx)
    rec = _sweep(plan, travel=60.0, accel=accel)
    report = verify_uniform_grid(rec, plan, DRIVE)
    assert report.ok, report.message
    assert report.max_position_error <= MPP * (1 + 1e-9)
    idx = [e.pulse_index for e in rec.radar1]
    assert all(b > a for a, b in zip(idx, idx[1:]))


def test_on_lattice_offset_aligns_exactly():
    plan = TriggerPlan(5.0, 1.1, 30, delta_x=200 * MPP)
    report = verify_uniform_grid(_sweep(plan), plan, DRIVE)
    assert report.max_alignment_error == 0.0


def test_empty_record_fails():
    plan = TriggerPlan(0.0, 1.0, 3)
    empty = TriggerRecord((), (), 1, MPP, 0.0, 0.0)
    report = verify_uniform_grid(empty, plan, DRIVE)
    assert not report.ok and report.message


def test_unreachable_breakpoints_reported():
    plan = TriggerPlan(5.0, 1.0, 100)
    with pytest.warns(UserWarning, match="out of reach"):
        rec = _sweep(plan, travel=50.0)
    assert len(rec.radar1) < 100 and rec.missed[0] > 0
    report = verify_uniform_grid(rec, plan, DRIVE)
    assert not report.ok and "missed" in report.message


def test_mismatched_drive_rejected():
    stream = generate_pulse_stream(MotionProfile(10.0, 200.0, 500.0), DRIVE)
    with pytest.raises(ValueError):
        run_synchronizer(stream, TriggerPlan(0.0, 1.0, 3), DriveConfig(36, 7200))
