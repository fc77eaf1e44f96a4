from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from choirf0.dispersion import (
    DB_FLOOR,
    DispersionConfig,
    Peak,
    SkipReason,
    Whitening,
    analyze_unison,
    interpolate_peak,
    local_maxima,
    locate_peak,
    measure_bandwidth,
    to_db,
    whiten_frame,
)
from choirf0.sections import Section
from choirf0.signal_io import AudioClip, F0Track
from choirf0.spectral import StftConfig, stft

from conftest import sine_clip


@settings(max_examples=60)
@given(st.floats(-0.5, 0.5), st.floats(0.1, 20.0), st.floats(-40.0, 0.0), st.integers(1, 4000))
def test_interpolation_recovers_parabola_vertex(p, curv, top, k):
    y = lambda x: top - curv * (x - p) ** 2
    freq, amp = interpolate_peak(y(-1), y(0), y(1), 2.5, k)
    assert freq == pytest.approx((k + p) * 2.5, abs=1e-9)
    assert amp == pytest.approx(top, abs=1e-9)


def test_interpolation_flat_and_clipped():
    assert interpolate_peak(0.0, 0.0, 0.0, 1.0, 10) == (10.0, 0.0)
    freq, _ = interpolate_peak(0.0, 0.0, -1e-9, 1.0, 10)  # nearly a step
    assert 9.5 <= freq <= 10.5


def test_to_db_reference_and_floor():
    db = to_db(np.array([0.0, 0.5, 1.0]))
    assert db[2] == 0.0 and db[1] == pytest.approx(-6.0206, abs=1e-4) and db[0] == DB_FLOOR
    assert np.all(to_db(np.zeros(4)) == DB_FLOOR)


def test_median_whitening_matches_naive_median(rng):
    mags = rng.uniform(0.01, 1.0, 300)
    cfg = DispersionConfig(whitening=Whitening.MEDIAN, median_envelope_bins=9)
    db = to_db(mags)
    padded = np.concatenate([[db[0]] * 4, db, [db[-1]] * 4])
    naive = np.array([sorted(padded[i:i + 9])[4] for i in range(len(db))])
    np.testing.assert_allclose(whiten_frame(mags, cfg), db - naive, atol=1e-12)
    np.testing.assert_array_equal(whiten_frame(mags), db)


def test_config_validation():
    with pytest.raises(ValueError):
        DispersionConfig(median_envelope_bins=10)
    with pytest.raises(ValueError):
        DispersionConfig(db_drop=0)
    assert DispersionConfig(whitening="median").whitening is Whitening.MEDIAN


def test_local_maxima_plateau_rules():
    x = np.array([0, 1, 1, 0, 2, 0, 0, 0, 3, 3, 3, 0], dtype=float)
    np.testing.assert_array_equal(local_maxima(x, 0, 11), [1, 2, 4, 8, 10])


def test_locate_peak_picks_highest_in_window():
    bin_hz = 10.0
    db = np.full(100, -60.0)
    db[20:23] = [-10, -3, -10]       # 210 Hz, outside a 100-cent window around 270
    db[25:30] = [-20, -12, -20, -6, -15]  # 260 and 280 Hz
    peak = locate_peak(db, 270.0, bin_hz)
    assert peak.bin == 28 and abs(peak.freq_hz - 280.0) < 5.0
    assert locate_peak(np.full(100, -60.0), 265.0, bin_hz) is None


def test_bandwidth_of_exact_parabola():
    # dB parabola: the -3 dB crossing is exact under quadratic interpolation
    k = np.arange(200, dtype=float)
    db = np.maximum(-0.75 * (k - 100.3) ** 2, -80)
    peak = Peak(100, 100.3, 0.0)
    bw = measure_bandwidth(db, peak, 1.0)
    assert bw.b1_hz == pytest.approx(98.3, abs=1e-9)
    assert bw.b2_hz == pytest.approx(102.3, abs=1e-9)
    assert bw.dispersion_cents == pytest.approx(1200 * math.log2(102.3 / 98.3))
    assert not bw.merged


def test_bandwidth_merged_trough_and_low_contrast():
    db = np.full(60, -60.0)
    db[28:36] = [-10, -1, 0, -2, -2.5, -2.2, -1.0, -10]
    bw = measure_bandwidth(db, Peak(30, 30.0, 0.0), 1.0)
    assert bw.merged and bw.b2_hz == 32.0
    flat = np.full(60, -1.0)
    flat[30] = 0.0
    assert measure_bandwidth(flat, Peak(30, 30.0, 0.0), 1.0) is None
    edge = np.full(10, -60.0)
    edge[:3] = [-1.0, -0.5, 0.0]
    assert measure_bandwidth(edge, Peak(2, 2.0, 0.0), 1.0) is None


def _track(values, hop=1024 / 44100, start=0.0):
    return F0Track(hop, np.asarray(values, dtype=float), start)


def test_analyze_single_sinusoid():
    clip = sine_clip(330.0, 1.0)
    spec = stft(clip)
    anchors = {"soprano": _track([335.0] * len(spec.frame_times), start=spec.frame_times[0])}
    tr = analyze_unison(clip, anchors)[Section.SOPRANO]
    assert len(tr.estimates) == spec.n_frames and not tr.skipped
    f = np.array([e.mean_f0_hz for e in tr.estimates])
    assert np.max(np.abs(f - 330.0)) < 0.2
    assert np.all(tr.dispersions > 0)


def test_analyze_skip_reasons_and_collisions():
    clip = sine_clip(440.0, 1.0)
    spec = stft(clip)
    t0, n = spec.frame_times[0], spec.n_frames
    alto = _track([440.0, 0.0] + [440.0] * (n - 2) + [440.0] * 5, start=t0)
    sop = _track([445.0] * n, start=t0)
    tracks = analyze_unison(clip, {"alto": alto, "soprano": sop})
    a, s = tracks[Section.ALTO], tracks[Section.SOPRANO]
    assert a.skipped_frames[SkipReason.UNVOICED] == 1
    assert a.skipped_frames[SkipReason.OUT_OF_RANGE] == 5
    # both sections resolve to the same peak wherever both are voiced
    assert a.skipped_frames[SkipReason.COLLISION] == n - 1
    assert s.skipped_frames[SkipReason.COLLISION] == n - 1
    assert a.estimates == [] and len(s.estimates) == 1
    rows = a.records()
    assert len(rows) == n - 1 + 5  # voiced anchor frames only
    assert [r["time"] for r in rows] == sorted(r["time"] for r in rows)


def test_analyze_rejects_disjoint_timeline():
    clip = sine_clip(220.0, 0.5)
    with pytest.raises(ValueError, match="overlap"):
        analyze_unison(clip, {"bass": _track([220.0] * 3, start=100.0)})


def test_low_contrast_on_noise_is_reported(rng):
    clip = AudioClip(rng.standard_normal(44100) * 0.1, 44100)
    spec = stft(clip)
    tr = analyze_unison(clip, {"tenor": _track([220.0] * spec.n_frames, start=spec.frame_times[0])},
                        StftConfig(), DispersionConfig(db_drop=40.0))[Section.TENOR]
    assert tr.skipped_frames[SkipReason.LOW_CONTRAST] + tr.skipped_frames[SkipReason.NO_PEAK] == spec.n_frames
