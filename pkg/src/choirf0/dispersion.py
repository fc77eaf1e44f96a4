"""Unison f0 dispersion from spectral peak bandwidth.

For every voiced anchor frame of a choir section the spectral peak nearest
the anchor is located, refined by parabolic interpolation on the dB
spectrum, and its bandwidth at ``db_drop`` dB below the interpolated peak is
reported in cents. The interpolated peak frequency is the section's mean f0
for that frame; the bandwidth is its dispersion.

The bandwidth includes the main-lobe width of the analysis window. No
attempt is made to remove it; see :func:`window_floor_cents`.
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping

import numpy as np
from scipy.ndimage import median_filter

from .sections import Section
from .signal_io import AudioClip, F0Track
from .spectral import REF_HZ, Spectrogram, StftConfig, make_window, stft

DB_FLOOR = -300.0
COLLISION_CENTS = 1.0


class Whitening(str, Enum):
    OFF = "off"
    MEDIAN = "median"


class SkipReason(str, Enum):
    UNVOICED = "unvoiced"
    NO_PEAK = "no_peak"
    COLLISION = "collision"
    LOW_CONTRAST = "low_contrast"
    OUT_OF_RANGE = "out_of_range"


@dataclass(frozen=True)
class DispersionConfig:
    """Peak search and bandwidth parameters.

    ``search_half_width`` is in cents around the anchor. ``ref_hz`` only
    affects absolute cents values in reports; dispersion is a ratio.
    """

    search_half_width: float = 100.0
    db_drop: float = 3.0
    whitening: Whitening = Whitening.OFF
    median_envelope_bins: int = 201
    ref_hz: float = REF_HZ

    def __post_init__(self):
        object.__setattr__(self, "whitening", Whitening(self.whitening))
        if not self.search_half_width > 0:
            raise ValueError("search_half_width must be positive")
        if not self.db_drop > 0:
            raise ValueError("db_drop must be positive")
        if self.median_envelope_bins < 1 or self.median_envelope_bins % 2 == 0:
            raise ValueError("median_envelope_bins must be a positive odd integer")
        if not self.ref_hz > 0:
            raise ValueError("ref_hz must be positive")


@dataclass(frozen=True)
class Peak:
    bin: int
    freq_hz: float
    amp_db: float


@dataclass(frozen=True)
class Bandwidth:
    b1_hz: float
    b2_hz: float
    dispersion_cents: float
    merged: bool


@dataclass(frozen=True)
class UnisonEstimate:
    frame_time: float
    mean_f0_hz: float
    peak_db: float
    b1_hz: float
    b2_hz: float
    dispersion_cents: float
    merged: bool
    anchor_hz: float


@dataclass(frozen=True)
class SkippedFrame:
    time: float
    anchor_hz: float
    reason: SkipReason


@dataclass
class DispersionTrack:
    section: Section
    estimates: list[UnisonEstimate] = field(default_factory=list)
    skipped: list[SkippedFrame] = field(default_factory=list)

    @property
    def skipped_frames(self) -> Counter:
        return Counter(s.reason for s in self.skipped)

    @property
    def dispersions(self) -> np.ndarray:
        return np.array([e.dispersion_cents for e in self.estimates])

    def records(self, ref_hz: float = REF_HZ) -> list[dict]:
        """One row per voiced anchor frame, measured or skipped, in time order."""
        rows = []
        for e in self.estimates:
            rows.append({
                "section": self.section.value,
                "time": e.frame_time,
                "anchor_hz": e.anchor_hz,
                "mean_f0_hz": e.mean_f0_hz,
                "mean_f0_cents": 1200.0 * math.log2(e.mean_f0_hz / ref_hz),
                "b1_hz": e.b1_hz,
                "b2_hz": e.b2_hz,
                "dispersion_cents": e.dispersion_cents,
                "merged": e.merged,
                "skipped_reason": "",
            })
        for s in self.skipped:
            if s.reason is SkipReason.UNVOICED:
                continue
            rows.append({
                "section": self.section.value,
                "time": s.time,
                "anchor_hz": s.anchor_hz,
                "mean_f0_hz": None,
                "mean_f0_cents": None,
                "b1_hz": None,
                "b2_hz": None,
                "dispersion_cents": None,
                "merged": None,
                "skipped_reason": s.reason.value,
            })
        rows.sort(key=lambda r: r["time"])
        return rows


# --------------------------------------------------------------------------
# per-frame operations
# --------------------------------------------------------------------------

def to_db(magnitudes: np.ndarray) -> np.ndarray:
    """Magnitudes in dB relative to the frame maximum, floored at ``DB_FLOOR``."""
    mags = np.asarray(magnitudes, dtype=np.float64)
    peak = mags.max() if mags.size else 0.0
    if peak <= 0:
        return np.full(mags.shape, DB_FLOOR)
    with np.errstate(divide="ignore"):
        db = 20.0 * np.log10(mags / peak)
    return np.maximum(db, DB_FLOOR)


def whiten_frame(magnitudes: np.ndarray, cfg: DispersionConfig = DispersionConfig()) -> np.ndarray:
    """dB frame used for peak measurement.

    With median whitening the running median over ``median_envelope_bins``
    bins (edges replicated) is subtracted from the dB frame.
    """
    db = to_db(magnitudes)
    if cfg.whitening is Whitening.OFF:
        return db
    envelope = median_filter(db, size=cfg.median_envelope_bins, mode="nearest")
    return db - envelope


def interpolate_peak(alpha: float, beta: float, gamma: float, bin_hz: float, k: int
                     ) -> tuple[float, float]:
    """Parabolic vertex through dB values at bins k-1, k, k+1.

    Returns ``(freq_hz, amp_db)``. A flat triple gives the bin center.
    """
    denom = alpha - 2.0 * beta + gamma
    if denom == 0.0:
        p = 0.0
    else:
        p = min(0.5, max(-0.5, 0.5 * (alpha - gamma) / denom))
    return (k + p) * bin_hz, beta - 0.25 * (alpha - gamma) * p


def search_bounds(anchor_hz: float, half_width_cents: float) -> tuple[float, float]:
    r = 2.0 ** (half_width_cents / 1200.0)
    return anchor_hz / r, anchor_hz * r


def local_maxima(frame_db: np.ndarray, k_lo: int, k_hi: int) -> np.ndarray:
    """Interior bins in ``[k_lo, k_hi]`` that are >= both neighbours and > one of them."""
    k_lo = max(k_lo, 1)
    k_hi = min(k_hi, len(frame_db) - 2)
    if k_lo > k_hi:
        return np.empty(0, dtype=int)
    mid = frame_db[k_lo:k_hi + 1]
    left = frame_db[k_lo - 1:k_hi]
    right = frame_db[k_lo + 1:k_hi + 2]
    is_max = (mid >= left) & (mid >= right) & ((mid > left) | (mid > right))
    return k_lo + np.flatnonzero(is_max)


def locate_peak(frame_db: np.ndarray, anchor_hz: float, bin_hz: float,
                cfg: DispersionConfig = DispersionConfig()) -> Peak | None:
    """Highest interpolated local maximum within the anchor's search window.

    Returns ``None`` when the window holds no local maximum.
    """
    lo, hi = search_bounds(anchor_hz, cfg.search_half_width)
    cands = local_maxima(frame_db, math.ceil(lo / bin_hz), math.floor(hi / bin_hz))
    best = None
    for k in cands:
        freq, amp = interpolate_peak(frame_db[k - 1], frame_db[k], frame_db[k + 1], bin_hz, int(k))
        # the vertex of an edge bin can fall just outside the window
        if not lo <= freq <= hi:
            continue
        if best is None or amp > best.amp_db:
            best = Peak(int(k), freq, amp)
    return best


def _crossing(frame_db: np.ndarray, j: int, step: int, thr: float) -> float:
    """Fractional bin where the dB curve falls through ``thr`` between j and j+step.

    A quadratic through bins j-step, j, j+step is solved for the crossing;
    linear interpolation is the fallback at the array edge.
    """
    y0, y1 = frame_db[j], frame_db[j + step]
    linear = (y0 - thr) / (y0 - y1)
    back = j - step
    if 0 <= back < len(frame_db):
        ym1 = frame_db[back]
        a = 0.5 * (y1 - 2.0 * y0 + ym1)
        b = 0.5 * (y1 - ym1)
        c = y0 - thr
        if a != 0.0:
            disc = b * b - 4.0 * a * c
            if disc >= 0.0:
                sq = math.sqrt(disc)
                for u in ((-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)):
                    if 0.0 <= u <= 1.0:
                        return j + step * u
    return j + step * linear


def measure_bandwidth(frame_db: np.ndarray, peak: Peak, bin_hz: float,
                      cfg: DispersionConfig = DispersionConfig()) -> Bandwidth | None:
    """Frequencies where the spectrum has fallen ``db_drop`` below the peak.

    Walks outward from the peak bin on each side. If the curve turns upward
    before reaching the threshold (an adjacent peak merges in), the edge is
    clamped at that trough and ``merged`` is set. Returns ``None`` when the
    peak does not stand ``db_drop`` above the frame median, or a walk reaches
    the end of the spectrum.
    """
    n = len(frame_db)
    if peak.amp_db - float(np.median(frame_db)) < cfg.db_drop:
        return None
    thr = peak.amp_db - cfg.db_drop
    merged = False
    edges = []
    for step in (-1, 1):
        j = peak.bin
        while True:
            nxt = j + step
            if nxt < 0 or nxt >= n:
                return None
            if frame_db[nxt] < thr:
                x = _crossing(frame_db, j, step, thr)
                break
            if frame_db[nxt] > frame_db[j]:
                x = float(j)
                merged = True
                break
            j = nxt
        edges.append(x * bin_hz)
    b1, b2 = edges
    if b1 <= 0.0:
        return None
    return Bandwidth(b1, b2, 1200.0 * math.log2(b2 / b1), merged)


def window_floor_cents(center_hz: float, stft_cfg: StftConfig = StftConfig(),
                       sample_rate: int = 44100, db_drop: float = 3.0,
                       oversample: int = 64) -> float:
    """Bandwidth (cents) of the window's own main lobe at ``center_hz``.

    The window transform is evaluated on a grid ``oversample`` times finer
    than the analysis FFT. This is the smallest dispersion a perfectly
    stable sinusoid can show.
    """
    w = make_window(stft_cfg.window_kind, stft_cfg.window_size)
    n_fft = stft_cfg.fft_size * oversample
    mag = np.abs(np.fft.rfft(w, n_fft))
    db = 20.0 * np.log10(np.maximum(mag / mag[0], 1e-300))
    i = int(np.argmax(db < -db_drop))
    frac = (db[i - 1] + db_drop) / (db[i - 1] - db[i])
    half = (i - 1 + frac) * sample_rate / n_fft
    return 1200.0 * math.log2((center_hz + half) / (center_hz - half))


# --------------------------------------------------------------------------
# section analysis
# --------------------------------------------------------------------------

def analyze_unison(clip: AudioClip, anchors: Mapping[Section | str, F0Track],
                   stft_cfg: StftConfig = StftConfig(),
                   disp_cfg: DispersionConfig = DispersionConfig(),
                   spectrogram: Spectrogram | None = None) -> dict[Section, DispersionTrack]:
    """Measure mean f0 and dispersion for every voiced anchor frame of every section.

    Each anchor sample is mapped to the STFT frame whose center lies within
    half a hop of it. When two sections resolve to the same peak (within
    1 cent) in the same frame, both are skipped as collisions.

    Raises:
        ValueError: no anchor sample falls on the STFT frame timeline.
    """
    spec = spectrogram if spectrogram is not None else stft(clip, stft_cfg)
    db_cache: dict[int, np.ndarray] = {}

    def frame_db(k: int) -> np.ndarray:
        if k not in db_cache:
            db_cache[k] = whiten_frame(spec.magnitudes[k], disp_cfg)
        return db_cache[k]

    entries: dict[Section, list] = {}
    overlap = False
    for key, track in anchors.items():
        section = Section.parse(key)
        rows = []
        for t, f0 in zip(track.times, track.frames):
            k = spec.nearest_frame(float(t))
            overlap = overlap or k is not None
            f0 = float(f0)
            if f0 <= 0:
                rows.append(SkippedFrame(float(t), f0, SkipReason.UNVOICED))
                continue
            if k is None:
                rows.append(SkippedFrame(float(t), f0, SkipReason.OUT_OF_RANGE))
                continue
            ft = float(spec.frame_times[k])
            db = frame_db(k)
            peak = locate_peak(db, f0, spec.bin_hz, disp_cfg)
            if peak is None:
                rows.append(SkippedFrame(ft, f0, SkipReason.NO_PEAK))
                continue
            bw = measure_bandwidth(db, peak, spec.bin_hz, disp_cfg)
            if bw is None:
                rows.append(SkippedFrame(ft, f0, SkipReason.LOW_CONTRAST))
                continue
            rows.append((k, UnisonEstimate(
                frame_time=ft, mean_f0_hz=peak.freq_hz, peak_db=peak.amp_db,
                b1_hz=bw.b1_hz, b2_hz=bw.b2_hz, dispersion_cents=bw.dispersion_cents,
                merged=bw.merged, anchor_hz=f0,
            )))
        entries[section] = rows
    if not overlap:
        raise ValueError("anchor timeline does not overlap the spectrogram frame timeline")

    by_frame: dict[int, list[tuple[Section, float]]] = {}
    for section, rows in entries.items():
        for row in rows:
            if isinstance(row, tuple):
                k, est = row
                by_frame.setdefault(k, []).append((section, est.mean_f0_hz))
    collided: set[tuple[Section, int]] = set()
    for k, found in by_frame.items():
        for i in range(len(found)):
            for j in range(i + 1, len(found)):
                (sa, fa), (sb, fb) = found[i], found[j]
                if sa is not sb and abs(1200.0 * math.log2(fa / fb)) <= COLLISION_CENTS:
                    collided.add((sa, k))
                    collided.add((sb, k))

    tracks = {}
    for section, rows in entries.items():
        track = DispersionTrack(section)
        for row in rows:
            if isinstance(row, SkippedFrame):
                track.skipped.append(row)
            else:
                k, est = row
                if (section, k) in collided:
                    track.skipped.append(SkippedFrame(est.frame_time, est.anchor_hz, SkipReason.COLLISION))
                else:
                    track.estimates.append(est)
        tracks[section] = track
    return tracks
