"""Synthetic unison signals with known per-singer f0.

Each singer is a harmonic tone whose f0 follows

    f0_i(t) = center * 2 ** ((detune_i + depth * sin(2 pi rate t + phi_i)) / 1200)

with random vibrato phase ``phi_i`` and random partial phases drawn from a
seeded generator. Singers are averaged with equal gain.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import Mapping, NamedTuple

import numpy as np

from .sections import Section
from .signal_io import AudioClip, F0Track, MultiF0Sequence, multif0_from_tracks, section_anchor


@dataclass(frozen=True)
class UnisonSpec:
    n_singers: int = 1
    center_f0_hz: float = 220.0
    detune_cents: tuple[float, ...] = (0.0,)
    n_harmonics: int = 1
    harmonic_rolloff_db_per_harmonic: float = 6.0
    vibrato_rate_hz: float = 0.0
    vibrato_depth_cents: float = 0.0
    duration_s: float = 2.0
    sample_rate: int = 44100
    noise_db: float = -math.inf

    def __post_init__(self):
        object.__setattr__(self, "detune_cents", tuple(float(d) for d in self.detune_cents))
        if self.n_singers < 1:
            raise ValueError("n_singers must be >= 1")
        if len(self.detune_cents) != self.n_singers:
            raise ValueError(
                f"detune_cents has {len(self.detune_cents)} entries for {self.n_singers} singers"
            )
        if self.n_harmonics < 1:
            raise ValueError("n_harmonics must be >= 1")
        if not self.center_f0_hz > 0 or not self.duration_s > 0 or self.sample_rate <= 0:
            raise ValueError("center_f0_hz, duration_s and sample_rate must be positive")
        top = self.max_f0_hz * self.n_harmonics
        if top >= self.sample_rate / 2:
            raise ValueError(
                f"aliasing: harmonic {self.n_harmonics} reaches {top:.1f} Hz, "
                f"Nyquist is {self.sample_rate / 2} Hz"
            )

    @property
    def max_f0_hz(self) -> float:
        cents = max(self.detune_cents) + abs(self.vibrato_depth_cents)
        return self.center_f0_hz * 2.0 ** (cents / 1200.0)

    @classmethod
    def from_dict(cls, d: Mapping) -> UnisonSpec:
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown UnisonSpec fields: {sorted(unknown)}")
        kw = dict(d)
        if "detune_cents" in kw and "n_singers" not in kw:
            kw["n_singers"] = len(kw["detune_cents"])
        elif "n_singers" in kw and "detune_cents" not in kw:
            kw["detune_cents"] = (0.0,) * int(kw["n_singers"])
        if kw.get("noise_db") is None:
            kw.pop("noise_db", None)
        return cls(**kw)

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["detune_cents"] = list(self.detune_cents)
        if math.isinf(self.noise_db):
            d["noise_db"] = None
        return d


class UnisonRender(NamedTuple):
    clip: AudioClip
    tracks: list[F0Track]
    truth: MultiF0Sequence


class EnsembleRender(NamedTuple):
    clip: AudioClip
    anchors: dict[Section, F0Track]
    tracks: dict[Section, list[F0Track]]
    truth: MultiF0Sequence


def symmetric_detune(n_singers: int, spread_cents: float) -> tuple[float, ...]:
    """Evenly spaced offsets centered on 0 whose standard deviation is ``spread_cents``.

    The population standard deviation is used, matching the usual notion of
    f0 dispersion as the spread of the singers' pitch distribution.
    """
    if n_singers == 1 or spread_cents == 0:
        return (0.0,) * n_singers
    base = np.linspace(-1.0, 1.0, n_singers)
    return tuple((base * (spread_cents / base.std())).tolist())


def _f0_curve(spec: UnisonSpec, detune: float, vib_phase: float, t: np.ndarray) -> np.ndarray:
    cents = detune + spec.vibrato_depth_cents * np.sin(2 * np.pi * spec.vibrato_rate_hz * t + vib_phase)
    return spec.center_f0_hz * np.exp2(cents / 1200.0)


def _render(spec: UnisonSpec, rng: np.random.Generator, hop_size: int
            ) -> tuple[np.ndarray, list[F0Track]]:
    sr = spec.sample_rate
    n = int(round(spec.duration_s * sr))
    t = np.arange(n) / sr
    n_hops = -(-n // hop_size)
    t_hop = np.arange(n_hops) * hop_size / sr
    harm = np.arange(1, spec.n_harmonics + 1)
    amps = 10.0 ** (-spec.harmonic_rolloff_db_per_harmonic * (harm - 1) / 20.0)
    amps /= amps.sum()
    steady = spec.vibrato_depth_cents == 0 or spec.vibrato_rate_hz == 0

    mix = np.zeros(n)
    tracks = []
    for detune in spec.detune_cents:
        vib_phase = rng.uniform(0, 2 * np.pi)
        partial_phases = rng.uniform(0, 2 * np.pi, spec.n_harmonics)
        if steady:
            f0 = spec.center_f0_hz * 2.0 ** (detune / 1200.0)
            phase = 2 * np.pi * f0 * t
        else:
            inst = _f0_curve(spec, detune, vib_phase, t)
            phase = 2 * np.pi * np.concatenate(([0.0], np.cumsum(inst[:-1]) / sr))
        for a, h, ph in zip(amps, harm, partial_phases):
            mix += a * np.sin(h * phase + ph)
        tracks.append(F0Track(hop_size / sr, _f0_curve(spec, detune, vib_phase, t_hop)))
    mix /= spec.n_singers
    if not math.isinf(spec.noise_db):
        rms = math.sqrt(float(np.mean(mix ** 2)))
        mix += rng.standard_normal(n) * rms * 10.0 ** (spec.noise_db / 20.0)
    return mix, tracks


def synth_unison(spec: UnisonSpec, seed: int = 0, hop_size: int = 1024) -> UnisonRender:
    """Render one unison section. Tracks are sampled every ``hop_size`` samples from t=0."""
    mix, tracks = _render(spec, np.random.default_rng(seed), hop_size)
    return UnisonRender(AudioClip(mix, spec.sample_rate), tracks, multif0_from_tracks(tracks))


def synth_ensemble(sections: Mapping[Section | str, UnisonSpec], seed: int = 0,
                   hop_size: int = 1024) -> EnsembleRender:
    """Render several unison sections into one clip (equal gain per section).

    Each section's anchor is the per-frame mean f0 (in cents) of its singers.
    """
    if not sections:
        raise ValueError("need at least one section")
    specs = {Section.parse(k): v for k, v in sections.items()}
    rates = {s.sample_rate for s in specs.values()}
    lengths = {int(round(s.duration_s * s.sample_rate)) for s in specs.values()}
    if len(rates) != 1 or len(lengths) != 1:
        raise ValueError("all sections must share sample_rate and duration")
    seeds = np.random.SeedSequence(seed).spawn(len(specs))
    mix = None
    anchors, tracks = {}, {}
    for (section, spec), ss in zip(specs.items(), seeds):
        part, singer_tracks = _render(spec, np.random.default_rng(ss), hop_size)
        mix = part if mix is None else mix + part
        tracks[section] = singer_tracks
        anchors[section] = section_anchor(singer_tracks)
    mix /= len(specs)
    truth = multif0_from_tracks([tr for trs in tracks.values() for tr in trs])
    return EnsembleRender(AudioClip(mix, rates.pop()), anchors, tracks, truth)
