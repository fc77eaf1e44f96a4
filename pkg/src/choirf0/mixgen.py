"""Singer-stem combinations: SATB quartets and full-choir mixes.

A manifest is JSON, either a bare mapping of sections to singers::

    {"soprano": [{"singer_id": "S1", "wav_path": "s1.wav", "f0_csv_path": "s1.csv"}, ...],
     "alto": [...], "tenor": [...], "bass": [...]}

or the same mapping under ``"sections"`` next to a ``"piece"`` name.
Relative paths resolve against the manifest's directory.
"""
from __future__ import annotations

import itertools
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping

import numpy as np

from .sections import SATB, Section
from .signal_io import (
    AudioClip,
    F0Track,
    MultiF0Sequence,
    load_f0_track,
    load_wav,
    multif0_from_tracks,
    section_anchor,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Stem:
    singer_id: str
    wav_path: Path
    f0_csv_path: Path | None = None


@dataclass(frozen=True)
class StemManifest:
    piece: str
    sections: dict[Section, tuple[Stem, ...]]

    def __post_init__(self):
        if not self.sections:
            raise ValueError("manifest has no sections")
        for section, stems in self.sections.items():
            if not stems:
                raise ValueError(f"section {section.value} has no stems")
        ids = [s.singer_id for stems in self.sections.values() for s in stems]
        if len(set(ids)) != len(ids):
            raise ValueError("singer ids must be unique across the manifest")

    @property
    def stems(self) -> dict[str, Stem]:
        return {s.singer_id: s for stems in self.sections.values() for s in stems}


@dataclass(frozen=True)
class MixSpec:
    """Selected singers per section and the gain applied to each stem."""

    selection: dict[Section, tuple[str, ...]]
    gains: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if not self.gains:
            singers = self.singers
            object.__setattr__(self, "gains", {s: 1.0 / len(singers) for s in singers})

    @property
    def singers(self) -> list[str]:
        return [s for ids in self.selection.values() for s in ids]

    @property
    def is_quartet(self) -> bool:
        return all(len(ids) == 1 for ids in self.selection.values())

    @property
    def name(self) -> str:
        if self.is_quartet:
            return "quartet_" + "".join(self.selection[s][0] for s in SATB if s in self.selection)
        return "choir"


def load_manifest(path: str | Path) -> StemManifest:
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if "sections" in doc:
        piece = str(doc.get("piece", path.stem))
        raw = doc["sections"]
    else:
        piece, raw = path.stem, doc
    base = path.parent
    sections = {}
    for key, singers in raw.items():
        section = Section.parse(key)
        stems = []
        for entry in singers:
            f0 = entry.get("f0_csv_path")
            stems.append(Stem(
                singer_id=str(entry["singer_id"]),
                wav_path=base / entry["wav_path"],
                f0_csv_path=base / f0 if f0 else None,
            ))
        sections[section] = tuple(stems)
    ordered = {s: sections[s] for s in SATB if s in sections}
    return StemManifest(piece, ordered)


def enumerate_quartets(manifest: StemManifest) -> list[MixSpec]:
    """Every one-singer-per-section combination.

    Ordered lexicographically with the soprano index varying fastest, then
    alto, tenor, bass.
    """
    sections = list(manifest.sections)
    choices = [[s.singer_id for s in manifest.sections[sec]] for sec in reversed(sections)]
    specs = []
    for combo in itertools.product(*choices):
        picked = dict(zip(reversed(sections), combo))
        specs.append(MixSpec({sec: (picked[sec],) for sec in sections}))
    return specs


def choir_mix(manifest: StemManifest) -> MixSpec:
    return MixSpec({sec: tuple(s.singer_id for s in stems) for sec, stems in manifest.sections.items()})


def render_mix(manifest: StemManifest, spec: MixSpec,
               loader: Callable[[Path], AudioClip] = load_wav) -> AudioClip:
    """Gain-weighted sum of the selected stems. Shorter stems are zero-padded.

    The mix peak is available as ``clip.peak``.
    """
    stems = manifest.stems
    clips = {sid: loader(stems[sid].wav_path) for sid in spec.singers}
    rates = {c.sample_rate for c in clips.values()}
    if len(rates) != 1:
        raise ValueError(f"sample-rate mismatch among stems: {sorted(rates)}")
    n = max(len(c) for c in clips.values())
    out = np.zeros(n)
    for sid, clip in clips.items():
        out[:len(clip)] += spec.gains[sid] * clip.samples
    mix = AudioClip(out, rates.pop())
    logger.info("%s: peak %.4f", spec.name, mix.peak)
    return mix


def load_truths(manifest: StemManifest) -> dict[str, F0Track]:
    missing = [s.singer_id for s in manifest.stems.values() if s.f0_csv_path is None]
    if missing:
        raise ValueError(f"no f0 track for singers {missing}")
    return {sid: load_f0_track(s.f0_csv_path) for sid, s in manifest.stems.items()}


def companion_truth(truths: Mapping[str, F0Track], spec: MixSpec) -> MultiF0Sequence:
    """Multi-f0 ground truth of a mix: voiced f0s of the selected singers per frame.

    Unison duplicates are kept.
    """
    return multif0_from_tracks([truths[sid] for sid in spec.singers])


def section_anchors(truths: Mapping[str, F0Track], spec: MixSpec) -> dict[Section, F0Track]:
    """Per-section anchor tracks for a mix (mean f0 of the section's selected singers)."""
    return {sec: section_anchor([truths[sid] for sid in ids]) for sec, ids in spec.selection.items()}
