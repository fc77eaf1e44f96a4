"""Frame-level multi-f0 evaluation.

Per reference frame, estimated pitches are matched one-to-one to reference
pitches within ``tolerance_cents``; the number of matched pairs is the
maximum possible (maximum bipartite matching), so results never depend on
tie-breaking. Chroma variants fold both sides onto one octave and measure
distance on the 1200-cent circle.

Totals over frames give

    precision = TP / (TP + FP)        recall = TP / (TP + FN)
    accuracy  = TP / (TP + FP + FN)
    E_sub  = sum(min(Nref, Nest) - TP) / sum(Nref)
    E_miss = sum(max(0, Nref - Nest))  / sum(Nref)
    E_fa   = sum(max(0, Nest - Nref))  / sum(Nref)
    E_tot  = sum(max(Nref, Nest) - TP) / sum(Nref)

so that ``E_tot = E_sub + E_miss + E_fa``. Ratios with a zero denominator
are reported as 0.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .signal_io import MultiF0Sequence

MAX_SET_SIZE = 16

# Published reference errors on SATB vocal quartets (one singer per part);
# regression documentation only, not reproduced here.
PUBLISHED_ERRORS = {
    "DS": {"e_sub": 0.023, "e_miss": 0.35, "e_fa": 0.004, "e_tot": 0.38},
    "SCH": {"e_sub": 0.10, "e_miss": 0.28, "e_fa": 0.015, "e_tot": 0.40},
    "KL": {"e_sub": 0.12, "e_miss": 0.48, "e_fa": 0.08, "e_tot": 0.67},
}


@dataclass(frozen=True)
class EvalConfig:
    tolerance_cents: float = 50.0
    chroma: bool = False

    def __post_init__(self):
        if not self.tolerance_cents > 0:
            raise ValueError("tolerance_cents must be positive")


@dataclass(frozen=True)
class EvalCounts:
    tp: int
    fp: int
    fn: int
    n_ref: int
    n_est: int


@dataclass(frozen=True)
class Metrics:
    precision: float
    recall: float
    accuracy: float
    e_sub: float
    e_miss: float
    e_fa: float
    e_tot: float
    tp: int
    fp: int
    fn: int
    n_ref: int
    n_est: int


@dataclass(frozen=True)
class EvalReport:
    plain: Metrics
    chroma: Metrics
    n_frames: int
    tolerance_cents: float

    def __getattr__(self, name):
        # flat access: report.precision, report.chroma_accuracy, ...
        if name.startswith("chroma_"):
            return getattr(self.chroma, name[len("chroma_"):])
        if name in Metrics.__dataclass_fields__:
            return getattr(self.plain, name)
        raise AttributeError(name)

    def to_dict(self) -> dict:
        return {
            "n_frames": self.n_frames,
            "tolerance_cents": self.tolerance_cents,
            "plain": asdict(self.plain),
            "chroma": asdict(self.chroma),
        }


def pitch_distance(ref: float, est: float, chroma: bool = False) -> float:
    """Absolute distance in cents (on the octave circle when ``chroma``)."""
    d = abs(1200.0 * math.log2(est / ref))
    if chroma:
        d = d % 1200.0
        d = min(d, 1200.0 - d)
    return d


def _max_matching(adj: list[list[int]], n_est: int) -> int:
    """Size of a maximum bipartite matching (augmenting paths)."""
    owner = [-1] * n_est

    def augment(i: int, seen: list[bool]) -> bool:
        for j in adj[i]:
            if not seen[j]:
                seen[j] = True
                if owner[j] < 0 or augment(owner[j], seen):
                    owner[j] = i
                    return True
        return False

    return sum(augment(i, [False] * n_est) for i in range(len(adj)))


def match_frame(ref: Sequence[float], est: Sequence[float], cfg: EvalConfig = EvalConfig()
                ) -> EvalCounts:
    """Count true positives in one frame as a maximum one-to-one matching."""
    if len(ref) > MAX_SET_SIZE or len(est) > MAX_SET_SIZE:
        raise ValueError(f"at most {MAX_SET_SIZE} pitches per frame")
    adj = [
        [j for j, e in enumerate(est) if pitch_distance(r, e, cfg.chroma) <= cfg.tolerance_cents]
        for r in ref
    ]
    tp = _max_matching(adj, len(est))
    return EvalCounts(tp=tp, fp=len(est) - tp, fn=len(ref) - tp, n_ref=len(ref), n_est=len(est))


def align_estimates(ref: MultiF0Sequence, est: MultiF0Sequence) -> list[tuple[float, ...]]:
    """Estimated pitch set for every reference frame.

    Each reference timestamp takes the nearest estimate frame if it lies
    within half the reference hop, otherwise an empty set.
    """
    if len(est) == 0:
        return [()] * len(ref)
    half = 0.5 * ref.hop_seconds
    idx = np.searchsorted(est.timestamps, ref.timestamps)
    out = []
    for t, i in zip(ref.timestamps, idx):
        best = None
        for j in (i - 1, i):
            if 0 <= j < len(est):
                d = abs(est.timestamps[j] - t)
                if best is None or d < best[0]:
                    best = (d, j)
        out.append(est.frames[best[1]] if best[0] <= half + 1e-9 else ())
    return out


def _ratio(num: int, den: int) -> float:
    return num / den if den else 0.0


def _metrics(counts: Sequence[EvalCounts]) -> Metrics:
    tp = sum(c.tp for c in counts)
    fp = sum(c.fp for c in counts)
    fn = sum(c.fn for c in counts)
    n_ref = sum(c.n_ref for c in counts)
    n_est = sum(c.n_est for c in counts)
    sub = sum(min(c.n_ref, c.n_est) - c.tp for c in counts)
    miss = sum(max(0, c.n_ref - c.n_est) for c in counts)
    fa = sum(max(0, c.n_est - c.n_ref) for c in counts)
    tot = sum(max(c.n_ref, c.n_est) - c.tp for c in counts)
    return Metrics(
        precision=_ratio(tp, tp + fp),
        recall=_ratio(tp, tp + fn),
        accuracy=_ratio(tp, tp + fp + fn),
        e_sub=_ratio(sub, n_ref),
        e_miss=_ratio(miss, n_ref),
        e_fa=_ratio(fa, n_ref),
        e_tot=_ratio(tot, n_ref),
        tp=tp, fp=fp, fn=fn, n_ref=n_ref, n_est=n_est,
    )


def score(ref: MultiF0Sequence, est: MultiF0Sequence, cfg: EvalConfig = EvalConfig()) -> EvalReport:
    """Plain and chroma metrics of ``est`` against ``ref`` over all reference frames."""
    if len(ref) == 0:
        raise ValueError("reference sequence is empty")
    aligned = align_estimates(ref, est)
    plain_cfg = EvalConfig(cfg.tolerance_cents, chroma=False)
    chroma_cfg = EvalConfig(cfg.tolerance_cents, chroma=True)
    plain, chroma = [], []
    for r, e in zip(ref.frames, aligned):
        if not r and not e:
            continue
        plain.append(match_frame(r, e, plain_cfg))
        chroma.append(match_frame(r, e, chroma_cfg))
    return EvalReport(_metrics(plain), _metrics(chroma), len(ref), cfg.tolerance_cents)
