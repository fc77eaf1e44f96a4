"""Dispersion summaries and quartet-vs-choir significance tests."""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.special import betainc

from .sections import Section

TABLE_SECTION_ORDER = (Section.BASS, Section.TENOR, Section.ALTO, Section.SOPRANO)

# Published mean (sd) dispersion in cents on the Choral Singing Dataset, with a
# whitening step that was never specified. Regression documentation only.
PUBLISHED_DISPERSION = {
    ("Locus Iste", "Q"): {"B": (231, 57), "T": (136, 30), "A": (100, 22), "S": (76, 23)},
    ("Locus Iste", "CM"): {"B": (248, 130), "T": (140, 38), "A": (104, 25), "S": (79, 27)},
    ("El Rossinyol", "Q"): {"B": (181, 39), "T": (132, 26), "A": (98, 19), "S": (75, 16)},
    ("El Rossinyol", "CM"): {"B": (191, 70), "T": (136, 30), "A": (103, 23), "S": (80, 20)},
    ("Nino Dios", "Q"): {"B": (227, 58), "T": (143, 31), "A": (105, 22), "S": (78, 20)},
    ("Nino Dios", "CM"): {"B": (257, 175), "T": (149, 40), "A": (110, 28), "S": (82, 25)},
}


@dataclass(frozen=True)
class SampleSummary:
    n: int
    mean: float
    sd: float  # n-1 denominator; nan when n < 2


def summarize(values: Sequence[float]) -> SampleSummary:
    x = np.asarray(values, dtype=np.float64)
    if x.size == 0:
        raise ValueError("cannot summarize an empty sample")
    sd = float(np.std(x, ddof=1)) if x.size > 1 else math.nan
    return SampleSummary(int(x.size), float(np.mean(x)), sd)


@dataclass(frozen=True)
class TestResult:
    t_statistic: float
    dof: float
    p_two_tailed: float
    cohens_d: float
    degenerate: bool = False

    __test__ = False  # not a pytest class


def t_two_tailed_p(t: float, dof: float) -> float:
    """Two-tailed Student-t p value via the regularized incomplete beta function."""
    if math.isinf(t):
        return 0.0
    return float(betainc(0.5 * dof, 0.5, dof / (dof + t * t)))


def welch_t_test(a: Sequence[float], b: Sequence[float], equal_var: bool = False) -> TestResult:
    """Independent-samples t test (Welch by default) with Cohen's d.

    Cohen's d always uses the pooled standard deviation. With both variances
    zero the result is t = 0, p = 1 for equal means, and a ``degenerate``
    infinite t otherwise.
    """
    xa = np.asarray(a, dtype=np.float64)
    xb = np.asarray(b, dtype=np.float64)
    na, nb = xa.size, xb.size
    if na < 2 or nb < 2:
        raise ValueError(f"both samples need at least 2 values, got {na} and {nb}")
    ma, mb = float(xa.mean()), float(xb.mean())
    va, vb = float(xa.var(ddof=1)), float(xb.var(ddof=1))
    diff = ma - mb
    pooled_var = ((na - 1) * va + (nb - 1) * vb) / (na + nb - 2)

    if va == 0.0 and vb == 0.0:
        if diff == 0.0:
            return TestResult(0.0, float(na + nb - 2), 1.0, 0.0)
        inf = math.copysign(math.inf, diff)
        return TestResult(inf, float(na + nb - 2), 0.0, inf, degenerate=True)

    if equal_var:
        se = math.sqrt(pooled_var * (1.0 / na + 1.0 / nb))
        dof = float(na + nb - 2)
    else:
        qa, qb = va / na, vb / nb
        se = math.sqrt(qa + qb)
        dof = (qa + qb) ** 2 / (qa * qa / (na - 1) + qb * qb / (nb - 1))
    t = diff / se
    return TestResult(t, dof, t_two_tailed_p(t, dof), diff / math.sqrt(pooled_var))


# --------------------------------------------------------------------------
# reporting
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SummaryRow:
    piece: str
    section: Section
    configuration: str
    summary: SampleSummary
    sources: tuple[str, ...] = ()

    @property
    def testable(self) -> bool:
        return self.summary.n >= 2


@dataclass(frozen=True)
class TestRow:
    piece: str
    section: Section
    config_a: str
    config_b: str
    result: TestResult

    __test__ = False


@dataclass
class Report:
    summaries: list[SummaryRow] = field(default_factory=list)
    tests: list[TestRow] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "summaries": [
                {
                    "piece": r.piece, "section": r.section.value, "configuration": r.configuration,
                    **asdict(r.summary), "excluded_from_test": not r.testable,
                    "sources": list(r.sources),
                }
                for r in self.summaries
            ],
            "tests": [
                {
                    "piece": r.piece, "section": r.section.value,
                    "config_a": r.config_a, "config_b": r.config_b, **asdict(r.result),
                }
                for r in self.tests
            ],
        }

    def write_summary_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["piece", "section", "configuration", "n", "mean", "sd", "excluded_from_test"])
            for r in self.summaries:
                s = r.summary
                w.writerow([r.piece, r.section.value, r.configuration, s.n, repr(s.mean),
                            repr(s.sd), int(not r.testable)])

    def write_tests_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["piece", "section", "config_a", "config_b", "t_statistic", "dof",
                        "p_two_tailed", "cohens_d", "degenerate"])
            for r in self.tests:
                t = r.result
                w.writerow([r.piece, r.section.value, r.config_a, r.config_b, repr(t.t_statistic),
                            repr(t.dof), repr(t.p_two_tailed), repr(t.cohens_d), int(t.degenerate)])

    def write_table_csv(self, path) -> None:
        """Section rows by (piece, configuration) columns of mean and sd."""
        cols = sorted({(r.piece, r.configuration) for r in self.summaries},
                      key=lambda pc: (pc[0], _config_rank(pc[1])))
        cells = {(r.piece, r.configuration, r.section): r.summary for r in self.summaries}
        sections = [s for s in TABLE_SECTION_ORDER if any(r.section is s for r in self.summaries)]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            header = ["section"]
            for piece, cfg in cols:
                header += [f"{piece} {cfg} mean", f"{piece} {cfg} sd"]
            w.writerow(header)
            for s in sections:
                row = [s.letter]
                for piece, cfg in cols:
                    summ = cells.get((piece, cfg, s))
                    row += [f"{summ.mean:.1f}", f"{summ.sd:.1f}"] if summ else ["", ""]
                w.writerow(row)


def _config_rank(cfg: str) -> tuple[int, str]:
    return ({"Q": 0, "CM": 1}.get(cfg, 2), cfg)


def report_tables(groups: Mapping[tuple[str, Section | str, str], Sequence[float]],
                  sources: Mapping[tuple[str, Section | str, str], Sequence[str]] | None = None,
                  compare: tuple[str, str] = ("Q", "CM"), equal_var: bool = False) -> Report:
    """Summaries per (piece, section, configuration) and a t test per (piece, section).

    Groups are keyed ``(piece, section, configuration)``. The test compares
    the two configurations in ``compare`` where both exist with n >= 2;
    smaller groups are summarized and flagged but not tested.
    """
    if not groups:
        raise ValueError("no groups to report")
    sources = sources or {}
    data = {}
    for (piece, section, cfg), values in groups.items():
        key = (str(piece), Section.parse(section), str(cfg))
        data[key] = (list(values), tuple(sources.get((piece, section, cfg), ())))

    def order(key):
        piece, section, cfg = key
        return piece, TABLE_SECTION_ORDER.index(section), _config_rank(cfg)

    report = Report()
    for key in sorted(data, key=order):
        values, src = data[key]
        if not values:
            continue
        report.summaries.append(SummaryRow(*key, summarize(values), src))

    a_cfg, b_cfg = compare
    pairs = sorted({(p, s) for p, s, _ in data}, key=lambda ps: (ps[0], TABLE_SECTION_ORDER.index(ps[1])))
    for piece, section in pairs:
        a = data.get((piece, section, a_cfg), ([], ()))[0]
        b = data.get((piece, section, b_cfg), ([], ()))[0]
        if len(a) >= 2 and len(b) >= 2:
            report.tests.append(TestRow(piece, section, a_cfg, b_cfg, welch_t_test(a, b, equal_var)))
    return report
