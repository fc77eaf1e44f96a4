"""Command-line front end: synth, mix, analyze, evaluate, report.

Failures print one JSON line ``{"error": <kind>, "message": <text>}`` to
stderr. Exit status is 2 for usage errors and missing inputs, 1 for
processing failures.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict
from pathlib import Path

from . import __version__
from .dispersion import DispersionConfig, Whitening, analyze_unison
from .mfeval import EvalConfig, score
from .mixgen import (
    choir_mix,
    companion_truth,
    enumerate_quartets,
    load_manifest,
    load_truths,
    render_mix,
    section_anchors,
)
from .sections import SATB, Section
from .signal_io import load_f0_track, load_multif0, load_wav, write_f0_track, write_multif0, write_wav
from .spectral import StftConfig, stft
from .stats import report_tables
from .synth import UnisonSpec, synth_ensemble

logger = logging.getLogger("choirf0")

WORKERS_ENV = "CHOIRF0_WORKERS"
DISPERSION_COLUMNS = ("section", "time", "anchor_hz", "mean_f0_hz", "b1_hz", "b2_hz",
                      "dispersion_cents", "merged", "skipped_reason")


class CliError(Exception):
    def __init__(self, kind: str, message: str, code: int = 1):
        super().__init__(message)
        self.kind = kind
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError("usage", f"{self.prog}: {message}", code=2)


def _default_workers() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def _require(path: str | Path) -> Path:
    p = Path(path)
    if not p.exists():
        raise CliError("missing_input", f"no such file or directory: {p}", code=2)
    return p


def _jsonable(obj):
    if isinstance(obj, float):
        if math.isnan(obj):
            return None
        if math.isinf(obj):
            return "inf" if obj > 0 else "-inf"
        return obj
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, Path):
        return str(obj)
    if hasattr(obj, "value") and isinstance(obj.value, str):
        return obj.value
    return obj


def _dump_json(doc, path: Path | None = None) -> str:
    text = json.dumps(_jsonable(doc), indent=2, ensure_ascii=False) + "\n"
    if path is not None:
        path.write_text(text, encoding="utf-8")
    return text


def _csv_cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        return repr(v)
    return str(v)


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------

def _parse_synth_doc(doc: dict) -> tuple[dict[Section, UnisonSpec], int | None]:
    seed = doc.get("seed")
    if "sections" in doc:
        sections = {Section.parse(k): UnisonSpec.from_dict(v) for k, v in doc["sections"].items()}
    else:
        body = {k: v for k, v in doc.items() if k not in ("seed", "section")}
        sections = {Section.parse(doc.get("section", "soprano")): UnisonSpec.from_dict(body)}
    return sections, seed


def cmd_synth(args) -> dict:
    spec_path = _require(args.spec)
    with open(spec_path, encoding="utf-8") as fh:
        sections, doc_seed = _parse_synth_doc(json.load(fh))
    seed = args.seed if args.seed is not None else (doc_seed if doc_seed is not None else 0)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    render = synth_ensemble(sections, seed=seed, hop_size=args.hop_size)
    clipped = write_wav(render.clip, out / "mix.wav")
    write_multif0(render.truth, out / "mix_ref.csv")
    files = ["mix.wav", "mix_ref.csv"]
    for section, tracks in render.tracks.items():
        for i, tr in enumerate(tracks, start=1):
            name = f"singer_{section.value}_{i}.csv"
            write_f0_track(tr, out / name)
            files.append(name)
        name = f"anchor_{section.value}.csv"
        write_f0_track(render.anchors[section], out / name)
        files.append(name)
    return {"command": "synth", "seed": seed, "out": str(out), "files": files,
            "clipped_samples": clipped,
            "voiced_frames": {s.value: int(a.voiced.sum()) for s, a in render.anchors.items()}}


def _mix_job(manifest, truths, spec, out: Path) -> dict:
    clip = render_mix(manifest, spec)
    clipped = write_wav(clip, out / f"{spec.name}.wav")
    write_multif0(companion_truth(truths, spec), out / f"{spec.name}_ref.csv")
    for section, anchor in section_anchors(truths, spec).items():
        write_f0_track(anchor, out / f"{spec.name}_anchor_{section.value}.csv")
    return {"name": spec.name, "peak": clip.peak, "clipped_samples": clipped}


def cmd_mix(args) -> dict:
    manifest = load_manifest(_require(args.manifest))
    truths = load_truths(manifest)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    specs = enumerate_quartets(manifest)
    if args.choir:
        specs.append(choir_mix(manifest))
    with ThreadPoolExecutor(max_workers=args.workers) as pool:
        results = list(pool.map(lambda s: _mix_job(manifest, truths, s, out), specs))
    return {"command": "mix", "piece": manifest.piece, "out": str(out),
            "n_quartets": sum(1 for s in specs if s.is_quartet), "choir": bool(args.choir),
            "mixes": results}


def _stft_config(args) -> StftConfig:
    try:
        return StftConfig(window_size=args.window_size, fft_size=args.fft_size, hop_size=args.hop_size)
    except ValueError as e:
        raise CliError("usage", str(e), code=2) from None


def _disp_config(args) -> DispersionConfig:
    try:
        return DispersionConfig(search_half_width=args.search_cents, db_drop=args.db_drop,
                                whitening=args.whiten, median_envelope_bins=args.median_bins,
                                ref_hz=args.ref_freq)
    except ValueError as e:
        raise CliError("usage", str(e), code=2) from None


def _gather_anchors(args) -> dict[Section, Path]:
    anchors = {}
    if args.anchors_dir:
        d = _require(args.anchors_dir)
        for section in SATB:
            for name in (f"anchor_{section.value}.csv", f"{Path(args.audio).stem}_anchor_{section.value}.csv"):
                if (d / name).exists():
                    anchors[section] = d / name
    for item in args.anchor or []:
        key, sep, path = item.partition("=")
        if not sep:
            raise CliError("usage", f"--anchor expects SECTION=PATH, got {item!r}", code=2)
        try:
            anchors[Section.parse(key)] = _require(path)
        except ValueError as e:
            raise CliError("usage", str(e), code=2) from None
    if not anchors:
        raise CliError("missing_input", "no anchor tracks given (--anchor or --anchors-dir)", code=2)
    return {s: anchors[s] for s in SATB if s in anchors}


def _infer_configuration(stem: str) -> str:
    if stem.startswith("quartet_"):
        return "Q"
    if stem.startswith("choir"):
        return "CM"
    return "unknown"


def cmd_analyze(args) -> dict:
    audio = _require(args.audio)
    anchor_paths = _gather_anchors(args)
    stft_cfg, disp_cfg = _stft_config(args), _disp_config(args)
    clip = load_wav(audio)
    anchors = {s: load_f0_track(p) for s, p in anchor_paths.items()}
    spec = stft(clip, stft_cfg, workers=args.workers)
    tracks = analyze_unison(clip, anchors, stft_cfg, disp_cfg, spectrogram=spec)

    rows = [r for tr in tracks.values() for r in tr.records(disp_cfg.ref_hz)]
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DISPERSION_COLUMNS)
        for r in rows:
            w.writerow([_csv_cell(r[c]) for c in DISPERSION_COLUMNS])

    sections = {}
    for s, tr in tracks.items():
        d = tr.dispersions
        sections[s.value] = {
            "n_estimates": len(tr.estimates),
            "mean_dispersion_cents": float(d.mean()) if d.size else None,
            "skipped": {r.value: n for r, n in sorted(tr.skipped_frames.items(), key=lambda x: x[0].value)},
        }
    meta = {
        "piece": args.piece or audio.stem,
        "configuration": args.configuration or _infer_configuration(audio.stem),
        "audio": audio.name,
        "anchors": {s.value: p.name for s, p in anchor_paths.items()},
        "stft": asdict(stft_cfg),
        "dispersion": asdict(disp_cfg),
        "sections": sections,
    }
    _dump_json({**meta, "records": rows}, out.with_suffix(".json"))
    return {"command": "analyze", "out": str(out), "rows": len(rows), **meta}


def cmd_evaluate(args) -> dict:
    ref = load_multif0(_require(args.ref))
    est = load_multif0(_require(args.est))
    try:
        cfg = EvalConfig(tolerance_cents=args.tolerance_cents)
    except ValueError as e:
        raise CliError("usage", str(e), code=2) from None
    report = score(ref, est, cfg).to_dict()
    if args.out:
        _dump_json(report, Path(args.out))
    return report


def cmd_report(args) -> dict:
    in_dir = _require(args.in_dir)
    groups, sources = {}, {}
    for path in sorted(in_dir.glob("*.json")):
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        if not isinstance(doc, dict) or "records" not in doc:
            continue
        for r in doc["records"]:
            if r.get("dispersion_cents") is None:
                continue
            key = (doc["piece"], r["section"], doc["configuration"])
            groups.setdefault(key, []).append(float(r["dispersion_cents"]))
            if path.name not in sources.setdefault(key, []):
                sources[key].append(path.name)
    if not groups:
        raise CliError("missing_input", f"no analyzed dispersion records in {in_dir}", code=2)
    report = report_tables(groups, sources, equal_var=args.pooled)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    doc = report.to_dict()
    _dump_json(doc, out)
    stem = out.with_suffix("")
    report.write_summary_csv(f"{stem}_summary.csv")
    report.write_tests_csv(f"{stem}_tests.csv")
    report.write_table_csv(f"{stem}_table.csv")
    return {"command": "report", "out": str(out), **doc}


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    common = _Parser(add_help=False)
    common.add_argument("--json", action="store_true", help="print one JSON document on stdout")
    common.add_argument("--workers", type=int, default=_default_workers(),
                        help=f"worker threads (env {WORKERS_ENV})")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="choirf0", description=__doc__.splitlines()[0], formatter_class=fmt)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    stft_d, disp_d, eval_d = StftConfig(), DispersionConfig(), EvalConfig()

    p = sub.add_parser("synth", parents=[common], formatter_class=fmt,
                       help="render synthetic unison sections with known f0")
    p.add_argument("--spec", required=True, help="JSON unison spec, or {'sections': {...}}")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None, help="overrides the seed in the --spec file (else 0)")
    p.add_argument("--hop-size", type=int, default=stft_d.hop_size, help="f0 track hop in samples")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("mix", parents=[common], formatter_class=fmt,
                       help="render every SATB quartet of a stem manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--choir", action="store_true", help="also render the full-choir mix")
    p.set_defaults(func=cmd_mix)

    p = sub.add_parser("analyze", parents=[common], formatter_class=fmt,
                       help="measure per-frame f0 dispersion per section")
    p.add_argument("--audio", required=True)
    p.add_argument("--anchor", action="append", metavar="SECTION=PATH",
                   help="per-section f0 CSV (repeatable)")
    p.add_argument("--anchors-dir", help="directory holding anchor_<section>.csv files")
    p.add_argument("--out", required=True, help="dispersion CSV (a .json twin is written too)")
    p.add_argument("--piece", help="piece label for reports (default: audio file stem)")
    p.add_argument("--configuration", help="Q, CM, ... (default: inferred from file name)")
    p.add_argument("--window-size", type=int, default=stft_d.window_size, help="Hann window length")
    p.add_argument("--fft-size", type=int, default=stft_d.fft_size, help="zero-padded FFT length")
    p.add_argument("--hop-size", type=int, default=stft_d.hop_size, help="STFT hop in samples")
    p.add_argument("--search-cents", type=float, default=disp_d.search_half_width,
                   help="peak search half-width around the anchor")
    p.add_argument("--db-drop", type=float, default=disp_d.db_drop, help="bandwidth level below the peak (dB)")
    p.add_argument("--whiten", choices=[w.value for w in Whitening], default=disp_d.whitening.value,
                   help="spectral envelope flattening before peak measurement")
    p.add_argument("--median-bins", type=int, default=disp_d.median_envelope_bins,
                   help="median envelope length for --whiten median")
    p.add_argument("--ref-freq", type=float, default=disp_d.ref_hz,
                   help="cents reference frequency (Hz)")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("evaluate", parents=[common], formatter_class=fmt,
                       help="multi-f0 metrics of an estimate against a reference")
    p.add_argument("--ref", required=True)
    p.add_argument("--est", required=True)
    p.add_argument("--tolerance-cents", type=float, default=eval_d.tolerance_cents,
                   help="match tolerance")
    p.add_argument("--out", help="also write the JSON report here")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", parents=[common], formatter_class=fmt,
                       help="summaries and quartet-vs-choir tests over analyzed files")
    p.add_argument("--in", dest="in_dir", required=True, help="directory of analyze outputs")
    p.add_argument("--out", required=True, help="report JSON; CSV tables are written beside it")
    p.add_argument("--pooled", action="store_true", help="pooled-variance t test instead of Welch")
    p.set_defaults(func=cmd_report)
    return parser


def _print_human(doc: dict) -> None:
    cmd = doc.get("command")
    if cmd == "synth":
        print(f"wrote {len(doc['files'])} files to {doc['out']} (seed {doc['seed']})")
    elif cmd == "mix":
        extra = " + choir mix" if doc["choir"] else ""
        print(f"wrote {doc['n_quartets']} quartets{extra} to {doc['out']}")
    elif cmd == "analyze":
        print(f"wrote {doc['rows']} rows to {doc['out']}")
        for name, s in doc["sections"].items():
            mean = s["mean_dispersion_cents"]
            mean_s = "-" if mean is None else f"{mean:.1f}"
            print(f"  {name:8s} n={s['n_estimates']:5d}  mean dispersion {mean_s} cents  skipped {s['skipped']}")
    elif cmd == "report":
        print(f"wrote {doc['out']} ({len(doc['summaries'])} groups, {len(doc['tests'])} tests)")
    else:
        sys.stdout.write(_dump_json(doc))


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        if args.workers < 1:
            raise CliError("usage", "--workers must be >= 1", code=2)
        doc = args.func(args)
    except CliError as e:
        print(json.dumps({"error": e.kind, "message": str(e)}), file=sys.stderr)
        return e.code
    except FileNotFoundError as e:
        print(json.dumps({"error": "missing_input", "message": str(e)}), file=sys.stderr)
        return 2
    except Exception as e:  # noqa: BLE001 - reported as a processing failure
        logger.debug("failure", exc_info=True)
        msg = " ".join(str(e).split())
        print(json.dumps({"error": type(e).__name__, "message": msg}), file=sys.stderr)
        return 1
    if args.json or args.command == "evaluate":
        sys.stdout.write(_dump_json(doc))
    else:
        _print_human(doc)
    return 0


if __name__ == "__main__":
    sys.exit(main())
