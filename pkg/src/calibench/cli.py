"""Command-line entry point.

Exit codes: 0 success, 1 partial failure (some subgroups failed),
2 configuration or input error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from importlib import resources
from pathlib import Path

from . import __version__, kernels
from .analysis import (
    ScoreMatrix,
    build_boards,
    centroid_diagnostics,
    drift_summary,
    stability,
    write_board_csv,
    write_diagnostics_csv,
)
from .calibration import CalibrationError
from .config import ConfigError, load_config
from .dataset import (
    CsvSchema,
    DatasetError,
    attach_labels,
    chronological_split,
    ingest_csv,
    load_dataset,
    load_label_document,
    parse_timestamp,
)
from .detectors import DetectorError
from .likelihood import LikelihoodError
from .nab import score_raw
from . import pipeline

EXIT_OK, EXIT_PARTIAL, EXIT_INPUT = 0, 1, 2

INPUT_ERRORS = (ConfigError, DatasetError, DetectorError, CalibrationError, LikelihoodError,
                FileNotFoundError, ValueError)


def bundled(name: str) -> Path:
    return Path(str(resources.files("calibench") / "data" / name))


def _config(args):
    path = bundled("minicorpus.yaml") if args.config == "demo" else args.config
    cfg = load_config(path)
    if getattr(args, "out", None):
        cfg = replace(cfg, output_dir=Path(args.out))
    elif args.config == "demo":
        cfg = replace(cfg, output_dir=Path("calibench-out"))
    if getattr(args, "workers", None):
        cfg = replace(cfg, workers=args.workers)
    return cfg


def cmd_validate(args) -> int:
    cfg = _config(args)
    n = 0
    for ds in cfg.datasets:
        labels = load_label_document(ds.labels) if ds.labels else None
        data = load_dataset(ds.name, ds.root, ds.schema, labels, ds.label_expansion)
        for sg in data.subgroups:
            for f in sg.files:
                chronological_split(f, cfg.split)
                n += 1
            print(f"{ds.name}/{sg.name}: {len(sg.files)} file(s)")
    print(f"ok: {n} files, {len(cfg.detectors)} detector(s), config {cfg.hash[:12]}")
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = _config(args)
    manifest = pipeline.run(cfg)
    print(f"{len(manifest.subgroups)} subgroup(s), {manifest.recomputed} job(s) computed, "
          f"output in {cfg.output_dir}")
    for key in manifest.failed:
        for det, v in manifest.subgroups[key]["detectors"].items():
            if v["status"] != "ok":
                print(f"FAILED {key} [{det}]: {v['error']}", file=sys.stderr)
    return EXIT_PARTIAL if manifest.failed else EXIT_OK


def cmd_report(args) -> int:
    text = pipeline.report(args.out_dir)
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _matrix(path) -> ScoreMatrix:
    return ScoreMatrix.from_csv(bundled("reference_scores.csv") if path == "reference" else path)


def cmd_board(args) -> int:
    m = _matrix(args.scores)
    if args.drop:
        m = m.drop_detector(args.drop)
    boards = build_boards(m)
    if args.csv:
        write_board_csv(args.csv, boards)
    if args.json:
        print(json.dumps({k: b.to_dict() for k, b in boards.items()}, indent=2))
        return EXIT_OK
    b = boards[args.board]
    cols = [f"rank_{r}" for r in range(1, b.max_rank + 1)] + ["tie", "no_detection"]
    print(f"{'detector':<20}" + "".join(f"{c:>14}" for c in cols))
    for row in b.rows():
        print(f"{row['detector']:<20}" + "".join(f"{row[c]:>14}" for c in cols))
    return EXIT_OK


def cmd_stability(args) -> int:
    m = _matrix(args.scores)
    out = {"overall": stability(m).to_dict()}
    for ds in m.datasets():
        out[ds] = stability(m.restrict(ds)).to_dict()
    print(json.dumps(out, indent=2))
    return EXIT_OK


def _schema(args) -> CsvSchema:
    cols = tuple(args.columns.split(",")) if args.columns else None
    return CsvSchema(args.timestamp_column, cols, args.timestamp_format, args.label_column)


def _load_file(args):
    f = ingest_csv(args.series, _schema(args), file_id=Path(args.series).name)
    if args.labels:
        doc = load_label_document(args.labels)
        raw = doc.get(args.label_key or f.id)
        if raw is None:
            raise DatasetError(f"no labels for {args.label_key or f.id} in {args.labels}")
        f = attach_labels(f, raw)
    return f


def cmd_drift(args) -> int:
    f = _load_file(args)
    diag = centroid_diagnostics(f, chronological_split(f), args.log_scale)
    if args.csv:
        write_diagnostics_csv(args.csv, diag)
    print(json.dumps(drift_summary(diag), indent=2))
    return EXIT_OK


def cmd_score(args) -> int:
    f = _load_file(args)
    det = ingest_csv(args.detections, CsvSchema(args.timestamp_column, ("detection",),
                                                 args.timestamp_format))
    hits = {int(t) for t, v in zip(det.timestamps, det.values[:, 0]) if v != 0}
    unknown = hits - set(int(t) for t in f.timestamps)
    if unknown:
        raise DatasetError(f"{len(unknown)} detection timestamps are not in the series")
    flags = [int(t) in hits for t in f.timestamps]
    lo = parse_timestamp(args.start, args.timestamp_format) if args.start else None
    ts = f.timestamps
    if lo is not None:
        keep = ts >= lo
        ts, flags = ts[keep], [x for x, k in zip(flags, keep) if k]
    truth = f.labels.restrict(int(ts[0]), int(ts[-1]))
    print(score_raw(flags, truth, ts, timestamp_format=args.timestamp_format).to_json())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="calibench", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version",
                   version=f"calibench {__version__} ({kernels.BACKEND} kernels)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def config_cmd(name, fn, help_):
        s = sub.add_parser(name, help=help_)
        s.add_argument("config", help="YAML run config, or 'demo' for the bundled mini corpus")
        s.add_argument("--out", help="override output_dir")
        s.set_defaults(fn=fn)
        return s

    config_cmd("validate", cmd_validate, "check a config and its inputs without running")
    s = config_cmd("run", cmd_run, "detect, calibrate, evaluate and analyze")
    s.add_argument("--workers", type=int)

    s = sub.add_parser("report", help="render result tables from a run directory")
    s.add_argument("out_dir")
    s.add_argument("-o", "--output")
    s.set_defaults(fn=cmd_report)

    for name, fn, help_ in (("board", cmd_board, "rank board from a score matrix CSV"),
                            ("stability", cmd_stability, "score spread per dataset")):
        s = sub.add_parser(name, help=help_)
        s.add_argument("scores", help="score matrix CSV, or 'reference' for the bundled one")
        s.set_defaults(fn=fn)
    board = sub.choices["board"]
    board.add_argument("--board", default="overall")
    board.add_argument("--drop", help="leave one detector out")
    board.add_argument("--json", action="store_true")
    board.add_argument("--csv")

    def series_cmd(name, fn, help_):
        s = sub.add_parser(name, help=help_)
        s.add_argument("series")
        s.add_argument("--labels")
        s.add_argument("--label-key")
        s.add_argument("--timestamp-column", default="timestamp")
        s.add_argument("--timestamp-format", choices=("iso", "epoch"), default="iso")
        s.add_argument("--columns")
        s.add_argument("--label-column")
        s.set_defaults(fn=fn)
        return s

    s = series_cmd("drift", cmd_drift, "centroid-distance drift of one series")
    s.add_argument("--log-scale", action="store_true")
    s.add_argument("--csv")
    s = series_cmd("score", cmd_score, "NAB-score a detection CSV against labels")
    s.add_argument("detections", help="CSV with timestamp and detection (0/1) columns")
    s.add_argument("--start", help="score from this timestamp on")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except INPUT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
