"""End-to-end runs: ingest, split, detect, calibrate, evaluate, analyze, report."""

from __future__ import annotations

import csv
import fnmatch
import hashlib
import json
import logging
import shutil
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .analysis import (
    ScoreMatrix,
    SubgroupScores,
    build_boards,
    centroid_diagnostics,
    drift_summary,
    stability,
    write_board_csv,
    write_diagnostics_csv,
)
from .calibration import CalibrationItem, CalibrationResult, calibrate_items, evaluate_test
from .config import ConfigError, DetectorConfig, RunConfig, derive_seed
from .dataset import (
    SeriesFile,
    apply_normalizer,
    chronological_split,
    fit_normalizer,
    format_timestamp,
    load_dataset,
    load_label_document,
)
from .detectors import (
    fit_isolation_forest,
    fit_pca,
    import_error_series,
    pca_error,
    rolling_predictor_error,
    score_isolation_forest,
)
from .nab import score_subgroup

log = logging.getLogger(__name__)

MANIFEST = "manifest.json"
TIMINGS = "timings.csv"


@dataclass
class RunManifest:
    config_hash: str
    versions: dict
    subgroups: dict
    artifacts: list
    timings: list = field(default_factory=list)
    recomputed: int = 0

    def to_dict(self) -> dict:
        # wall-clock timings live in timings.csv so this stays byte-stable
        return {
            "config_hash": self.config_hash,
            "versions": self.versions,
            "subgroups": self.subgroups,
            "artifacts": self.artifacts,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @property
    def hash(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()

    @property
    def failed(self) -> list[str]:
        return [k for k, v in self.subgroups.items() if v["status"] != "ok"]

    @classmethod
    def load(cls, out_dir) -> "RunManifest":
        d = json.loads((Path(out_dir) / MANIFEST).read_text())
        return cls(d["config_hash"], d["versions"], d["subgroups"], d["artifacts"])


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# per (subgroup, detector) job


@dataclass(frozen=True)
class Job:
    dataset: str
    subgroup: str
    detector: DetectorConfig
    files: tuple[SeriesFile, ...]
    config: RunConfig

    @property
    def key(self) -> str:
        return f"{self.dataset}/{self.subgroup}"

    @property
    def rel_dir(self) -> Path:
        return Path(self.dataset) / self.subgroup / self.detector.id


def compute_errors(det: DetectorConfig, file: SeriesFile, normed: SeriesFile, view, seed: int):
    o = det.options
    if det.type == "isolation_forest":
        model = fit_isolation_forest(normed, view, o["tree_count"], o["subsample_size"], seed)
        return score_isolation_forest(model, normed, det.id)
    if det.type == "pca":
        model = fit_pca(normed, view, o["retained_variance"], seed)
        return pca_error(model, normed, det.id)
    if det.type == "rolling_predictor":
        return rolling_predictor_error(normed, o["window"], det.id)
    if det.type == "import":
        sub, name = file.id.split("/", 1) if "/" in file.id else ("", file.id)
        path = o["path"].format(subgroup=sub, file=name, stem=Path(name).stem)
        return import_error_series(path, file, det.id)
    raise ConfigError(f"unknown detector type {det.type}")


def run_job(job: Job) -> dict:
    cfg, det = job.config, job.detector
    out = cfg.output_dir / job.rel_dir
    tmp = out.with_name(out.name + ".partial")
    shutil.rmtree(tmp, ignore_errors=True)
    timings = {}
    try:
        tmp.mkdir(parents=True)
        t0 = time.perf_counter()
        views, errors = [], []
        for f in job.files:
            view = chronological_split(f, cfg.split)
            normed = apply_normalizer(f, fit_normalizer(f, view))
            seed = derive_seed(cfg.seed, job.dataset, job.subgroup, det.id, "fit", f.id)
            views.append(view)
            errors.append(compute_errors(det, f, normed, view, seed))
        timings["detect"] = time.perf_counter() - t0
        with open(tmp / "errors.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["file", "timestamp", "error"])
            for f, e in zip(job.files, errors):
                for t, v in zip(f.timestamps, e.values):
                    if not np.isnan(v):
                        w.writerow([f.id, format_timestamp(t, f.timestamp_format), repr(float(v))])

        t0 = time.perf_counter()
        items = [CalibrationItem.of(e, f.labels, f.timestamps, v)
                 for f, e, v in zip(job.files, errors, views)]
        space = replace(cfg.search, seed=derive_seed(cfg.seed, job.dataset, job.subgroup,
                                                      det.id, "calibrate"))
        result = calibrate_items(items, space, cfg.profile)
        (tmp / "calibration.json").write_text(result.to_json() + "\n")
        timings["calibrate"] = time.perf_counter() - t0

        t0 = time.perf_counter()
        reports = [evaluate_test(e, f.labels, f.timestamps, v, result.best, cfg.profile,
                                 f.timestamp_format)
                   for f, e, v in zip(job.files, errors, views)]
        score = score_subgroup(reports, cfg.profile)
        gt = sum(r.window_count for r in reports)
        _write_json(tmp / "test_report.json", {
            "dataset": job.dataset,
            "subgroup": job.subgroup,
            "detector": det.id,
            "params": result.best.to_dict(),
            "subgroup_score": score,
            "gt": gt,
            "files": {f.id: r.to_dict() for f, r in zip(job.files, reports)},
        })
        with open(tmp / "windows.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["file", "start", "end", "earliest_detection", "credit"])
            for f, r in zip(job.files, reports):
                for row in r.per_window:
                    w.writerow([f.id, row["start"], row["end"],
                                row["earliest_detection"] or "", row["credit"]])
        timings["evaluate"] = time.perf_counter() - t0

        shutil.rmtree(out, ignore_errors=True)
        tmp.rename(out)
        return {"status": "ok", "error": None, "timings": timings}
    except Exception as exc:  # noqa: BLE001 -- recorded per subgroup, run continues
        shutil.rmtree(tmp, ignore_errors=True)
        shutil.rmtree(out, ignore_errors=True)
        log.warning("%s/%s failed: %s", job.key, det.id, exc)
        return {"status": "failed", "error": f"{type(exc).__name__}: {exc}", "timings": timings}


# ---------------------------------------------------------------------------
# orchestration


def _selected(key: str, cfg: RunConfig) -> bool:
    if cfg.include is not None and not any(fnmatch.fnmatch(key, p) for p in cfg.include):
        return False
    return not any(fnmatch.fnmatch(key, p) for p in cfg.exclude)


def _load_subgroups(cfg: RunConfig):
    out = []
    for ds in cfg.datasets:
        labels = load_label_document(ds.labels) if ds.labels else None
        data = load_dataset(ds.name, ds.root, ds.schema, labels, ds.label_expansion)
        for sg in data.subgroups:
            if _selected(f"{ds.name}/{sg.name}", cfg):
                out.append((ds.name, sg))
    return out


def _prune_empty_dirs(root: Path) -> None:
    for d in sorted((p for p in root.rglob("*") if p.is_dir()), key=lambda p: -len(p.parts)):
        if not any(d.iterdir()):
            d.rmdir()


def _list_artifacts(out_dir: Path) -> list[str]:
    return sorted(str(p.relative_to(out_dir)) for p in out_dir.rglob("*")
                  if p.is_file() and p.name != MANIFEST)


def _analysis(cfg: RunConfig, subgroups, statuses) -> None:
    out = cfg.output_dir
    adir = out / "analysis"
    adir.mkdir(parents=True, exist_ok=True)
    det_ids = [d.id for d in cfg.detectors]
    matrix = ScoreMatrix(det_ids)
    for ds, sg in subgroups:
        key = f"{ds}/{sg.name}"
        if statuses[key]["status"] != "ok":
            continue
        scores, gt = {}, 0
        for d in det_ids:
            rep = json.loads((out / ds / sg.name / d / "test_report.json").read_text())
            scores[d] = rep["subgroup_score"]
            gt = rep["gt"]
        matrix.rows.append(SubgroupScores(ds, sg.name, scores, gt))

        ddir = out / ds / sg.name / "drift"
        ddir.mkdir(parents=True, exist_ok=True)
        summaries = {}
        for f in sg.files:
            diag = centroid_diagnostics(f, chronological_split(f, cfg.split), cfg.drift_log_scale)
            write_diagnostics_csv(ddir / f"{Path(f.id).stem}.csv", diag)
            summaries[f.id] = drift_summary(diag)
        _write_json(ddir / "summary.json", summaries)

    matrix.to_csv(adir / "score_matrix.csv")
    if len(det_ids) >= 2 and matrix.rows:
        boards = build_boards(matrix)
        _write_json(adir / "board.json", {k: b.to_dict() for k, b in boards.items()})
        write_board_csv(adir / "board.csv", boards)
    stab = {}
    for name in ["overall", *matrix.datasets()]:
        sub = matrix if name == "overall" else matrix.restrict(name)
        if len(sub.cells()) >= 2:
            stab[name] = stability(sub).to_dict()
    _write_json(adir / "stability.json", stab)


def run(cfg: RunConfig) -> RunManifest:
    """Execute (or resume) a run; returns the manifest written to the output dir."""
    out = cfg.output_dir
    subgroups = _load_subgroups(cfg)
    if not subgroups:
        raise ConfigError("filters select no subgroups")

    previous = None
    if (out / MANIFEST).exists():
        try:
            previous = RunManifest.load(out)
        except (OSError, ValueError, KeyError):
            previous = None
        if previous is not None and previous.config_hash != cfg.hash:
            for rel in previous.artifacts:
                (out / rel).unlink(missing_ok=True)
            _prune_empty_dirs(out)
            previous = None
    out.mkdir(parents=True, exist_ok=True)

    jobs, carried = [], {}
    for ds, sg in subgroups:
        key = f"{ds}/{sg.name}"
        for det in cfg.detectors:
            old = previous.subgroups.get(key, {}).get("detectors", {}).get(det.id) if previous else None
            rel = Path(ds) / sg.name / det.id
            done = old and old["status"] == "ok" and all(
                (out / rel / a).exists() for a in ("errors.csv", "calibration.json", "test_report.json"))
            if done:
                carried[(key, det.id)] = old
            else:
                jobs.append(Job(ds, sg.name, det, sg.files, cfg))

    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(run_job, jobs))
    else:
        results = [run_job(j) for j in jobs]

    timings = []
    fresh = {}
    for job, res in zip(jobs, results):
        fresh[(job.key, job.detector.id)] = {"status": res["status"], "error": res["error"]}
        for stage, secs in res["timings"].items():
            timings.append((job.key, job.detector.id, stage, secs))

    statuses = {}
    for ds, sg in subgroups:
        key = f"{ds}/{sg.name}"
        dets = {}
        for det in cfg.detectors:
            dets[det.id] = fresh.get((key, det.id)) or carried[(key, det.id)]
        ok = all(v["status"] == "ok" for v in dets.values())
        statuses[key] = {"status": "ok" if ok else "failed", "detectors": dets}

    analysis_done = all((out / "analysis" / a).exists()
                        for a in ("score_matrix.csv", "stability.json"))
    if jobs or not analysis_done:
        t0 = time.perf_counter()
        _analysis(cfg, subgroups, statuses)
        timings.append(("analysis", "", "analysis", time.perf_counter() - t0))

    with open(out / TIMINGS, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["subgroup", "detector", "stage", "seconds"])
        w.writerows(timings)

    manifest = RunManifest(
        config_hash=cfg.hash,
        versions={"calibench": __version__, "numpy": np.__version__, "kernels": kernels.BACKEND},
        subgroups=statuses,
        artifacts=_list_artifacts(out),
        timings=timings,
        recomputed=len(jobs),
    )
    (out / MANIFEST).write_text(manifest.to_json())
    return manifest


# ---------------------------------------------------------------------------
# reporting


def _fmt_score(x: float) -> str:
    return f"{x:.2f}"


def report(out_dir) -> str:
    """Best detector and parameters per subgroup, then the per-detector score matrix."""
    out = Path(out_dir)
    if not (out / MANIFEST).exists():
        raise FileNotFoundError(f"no {MANIFEST} in {out}")
    manifest = RunManifest.load(out)
    missing = [a for a in manifest.artifacts if not (out / a).exists()]
    if missing:
        raise FileNotFoundError(f"missing artifacts: {missing[:5]}")
    matrix = ScoreMatrix.from_csv(out / "analysis" / "score_matrix.csv")
    dets = matrix.detectors

    lines = ["Subgroup results (test split)", ""]
    header = f"{'dataset':<12} {'subgroup':<24} {'W':>5} {'Wp':>4} {'thr':>7} {'best':>10}  model"
    lines += [header, "-" * len(header)]
    for row in matrix.rows:
        s = {d: round(row.scores[d], 2) + 0.0 for d in dets}
        top = max(s.values())
        best = [d for d in dets if s[d] == top]
        score_txt = _fmt_score(top)
        if len(best) == len(dets):
            model, w = "ALL", ("---", "---", "---")
            if top == 0.0 and row.gt == 0:
                score_txt += "†"
                model += " (correct non-detection)"
            elif top == 0.0:
                model += " (no detection)"
        else:
            cal = CalibrationResult.from_dict(json.loads(
                (out / row.dataset / row.subgroup / best[0] / "calibration.json").read_text()))
            w = (str(cal.best.long_window), str(cal.best.short_window), f"{cal.best.threshold:.4f}")
            model = " / ".join(best)
            if top == 0.0:
                model += " (least penalized)"
        lines.append(f"{row.dataset:<12} {row.subgroup:<24} {w[0]:>5} {w[1]:>4} {w[2]:>7} "
                     f"{score_txt:>10}  {model}")
    lines += ["", "† zero ground-truth windows in the test split; no detections is correct.", ""]

    lines += ["Per-detector normalized NAB scores (test split)", ""]
    header = f"{'dataset':<12} {'subgroup':<24} " + " ".join(f"{d:>14}" for d in dets)
    lines += [header, "-" * len(header)]
    for row in matrix.rows:
        lines.append(f"{row.dataset:<12} {row.subgroup:<24} "
                     + " ".join(f"{_fmt_score(row.scores[d]):>14}" for d in dets))
    failed = manifest.failed
    if failed:
        lines += ["", "Failed subgroups:"]
        for k in failed:
            for d, v in manifest.subgroups[k]["detectors"].items():
                if v["status"] != "ok":
                    lines.append(f"  {k} [{d}]: {v['error']}")
    return "\n".join(lines) + "\n"
