"""Replicated experiment runs, artifacts, resume and alpha sweeps."""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from . import plyio
from .config import ExperimentConfig, dump_config, from_dict
from .explorer import CSV_COLUMNS, Exploration, PerceptionCache

log = logging.getLogger(__name__)

SUMMARY_FIELDS = ("precision", "recall", "accuracy", "n0", "n1", "K0", "K1", "mislabels")
CHECKPOINT_KIND = "cmm-exploration"


def _fmt(v):
    if isinstance(v, float):
        return "NA" if math.isnan(v) else repr(v)
    return str(v)


def _parse(v):
    if v == "NA":
        return float("nan")
    for kind in (int, float):
        try:
            return kind(v)
        except ValueError:
            pass
    return v


def write_rows(path, rows, columns=CSV_COLUMNS):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in columns])


def read_rows(path) -> list:
    with open(path, newline="") as fh:
        return [{k: _parse(v) for k, v in r.items()} for r in csv.DictReader(fh)]


def rep_paths(run_dir: Path, rep: int) -> dict:
    tag = f"rep{rep:03d}"
    return {
        "csv": run_dir / f"{tag}.csv",
        "checkpoint": run_dir / f"{tag}.checkpoint.json",
        "relevance": run_dir / f"{tag}.relevance.ply",
        "choice": run_dir / f"{tag}.mean-choice.ply",
    }


def new_run_dir(cfg: ExperimentConfig) -> Path:
    stamp = time.strftime("%Y%m%d-%H%M%S")
    base = Path(cfg.output_dir) / f"{cfg.name}-{stamp}"
    path, k = base, 1
    while path.exists():
        path = base.with_name(f"{base.name}-{k}")
        k += 1
    return path


def _save_checkpoint(path: Path, cfg: ExperimentConfig, rep: int, ex: Exploration):
    tmp = path.with_suffix(".tmp")
    tmp.write_text(json.dumps({"kind": CHECKPOINT_KIND, "replication": rep,
                               "config": cfg.to_dict(), "state": ex.state_dict()}))
    tmp.replace(path)


def load_checkpoint(path):
    """Config, replication index and exploration state stored in a checkpoint file."""
    data = json.loads(Path(path).read_text())
    if data.get("kind") != CHECKPOINT_KIND:
        raise ValueError(f"{path}: not an exploration checkpoint")
    return from_dict(data["config"]), data["replication"], data["state"]


def make_exploration(cfg: ExperimentConfig, rep: int, cache=None) -> Exploration:
    return Exploration(cfg.scene, cfg.supervoxel, cfg.effective_cmm(), cfg.explorer,
                       cfg.master_seed, rep, cfg.scene_pool, cache)


def run_replication(cfg: ExperimentConfig, run_dir: Path, rep: int, cache=None) -> list:
    """Run (or resume) one replication and write its files; returns its CSV rows."""
    paths = rep_paths(run_dir, rep)
    ex = make_exploration(cfg, rep, cache)
    if paths["checkpoint"].exists():
        _, _, state = load_checkpoint(paths["checkpoint"])
        ex.load_state(state)
        log.info("replication %d resumed at iteration %d", rep, ex.iteration)

    def tick(e, _):
        if e.iteration % cfg.checkpoint_every == 0 and e.iteration < cfg.budget:
            _save_checkpoint(paths["checkpoint"], cfg, rep, e)

    ex.run(cfg.budget, tick)
    write_rows(paths["csv"], ex.rows)
    _save_checkpoint(paths["checkpoint"], cfg, rep, ex)
    ev = ex.eval_perception
    labels = ev.segmentation.labels
    plyio.write_point_map(paths["relevance"], ev.cloud, labels, ex.clf.predict_proba(ev.features))
    mean_choice = ex.mean_choice()
    if mean_choice is not None:
        # max-normalized so the most explored region is red
        plyio.write_point_map(paths["choice"], ev.cloud, labels, mean_choice / mean_choice.max(),
                              colors=plyio.BLUE_RED)
    return ex.rows


def _worker(args):
    cfg_dict, run_dir, rep = args
    return run_replication(from_dict(cfg_dict), Path(run_dir), rep, PerceptionCache())


def summarize(rows_per_rep) -> list:
    """Per-iteration mean and standard deviation of every metric across replications."""
    n = min(len(r) for r in rows_per_rep)
    out = []
    for i in range(n):
        row = {"iter": rows_per_rep[0][i]["iter"], "replications": len(rows_per_rep)}
        for f in SUMMARY_FIELDS:
            vals = np.array([r[i][f] for r in rows_per_rep], dtype=float)
            ok = vals[~np.isnan(vals)]
            row[f"{f}_mean"] = float(ok.mean()) if ok.size else float("nan")
            row[f"{f}_std"] = float(ok.std()) if ok.size else float("nan")
        out.append(row)
    return out


SUMMARY_COLUMNS = ("iter", "replications") + tuple(
    f"{f}_{s}" for f in SUMMARY_FIELDS for s in ("mean", "std"))


def write_summary(run_dir: Path, summary: list):
    write_rows(run_dir / "summary.csv", summary, SUMMARY_COLUMNS)
    # whitespace-separated copy for gnuplot: "plot 'summary.dat' using 1:7"
    with open(run_dir / "summary.dat", "w") as fh:
        fh.write("# " + " ".join(SUMMARY_COLUMNS) + "\n")
        for r in summary:
            fh.write(" ".join(_fmt(r[c]).replace("NA", "nan") for c in SUMMARY_COLUMNS) + "\n")


def run(cfg: ExperimentConfig, run_dir=None, plots: bool = True, cache=None) -> Path:
    """Run every replication of ``cfg`` and write all artifacts under one directory.

    Passing the directory of an interrupted run resumes it from its checkpoints.
    """
    cfg.validate()
    run_dir = Path(run_dir) if run_dir is not None else new_run_dir(cfg)
    run_dir.mkdir(parents=True, exist_ok=True)
    cfg_file = run_dir / "config.yaml"
    if cfg_file.exists():
        previous = from_dict(yaml.safe_load(cfg_file.read_text()))
        if previous.to_dict() != cfg.to_dict():
            raise ValueError(f"{run_dir} holds a run with a different configuration")
    else:
        cfg_file.write_text(dump_config(cfg))

    reps = range(cfg.replications)
    if cfg.workers > 1 and cfg.replications > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_worker, [(cfg.to_dict(), str(run_dir), r) for r in reps]))
    else:
        cache = cache if cache is not None else PerceptionCache()
        results = [run_replication(cfg, run_dir, r, cache) for r in reps]

    write_summary(run_dir, summarize(results))
    if plots:
        from .report import render_run
        render_run(run_dir)
    return run_dir


def final_scores(run_dir) -> dict:
    """Mean and std over replications of the last-iteration metrics of a run."""
    run_dir = Path(run_dir)
    rows = [read_rows(p)[-1] for p in sorted(run_dir.glob("rep*.csv"))]
    out = {"replications": len(rows)}
    for f in ("accuracy", "precision", "recall"):
        vals = np.array([r[f] for r in rows], dtype=float)
        out[f"{f}_mean"] = float(np.nanmean(vals))
        out[f"{f}_std"] = float(np.nanstd(vals))
    return out


SWEEP_COLUMNS = ("alpha", "replications", "accuracy_mean", "accuracy_std", "precision_mean",
                 "precision_std", "recall_mean", "recall_std", "run_dir")


def sweep_alpha(cfg: ExperimentConfig, values=None, out_dir=None, plots: bool = True, cache=None):
    """Run the experiment once per alpha value; returns ``(sweep_dir, rows)``."""
    values = list(cfg.alpha_sweep if values is None else values)
    if not values:
        raise ValueError("alpha sweep needs at least one value")
    for a in values:
        if not 0 < a <= 1:
            raise ValueError(f"alpha {a} must be in (0, 1]")
    if out_dir is None:
        base = new_run_dir(cfg)
        out_dir = base.with_name(base.name + "-alpha-sweep")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cache = cache if cache is not None else PerceptionCache()
    rows = []
    for a in values:
        sub = from_dict(cfg.to_dict())
        sub.cmm.alpha = float(a)
        d = run(sub, out_dir / f"alpha-{a:.2f}", plots=False, cache=cache)
        rows.append({"alpha": float(a), **final_scores(d), "run_dir": d.name})
    write_rows(out_dir / "sweep.csv", rows, SWEEP_COLUMNS)
    if plots:
        from .report import render_sweep
        render_sweep(out_dir)
    return out_dir, rows


def export_map(checkpoint, out_path, seed: Optional[int] = None, choice: bool = False) -> Path:
    """Relevance (or choice) map of a checkpointed classifier as a colored PLY.

    The map is drawn on the replication's evaluation scene unless a pose ``seed`` is given.
    """
    from .explorer import choice_map, perceive
    cfg, rep, state = load_checkpoint(checkpoint)
    ex = make_exploration(cfg, rep)
    ex.load_state(state)
    view = ex.eval_perception if seed is None else perceive(cfg.scene, seed, cfg.supervoxel)
    labels = view.segmentation.labels
    if choice:
        values = choice_map(ex.clf, view.features, cfg.explorer.confidence_scope)
        return plyio.write_point_map(out_path, view.cloud, labels, values / values.max(),
                                     colors=plyio.BLUE_RED)
    return plyio.write_point_map(out_path, view.cloud, labels, ex.clf.predict_proba(view.features))
