"""Probabilistic precision, recall and accuracy of a relevance map."""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

from .scene import oracle_label

UNDEFINED = float("nan")


@dataclass
class MetricsRecord:
    iteration: int = 0
    tp: float = 0.0
    tn: float = 0.0
    fp: float = 0.0
    fn: float = 0.0
    G_obj: int = 0
    G_back: int = 0
    precision: float = UNDEFINED
    recall: float = UNDEFINED
    accuracy: float = UNDEFINED
    n0: int = 0
    n1: int = 0
    K0: int = 0
    K1: int = 0
    mislabel_count: int = 0
    # set when one of the classes is absent from the evaluation scene
    degenerate: bool = False

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def is_undefined(value) -> bool:
    return isinstance(value, float) and math.isnan(value)


def confusion(prob, delta):
    """Soft confusion counts ``(tp, tn, fp, fn)`` from P(L=1) and background flags."""
    prob = np.asarray(prob, dtype=float)
    delta = np.asarray(delta, dtype=float)
    tp = float(np.sum(prob * (1 - delta)))
    tn = float(np.sum((1 - prob) * delta))
    fp = float(np.sum(prob * delta))
    fn = float(np.sum((1 - prob) * (1 - delta)))
    return tp, tn, fp, fn


def scores(prob, delta, iteration: int = 0) -> MetricsRecord:
    """Metrics from per-supervoxel probabilities and background flags (1 = background)."""
    delta = np.asarray(delta)
    tp, tn, fp, fn = confusion(prob, delta)
    g_obj = int(np.sum(delta == 0))
    g_back = int(np.sum(delta == 1))
    rec = MetricsRecord(iteration=iteration, tp=tp, tn=tn, fp=fp, fn=fn, G_obj=g_obj, G_back=g_back)
    if tp + fp > 0:
        rec.precision = tp / (tp + fp)
    if g_obj > 0:
        rec.recall = tp / g_obj
    halves = []
    if g_obj > 0:
        halves.append(tp / g_obj)
    if g_back > 0:
        halves.append(tn / g_back)
    rec.degenerate = len(halves) < 2
    if halves:
        # with one class missing only the defined half is reported
        rec.accuracy = halves[0] if len(halves) == 1 else 0.5 * (halves[0] + halves[1])
    return rec


def evaluate(clf, supervoxels, features, gt, iteration: int = 0) -> MetricsRecord:
    """Score ``clf`` on a segmented scene against the ground-truth oracle."""
    prob = clf.predict_proba(np.asarray(features)) if len(supervoxels) else np.empty(0)
    delta = np.array([1 - oracle_label(sv.member_indices, gt) for sv in supervoxels])
    rec = scores(prob, delta, iteration)
    rec.n0, rec.n1 = clf.counts()
    rec.K0, rec.K1 = clf.n_components()
    return rec
