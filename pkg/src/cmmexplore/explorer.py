"""Simulated interactive exploration: perceive, choose, interact, label, learn.

Each iteration renders a scene, oversegments it, scores every supervoxel
with the classifier, draws a target from the choice distribution, obtains a
label for it (from the oracle or from a simulated push followed by change
detection) and feeds the labeled feature to the classifier.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import logsumexp

from .cmm import CMMClassifier, CMMParams
from .features import FeatureExtractor, point_fpfh
from .metrics import MetricsRecord, evaluate
from .scene import (TABLE_ID, ConfigError, SceneConfig, displace_object, generate_scene,
                    oracle_label, parent_object)
from .supervoxel import Segmentation, SupervoxelParams, segment

MODES = ("ideal", "cloud_diff", "noisy")
CONFIDENCE_SCOPES = ("joint", "model", "density", "none")
# stream tags for seed derivation
_TRAIN, _EVAL, _PICK, _PUSH, _NOISE, _CLF, _POOL = range(7)


# -- sampling policy ---------------------------------------------------------------
def f_uncertainty(x):
    """Uncertainty transform, 1 at x = 0.5, 0 at x = 0, 2 - 2 log 2 at x = 1."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        hi = -2 * x * (np.log(2 * x) - 1)
        lo = -4 * x * x * (np.log(4 * x * x) - 1)
    out = np.where(x >= 0.5, hi, np.where(x > 0, lo, 0.0))
    return out if out.ndim else float(out)


def _log_f(logx):
    """log f(x) from log x, accurate when x underflows."""
    logx = np.asarray(logx, dtype=float)
    x = np.exp(logx)
    out = np.empty_like(logx)
    hi = x >= 0.5
    # f(x) = 2x (1 - log 2x) on the upper branch, 4x^2 (1 - log 4x^2) below
    out[hi] = np.log(2.0) + logx[hi] + np.log1p(-(np.log(2.0) + logx[hi]))
    l2 = np.log(4.0) + 2 * logx[~hi]
    with np.errstate(invalid="ignore"):
        out[~hi] = np.where(np.isfinite(l2), l2 + np.log1p(-l2), -np.inf)
    return out


def uncertainty(clf: CMMClassifier, X, n0: Optional[int] = None, n1: Optional[int] = None):
    """Uncertainty of each row of ``X``, biased toward the class with fewer samples."""
    return np.exp(log_uncertainty(clf, X, n0, n1))


def log_uncertainty(clf, X, n0=None, n1=None):
    if n0 is None or n1 is None:
        n0, n1 = clf.counts()
    lp1, lp0 = clf.log_class_probabilities(X)
    return _log_f(lp1 if n1 <= n0 else lp0)


def log_one_minus_confidence(clf: CMMClassifier, X, scope: str = "density"):
    """log(1 - c(x)) where c is the membership of the closest component.

    ``scope`` selects the normalization of the membership: ``"model"`` over the
    components of the closest component's own class, ``"joint"`` over the
    components of both classes, ``"density"`` over both classes plus a unit
    background term (so that regions far from every component get c near 0).
    Both models empty gives c = 0.
    """
    if scope not in CONFIDENCE_SCOPES:
        raise ValueError(f"unknown confidence scope {scope!r}")
    X = np.atleast_2d(X)
    comps = [c for m in clf.models for c in m.components]
    if not comps or scope == "none":
        return np.zeros(len(X))
    means = np.array([c.mean for c in comps])
    d2 = np.sum(X * X, axis=1)[:, None] - 2 * X @ means.T + np.sum(means * means, axis=1)[None]
    closest = np.argmin(d2, axis=1)
    with np.errstate(divide="ignore"):
        lw = np.stack([np.log(c.weight) + c.logpdf(X) for c in comps], axis=1)
    if scope == "model":
        label = np.array([c.label for c in comps])
        mask = label[None, :] == label[closest][:, None]
        lw = np.where(mask, lw, -np.inf)
    rows = np.arange(len(X))
    others = lw.copy()
    others[rows, closest] = -np.inf
    if scope == "density":
        pad = np.zeros((len(X), 1))
        others = np.hstack([others, pad])
        lw = np.hstack([lw, pad])
    num = logsumexp(others, axis=1)
    den = logsumexp(lw, axis=1)
    out = num - den
    # all densities vanished: treat as fully unconfident
    return np.where(np.isfinite(den), out, 0.0)


def confidence(clf: CMMClassifier, X, scope: str = "density"):
    return 1.0 - np.exp(log_one_minus_confidence(clf, X, scope))


def choice_map(clf: CMMClassifier, features, scope: str = "density", n0=None, n1=None) -> np.ndarray:
    """Choice distribution over supervoxels, proportional to u * (1 - c)."""
    X = np.atleast_2d(np.asarray(features, dtype=float))
    if len(X) == 0:
        raise ValueError("choice map of zero supervoxels")
    score = log_uncertainty(clf, X, n0, n1) + log_one_minus_confidence(clf, X, scope)
    if not np.any(np.isfinite(score)):
        return np.full(len(X), 1.0 / len(X))
    p = np.exp(score - np.max(score))
    return p / p.sum()


def pick_supervoxel(pmap, rng) -> int:
    """Categorical draw of a supervoxel index from the choice distribution."""
    pmap = np.asarray(pmap, dtype=float)
    return int(rng.choice(len(pmap), p=pmap / pmap.sum()))


# -- change detection --------------------------------------------------------------
def _cells(positions, cell):
    return np.floor(positions / cell).astype(np.int64)


def diff_points(before, after, cell: float, k_min: int = 3) -> np.ndarray:
    """Points of either cloud in occupancy cells the other cloud leaves empty.

    Cells holding fewer than ``k_min`` such points are dropped as outliers.
    """
    cb, ca = _cells(before.positions, cell), _cells(after.positions, cell)
    occ_b = {tuple(c) for c in cb}
    occ_a = {tuple(c) for c in ca}
    only_b = np.array([tuple(c) not in occ_a for c in cb], dtype=bool)
    only_a = np.array([tuple(c) not in occ_b for c in ca], dtype=bool)
    pts = np.vstack([before.positions[only_b], after.positions[only_a]])
    cells = np.vstack([cb[only_b], ca[only_a]])
    if len(pts) == 0:
        return pts
    _, inv, counts = np.unique(cells, axis=0, return_inverse=True, return_counts=True)
    return pts[counts[inv.reshape(-1)] >= k_min]


def detect_change(before, after, target, cell: float, k_min: int = 3, overlap: float = 0.25) -> bool:
    """Whether at least ``overlap`` of the target's points lie within ``cell`` of the change set.

    ``target`` is a supervoxel (or an index array) into ``before``.
    """
    idx = np.asarray(getattr(target, "member_indices", target))
    if idx.size == 0:
        return False
    diff = diff_points(before, after, cell, k_min)
    if len(diff) == 0:
        return False
    d, _ = cKDTree(diff).query(before.positions[idx], distance_upper_bound=cell * (1 + 1e-9))
    return bool(np.mean(np.isfinite(d)) >= overlap)


# -- perception --------------------------------------------------------------------
@dataclass
class Perception:
    cloud: object
    gt: object
    segmentation: Segmentation
    features: np.ndarray

    def oracle(self) -> np.ndarray:
        return np.array([oracle_label(sv.member_indices, self.gt) for sv in self.segmentation.supervoxels])


def perceive(scene: SceneConfig, seed: int, sv_params: SupervoxelParams, cache=None) -> Perception:
    """Render, oversegment and describe one scene.

    ``cache`` is an optional :class:`PerceptionCache` shared between explorations.
    """
    if cache is not None:
        return cache.get(scene, seed, sv_params)
    cloud, gt = generate_scene(scene, seed, min_object_size=sv_params.seed_radius)
    desc = point_fpfh(cloud.positions, cloud.normals, sv_params.fpfh_radius)
    seg = segment(cloud, sv_params, point_descriptors=desc)
    feats = FeatureExtractor(cloud, sv_params.fpfh_radius, desc).all_features(seg.supervoxels)
    return Perception(cloud, gt, seg, feats)


class PerceptionCache:
    """Memo of perceived scenes keyed by scene config, segmentation params and pose seed."""

    def __init__(self, max_items: int = 4096):
        self.max_items = max_items
        self._items = {}

    def get(self, scene, seed, sv_params) -> Perception:
        key = (repr(scene), repr(sv_params), int(seed))
        hit = self._items.get(key)
        if hit is None:
            hit = perceive(scene, seed, sv_params)
            if len(self._items) >= self.max_items:
                self._items.pop(next(iter(self._items)))
            self._items[key] = hit
        return hit

    def __len__(self):
        return len(self._items)


# -- exploration loop --------------------------------------------------------------
@dataclass
class ExplorerParams:
    mode: str = "ideal"
    # label flip probability
    eta: float = 0.0
    confidence_scope: str = "density"
    # occupancy cell and outlier threshold of the change detector
    change_cell: float = 0.03
    change_k_min: int = 2
    change_overlap: float = 0.25
    push_range: tuple = (0.05, 0.10)
    static_scene: bool = False
    # "heldout" scores a fixed scene with an unseen pose seed, "explored" the scene just explored
    eval_scene: str = "heldout"

    def validate(self):
        if self.mode not in MODES:
            raise ConfigError(f"explorer.mode must be one of {', '.join(MODES)}")
        if not 0.0 <= self.eta < 1.0:
            raise ConfigError("explorer.eta must be in [0, 1)")
        if self.mode == "noisy" and self.eta <= 0:
            raise ConfigError("explorer.eta must be > 0 in noisy mode")
        if self.mode == "ideal" and self.eta != 0:
            raise ConfigError("explorer.eta must be 0 in ideal mode")
        if self.confidence_scope not in CONFIDENCE_SCOPES:
            raise ConfigError(f"explorer.confidence_scope must be one of {', '.join(CONFIDENCE_SCOPES)}")
        if self.change_cell <= 0 or self.change_k_min < 1 or not 0 < self.change_overlap <= 1:
            raise ConfigError("explorer change-detection settings out of range")
        lo, hi = self.push_range
        if not 0 < lo <= hi:
            raise ConfigError("explorer.push_range must satisfy 0 < min <= max")
        if self.eval_scene not in ("heldout", "explored"):
            raise ConfigError("explorer.eval_scene must be 'heldout' or 'explored'")


@dataclass
class InteractionOutcome:
    iteration: int
    supervoxel_id: int
    label: int
    mislabeled: bool
    relevance: np.ndarray = field(repr=False, default=None)
    choice: np.ndarray = field(repr=False, default=None)
    metrics: Optional[MetricsRecord] = None


def derive_seed(master: int, tag: int, replication: int, index: int) -> int:
    """Independent 32-bit seed for one (stream, replication, index) triple."""
    keys = (master, tag, replication, index)
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(1, np.uint32)[0])


class Exploration:
    """State of one replication of the exploration loop."""

    def __init__(self, scene: SceneConfig, sv_params: SupervoxelParams, cmm_params: CMMParams,
                 params: ExplorerParams = None, master_seed: int = 0, replication: int = 0,
                 scene_pool: int = 0, cache: Optional[PerceptionCache] = None):
        self.scene = scene
        self.sv_params = sv_params
        self.params = params or ExplorerParams()
        self.params.validate()
        sv_params.validate()
        scene.validate(sv_params.seed_radius)
        self.master_seed = master_seed
        self.replication = replication
        self.scene_pool = scene_pool
        self.cache = cache
        self.clf = CMMClassifier(cmm_params, derive_seed(master_seed, _CLF, replication, 0))
        self.iteration = 0
        self.mislabels = 0
        self.rows: list = []
        self._eval: Optional[Perception] = None
        self.choice_sum = None

    def _rng(self, tag, it):
        return np.random.default_rng(derive_seed(self.master_seed, tag, self.replication, it))

    def scene_seed(self, it: int) -> int:
        """Pose seed of the training scene at iteration ``it``.

        With a scene pool, poses are drawn from ``scene_pool`` seeds shared by all replications.
        """
        if self.params.static_scene:
            return derive_seed(self.master_seed, _TRAIN, self.replication, 0)
        if self.scene_pool:
            k = int(self._rng(_TRAIN, it).integers(self.scene_pool))
            return derive_seed(self.master_seed, _POOL, 0, k)
        return derive_seed(self.master_seed, _TRAIN, self.replication, it)

    @property
    def eval_perception(self) -> Perception:
        if self._eval is None:
            self._eval = perceive(self.scene, derive_seed(self.master_seed, _EVAL, self.replication, 0),
                                  self.sv_params, self.cache)
        return self._eval

    def interact(self, view: Perception, target: int, it: int):
        """Label of the target supervoxel and whether it disagrees with the oracle."""
        sv = view.segmentation[target]
        truth = oracle_label(sv.member_indices, view.gt)
        if self.params.mode == "cloud_diff":
            obj = parent_object(sv.member_indices, view.gt)
            after = view.cloud
            if obj != TABLE_ID:
                rng = self._rng(_PUSH, it)
                heading = rng.uniform(-np.pi, np.pi)
                dist = rng.uniform(*self.params.push_range)
                after = displace_object(view.cloud, view.gt, obj,
                                        (dist * np.cos(heading), dist * np.sin(heading), 0.0))
            label = int(detect_change(view.cloud, after, sv, self.params.change_cell,
                                      self.params.change_k_min, self.params.change_overlap))
        else:
            label = truth
        if self.params.eta > 0 and self._rng(_NOISE, it).random() < self.params.eta:
            label = 1 - label
        return label, label != truth

    def run_iteration(self) -> InteractionOutcome:
        it = self.iteration + 1
        view = perceive(self.scene, self.scene_seed(it), self.sv_params, self.cache)
        relevance = self.clf.predict_proba(view.features)
        pmap = choice_map(self.clf, view.features, self.params.confidence_scope)
        target = pick_supervoxel(pmap, self._rng(_PICK, it))
        label, wrong = self.interact(view, target, it)
        self.mislabels += int(wrong)
        self.clf.add_sample(view.features[target], label)

        ev = view if self.params.eval_scene == "explored" else self.eval_perception
        rec = evaluate(self.clf, ev.segmentation.supervoxels, ev.features, ev.gt, it)
        rec.mislabel_count = self.mislabels
        if self.params.eval_scene == "heldout":
            emap = choice_map(self.clf, ev.features, self.params.confidence_scope)
            self.choice_sum = emap if self.choice_sum is None else self.choice_sum + emap
        self.iteration = it
        self.rows.append(metrics_row(rec, target, label))
        return InteractionOutcome(it, target, label, wrong, relevance, pmap, rec)

    def run(self, budget: int, callback=None):
        while self.iteration < budget:
            out = self.run_iteration()
            if callback is not None:
                callback(self, out)
        return self.rows

    def mean_choice(self) -> Optional[np.ndarray]:
        if self.choice_sum is None or self.iteration == 0:
            return None
        return self.choice_sum / self.iteration

    # -- persistence -----------------------------------------------------------
    def state_dict(self) -> dict:
        return {
            "iteration": self.iteration,
            "mislabels": self.mislabels,
            "rows": self.rows,
            "choice_sum": None if self.choice_sum is None else self.choice_sum.tolist(),
            "classifier": self.clf.to_dict(),
        }

    def load_state(self, state: dict):
        self.iteration = state["iteration"]
        self.mislabels = state["mislabels"]
        self.rows = [dict(r) for r in state["rows"]]
        cs = state.get("choice_sum")
        self.choice_sum = None if cs is None else np.asarray(cs, dtype=float)
        self.clf = CMMClassifier.from_dict(state["classifier"])


CSV_COLUMNS = ("iter", "precision", "recall", "accuracy", "n0", "n1", "K0", "K1",
               "mislabels", "chosen_id", "chosen_label")


def metrics_row(rec: MetricsRecord, chosen_id: int, chosen_label: int) -> dict:
    return {
        "iter": rec.iteration, "precision": rec.precision, "recall": rec.recall,
        "accuracy": rec.accuracy, "n0": rec.n0, "n1": rec.n1, "K0": rec.K0, "K1": rec.K1,
        "mislabels": rec.mislabel_count, "chosen_id": int(chosen_id), "chosen_label": int(chosen_label),
    }
