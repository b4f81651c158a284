"""Collaborative mixture models: an online two-class Gaussian mixture classifier.

Each class owns a Gaussian mixture whose components are plain sample sets
summarized by their sample mean and covariance. Samples are added one at a
time; the number of components adapts through split and merge moves that are
triggered by tolerance-ellipsoid intersections and kept only when they raise
the class log-likelihood.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.special import logsumexp

from .fstat import tolerance_threshold
from .scene import ConfigError

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "cmm-classifier"
CHECKPOINT_VERSION = 1
DENSITY_FLOOR = 1e-300
LOG_DENSITY_FLOOR = np.log(DENSITY_FLOOR)


class IneligibleComponent(ValueError):
    """The component has too few samples for a tolerance region (n <= p)."""


@dataclass
class CMMParams:
    alpha: float = 0.25
    dim: int = 48
    # covariance of a single-sample component is init_cov * I
    init_cov: float = 0.01
    n_inner: int = 1
    # ridge added to covariance diagonals: cov_reg + cov_reg_rel * trace / dim
    cov_reg: float = 0.01
    cov_reg_rel: float = 1e-6
    split_merge: bool = True

    def validate(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ConfigError("cmm.alpha must be in (0, 1]")
        if self.dim < 1:
            raise ConfigError("cmm.dim must be >= 1")
        if self.init_cov <= 0:
            raise ConfigError("cmm.init_cov must be > 0")
        if self.n_inner < 1:
            raise ConfigError("cmm.n_inner must be >= 1")
        if self.cov_reg < 0 or self.cov_reg_rel < 0:
            raise ConfigError("cmm.cov_reg and cmm.cov_reg_rel must be >= 0")


class Component:
    """One Gaussian of a class mixture together with the samples that define it.

    Instances are treated as immutable: any change of the sample set builds a
    new component, which keeps the per-model density caches valid.
    """

    def __init__(self, label: int, samples, mean, cov, weight: float = 0.0):
        self.label = int(label)
        self.samples = np.asarray(samples, dtype=np.int64)
        self.mean = np.asarray(mean, dtype=float)
        self.cov = np.asarray(cov, dtype=float)
        self.weight = float(weight)
        self._chol = cho_factor(self.cov, lower=True)
        self.logdet = 2.0 * np.sum(np.log(np.diag(self._chol[0])))

    @classmethod
    def estimate(cls, label, samples, X, params: CMMParams) -> "Component":
        samples = np.asarray(samples, dtype=np.int64)
        pts = X[samples]
        mean = pts.mean(axis=0)
        if len(samples) == 1:
            cov = params.init_cov * np.eye(X.shape[1])
        else:
            cov = np.cov(pts, rowvar=False, ddof=1).reshape(X.shape[1], X.shape[1])
            ridge = params.cov_reg + params.cov_reg_rel * np.trace(cov) / X.shape[1]
            cov = cov + ridge * np.eye(X.shape[1])
        return cls(label, samples, mean, cov)

    def __len__(self):
        return len(self.samples)

    def logpdf(self, X) -> np.ndarray:
        X = np.atleast_2d(X)
        z = solve_triangular(self._chol[0], (X - self.mean).T, lower=True, check_finite=False)
        maha = np.sum(z * z, axis=0)
        return -0.5 * (len(self.mean) * np.log(2 * np.pi) + self.logdet + maha)

    def pdf(self, X) -> np.ndarray:
        return np.exp(self.logpdf(X))

    def mahalanobis2(self, point) -> float:
        d = np.asarray(point, dtype=float) - self.mean
        return float(d @ cho_solve(self._chol, d, check_finite=False))


@dataclass(eq=False)
class ClassModel:
    label: int
    components: list = field(default_factory=list)
    # database indices of every sample carrying this label, in arrival order
    sample_ids: list = field(default_factory=list)

    def __post_init__(self):
        self._cache = {}

    def __len__(self):
        return len(self.components)

    @property
    def empty(self) -> bool:
        return not self.components

    def index_of(self, comp: Component) -> int:
        for i, c in enumerate(self.components):
            if c is comp:
                return i
        raise KeyError("component does not belong to this model")

    def log_density(self, X) -> np.ndarray:
        """log of the mixture density; -inf for an empty model."""
        X = np.atleast_2d(X)
        if self.empty:
            return np.full(len(X), -np.inf)
        return logsumexp(self._weighted_logpdf(self.components, X), axis=0)

    @staticmethod
    def _weighted_logpdf(components, X):
        with np.errstate(divide="ignore"):
            return np.stack([np.log(c.weight) + c.logpdf(X) for c in components])

    def cached_logpdf(self, comp: Component, X) -> np.ndarray:
        """Density of ``comp`` at every class sample, extended incrementally as samples arrive."""
        n = len(self.sample_ids)
        key = id(comp)
        hit = self._cache.get(key)
        if hit is None or hit[0] is not comp:
            vals = comp.logpdf(X[self.sample_ids]) if n else np.empty(0)
        else:
            vals = hit[1]
            if len(vals) < n:
                vals = np.concatenate([vals, comp.logpdf(X[self.sample_ids[len(vals):]])])
        self._cache[key] = (comp, vals)
        return vals

    def prune_cache(self):
        live = {id(c) for c in self.components}
        self._cache = {k: v for k, v in self._cache.items() if k in live}


def update_weights(model: ClassModel) -> None:
    """Set each weight to the component's share of the class samples."""
    if model.empty:
        return
    total = sum(len(c) for c in model.components)
    for c in model.components:
        c.weight = len(c) / total


def component_membership(model: ClassModel, x) -> np.ndarray:
    """Posterior probability of each component of ``model`` for the sample ``x``."""
    if model.empty:
        raise ValueError("component membership of an empty model")
    lw = ClassModel._weighted_logpdf(model.components, np.atleast_2d(x))[:, 0]
    top = np.max(lw)
    if not np.isfinite(top):
        log.warning("all component densities vanish; using uniform membership")
        return np.full(len(model), 1.0 / len(model))
    w = np.exp(lw - top)
    return w / w.sum()


def loglikelihood(model: ClassModel, samples) -> float:
    """Sum over ``samples`` of the log mixture density, densities floored at 1e-300."""
    if model.empty:
        raise ValueError("log-likelihood of an empty model")
    return float(np.sum(np.maximum(model.log_density(np.atleast_2d(samples)), LOG_DENSITY_FLOOR)))


def closest_component(model: ClassModel, s) -> Component:
    """Component whose mean is nearest to ``s`` in Euclidean distance (lowest index on ties)."""
    if model.empty:
        raise ValueError("closest component of an empty model")
    means = np.array([c.mean for c in model.components])
    return model.components[int(np.argmin(np.sum((means - s) ** 2, axis=1)))]


def intersects(c1: Component, c2: Component, alpha: float, dim: Optional[int] = None) -> bool:
    """Whether the mean of ``c2`` lies in the (1 - alpha) tolerance ellipsoid of ``c1``.

    Raises :class:`IneligibleComponent` when ``c1`` has no more samples than dimensions.
    """
    p = len(c1.mean) if dim is None else dim
    n = len(c1)
    if n <= p:
        raise IneligibleComponent(f"component has {n} samples, needs more than {p}")
    return c1.mahalanobis2(c2.mean) <= tolerance_threshold(n, p, alpha)


def split_partition(X):
    """Share samples between two groups, or return None when the split is cancelled.

    Samples are linked to their nearest neighbor; connected groups of that
    graph are then agglomerated by average linkage until two remain.
    """
    X = np.asarray(X, dtype=float)
    n = len(X)
    if n < 4:
        return None
    sq = np.sum(X * X, axis=1)
    D = np.sqrt(np.maximum(sq[:, None] + sq[None, :] - 2 * X @ X.T, 0.0))
    np.fill_diagonal(D, np.inf)
    nn = np.argmin(D, axis=1)
    graph = coo_matrix((np.ones(n), (np.arange(n), nn)), shape=(n, n))
    ngroups, group = connected_components(graph, directed=False)
    if ngroups == 1:
        return None
    np.fill_diagonal(D, 0.0)
    # average-linkage agglomeration over the initial groups
    G = np.zeros((n, ngroups))
    G[np.arange(n), group] = 1.0
    size = G.sum(axis=0)
    A = (G.T @ D @ G) / np.outer(size, size)
    np.fill_diagonal(A, np.inf)
    alive = np.ones(ngroups, dtype=bool)
    owner = np.arange(ngroups)
    for _ in range(ngroups - 2):
        flat = int(np.argmin(A))
        a, b = divmod(flat, ngroups)
        a, b = min(a, b), max(a, b)
        merged = (size[a] * A[a] + size[b] * A[b]) / (size[a] + size[b])
        A[a, :] = merged
        A[:, a] = merged
        A[a, a] = np.inf
        A[b, :] = np.inf
        A[:, b] = np.inf
        size[a] += size[b]
        alive[b] = False
        owner[owner == b] = a
    side = owner[group]
    first = side == side[0]
    left, right = np.flatnonzero(first), np.flatnonzero(~first)
    if len(left) <= 1 or len(right) <= 1:
        return None
    return left, right


class CMMClassifier:
    """Two class mixtures (label 0 and label 1) trained one labeled sample at a time."""

    def __init__(self, params: CMMParams = None, rng_seed: int = 0):
        self.params = params or CMMParams()
        self.params.validate()
        self.rng_seed = rng_seed
        self.rng = np.random.default_rng(rng_seed)
        self.models = (ClassModel(0), ClassModel(1))
        self._X = np.empty((64, self.params.dim))
        self._n = 0
        self.labels: list = []
        self.events: list = []

    # -- database -----------------------------------------------------------------
    @property
    def X(self) -> np.ndarray:
        return self._X[:self._n]

    @property
    def model0(self) -> ClassModel:
        return self.models[0]

    @property
    def model1(self) -> ClassModel:
        return self.models[1]

    def counts(self):
        return len(self.models[0].sample_ids), len(self.models[1].sample_ids)

    def n_components(self):
        return len(self.models[0]), len(self.models[1])

    def _append(self, x, label):
        if self._n == len(self._X):
            self._X = np.vstack([self._X, np.empty_like(self._X)])
        self._X[self._n] = x
        self._n += 1
        self.labels.append(int(label))
        self.models[label].sample_ids.append(self._n - 1)
        return self._n - 1

    def _check_dim(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.params.dim:
            raise ValueError(f"expected feature dimension {self.params.dim}, got {x.shape[-1]}")
        return x

    # -- prediction ---------------------------------------------------------------
    def log_densities(self, X):
        X = np.atleast_2d(self._check_dim(X))
        return self.models[0].log_density(X), self.models[1].log_density(X)

    def log_class_probabilities(self, X):
        """``(log P(L=1|x), log P(L=0|x))`` computed without overflow."""
        g0, g1 = self.log_densities(X)
        den = logsumexp(np.stack([np.full_like(g0, np.log(2.0)), g1, g0]), axis=0)
        return np.logaddexp(0.0, g1) - den, np.logaddexp(0.0, g0) - den

    def predict_proba(self, X) -> np.ndarray:
        """Probability of label 1 for each row of ``X``."""
        return np.exp(self.log_class_probabilities(X)[0])

    def classify(self, x) -> float:
        return float(self.predict_proba(np.atleast_2d(x))[0])

    # -- training -----------------------------------------------------------------
    def eligible(self, comp: Component) -> bool:
        return len(comp) > self.params.dim

    def class_loglikelihood(self, model: ClassModel, components=None) -> float:
        """Log-likelihood of all samples of the model's class under ``components``."""
        comps = model.components if components is None else components
        if not model.sample_ids:
            return 0.0
        total = sum(len(c) for c in comps)
        rows = np.stack([np.log(len(c) / total) + model.cached_logpdf(c, self.X) for c in comps])
        return float(np.sum(np.maximum(logsumexp(rows, axis=0), LOG_DENSITY_FLOOR)))

    def _estimate(self, label, samples):
        return Component.estimate(label, samples, self.X, self.params)

    def _commit(self, model: ClassModel, components):
        model.components = components
        update_weights(model)
        model.prune_cache()

    def split(self, comp: Component) -> bool:
        """Try to split ``comp`` in two; returns whether the model changed."""
        if not self.params.split_merge or not self.eligible(comp):
            return False
        model = self.models[comp.label]
        other = self.models[1 - comp.label]
        for rival in list(other.components):
            if not intersects(comp, rival, self.params.alpha, self.params.dim):
                continue
            parts = split_partition(self.X[comp.samples])
            if parts is None:
                return False
            c1 = self._estimate(comp.label, comp.samples[parts[0]])
            c2 = self._estimate(comp.label, comp.samples[parts[1]])
            i = model.index_of(comp)
            candidate = model.components[:i] + [c1, c2] + model.components[i + 1:]
            if self.class_loglikelihood(model, candidate) > self.class_loglikelihood(model):
                self._commit(model, candidate)
                self.events.append(("split", comp.label, self._n))
                return True
            # the partition does not depend on the rival, so other rivals give the same candidate
            return False
        return False

    def merge(self, comp: Component) -> bool:
        """Try to merge ``comp`` with an intersecting component of its own class."""
        if not self.params.split_merge or not self.eligible(comp):
            return False
        model = self.models[comp.label]
        current = None
        for mate in list(model.components):
            if mate is comp or not intersects(comp, mate, self.params.alpha, self.params.dim):
                continue
            merged = self._estimate(comp.label, np.concatenate([comp.samples, mate.samples]))
            candidate = [merged if c is comp else c for c in model.components if c is not mate]
            if current is None:
                current = self.class_loglikelihood(model)
            if self.class_loglikelihood(model, candidate) > current:
                self._commit(model, candidate)
                self.events.append(("merge", comp.label, self._n))
                return True
        return False

    def _adapt(self, comp: Component):
        if not self.split(comp):
            self.merge(comp)

    def add_sample(self, x, label: int) -> None:
        """Insert one labeled sample and adapt both mixtures."""
        x = self._check_dim(x).reshape(-1)
        if label not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {label}")
        idx = self._append(x, label)
        model = self.models[label]
        for it in range(self.params.n_inner):
            if it == 0:
                if model.empty:
                    self._commit(model, [self._estimate(label, [idx])])
                else:
                    comp = closest_component(model, x)
                    grown = self._estimate(label, np.append(comp.samples, idx))
                    self._commit(model, [grown if c is comp else c for c in model.components])
                    self._adapt(grown)
            for m in self.models:
                if not m.empty:
                    self._adapt(m.components[int(self.rng.integers(len(m)))])
            update_weights(self.models[0])
            update_weights(self.models[1])

    # -- invariants & persistence ------------------------------------------------
    def check_invariants(self) -> None:
        """Raise AssertionError if the database partition or weights are inconsistent."""
        seen = np.zeros(self._n, dtype=int)
        for m in self.models:
            for c in m.components:
                assert c.label == m.label
                seen[c.samples] += 1
                for s in c.samples:
                    assert self.labels[s] == m.label
            if m.components:
                assert abs(sum(c.weight for c in m.components) - 1.0) < 1e-9
        assert np.all(seen == 1), "every sample must belong to exactly one component"

    def to_dict(self) -> dict:
        def comp(c):
            return {"samples": c.samples.tolist(), "mean": c.mean.tolist(),
                    "cov": c.cov.tolist(), "weight": c.weight}

        return {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "params": asdict(self.params),
            "rng_seed": self.rng_seed,
            "rng_state": self.rng.bit_generator.state,
            "samples": self.X.tolist(),
            "labels": list(self.labels),
            "models": [[comp(c) for c in m.components] for m in self.models],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CMMClassifier":
        if data.get("format") != CHECKPOINT_FORMAT:
            raise ValueError("not a CMM classifier checkpoint")
        if data.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {data.get('version')}")
        clf = cls(CMMParams(**data["params"]), data["rng_seed"])
        clf.rng.bit_generator.state = data["rng_state"]
        for x, label in zip(data["samples"], data["labels"]):
            clf._append(np.asarray(x, dtype=float), label)
        for label, comps in enumerate(data["models"]):
            clf.models[label].components = [
                Component(label, c["samples"], c["mean"], c["cov"], c["weight"]) for c in comps
            ]
        return clf

    def dumps(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def loads(cls, text: str) -> "CMMClassifier":
        return cls.from_dict(json.loads(text))


def classify(clf: CMMClassifier, x) -> float:
    return clf.classify(x)


def add_sample(clf: CMMClassifier, x, label: int) -> None:
    clf.add_sample(x, label)
