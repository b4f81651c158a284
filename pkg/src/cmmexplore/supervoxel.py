"""Supervoxel oversegmentation by seeded, locally-constrained clustering.

Seeds are taken one per occupied cell of a grid of pitch ``seed_radius``.
Each point is then assigned to the reachable seed minimizing the combined
color / spatial / shape distance, and seed centroids are refined until the
assignment stops changing.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree

from . import _kernels
from .features import point_fpfh, rgb_to_cielab
from .scene import ConfigError, Point


@dataclass
class SupervoxelParams:
    seed_radius: float = 0.05
    color_weight: float = 0.2
    spatial_weight: float = 0.4
    shape_weight: float = 1.0
    color_scale: float = 10.0
    voxel_resolution: float = 0.03
    max_iterations: int = 10
    # defaults to twice the seed radius
    fpfh_radius: Optional[float] = None

    def __post_init__(self):
        if self.fpfh_radius is None:
            self.fpfh_radius = 2 * self.seed_radius

    def validate(self):
        if self.seed_radius <= 0:
            raise ConfigError("supervoxel.seed_radius must be > 0")
        weights = (self.color_weight, self.spatial_weight, self.shape_weight)
        if min(weights) < 0 or sum(weights) <= 0:
            raise ConfigError("supervoxel weights must be >= 0 with a positive sum")
        if self.color_scale <= 0:
            raise ConfigError("supervoxel.color_scale must be > 0")
        if self.voxel_resolution <= 0 or self.fpfh_radius <= 0:
            raise ConfigError("supervoxel.voxel_resolution and fpfh_radius must be > 0")
        if self.max_iterations < 1:
            raise ConfigError("supervoxel.max_iterations must be >= 1")


@dataclass
class Supervoxel:
    id: int
    member_indices: np.ndarray
    centroid: Point
    neighbors: set = field(default_factory=set)

    def __len__(self):
        return len(self.member_indices)


@dataclass
class Segmentation:
    supervoxels: list
    # supervoxel id of every point
    labels: np.ndarray

    def __len__(self):
        return len(self.supervoxels)

    def __getitem__(self, i) -> Supervoxel:
        return self.supervoxels[i]

    def adjacency(self) -> dict:
        return {sv.id: set(sv.neighbors) for sv in self.supervoxels}

    def neighbors_of(self, sv: Supervoxel) -> list:
        return [self.supervoxels[j] for j in sorted(sv.neighbors)]


def histogram_distance(h1, h2) -> np.ndarray:
    """Histogram-intersection distance in [0, 1]."""
    h1, h2 = np.asarray(h1, float), np.asarray(h2, float)
    inter = np.minimum(h1, h2).sum(axis=-1)
    total = np.maximum(h1.sum(axis=-1), h2.sum(axis=-1))
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(total > 0, 1.0 - inter / total, 1.0)


def combined_distance(d_color, d_space, d_shape, params: SupervoxelParams):
    return np.sqrt(
        params.color_weight * np.square(d_color) / params.color_scale ** 2
        + params.spatial_weight * np.square(d_space) / (3 * params.seed_radius ** 2)
        + params.shape_weight * np.square(d_shape)
    )


def vccs_distance(a: Point, b: Point, params: SupervoxelParams, fpfh_a, fpfh_b) -> float:
    """Combined distance between two oriented colored points with their FPFH."""
    d_c = np.linalg.norm(rgb_to_cielab(a.color) - rgb_to_cielab(b.color))
    d_s = np.linalg.norm(np.asarray(a.position, float) - np.asarray(b.position, float))
    d_f = histogram_distance(fpfh_a, fpfh_b)
    return float(combined_distance(d_c, d_s, d_f, params))


def _seed_points(positions, pitch):
    origin = positions.min(axis=0)
    cells = np.floor((positions - origin) / pitch).astype(np.int64)
    keys, inverse = np.unique(cells, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    centers = origin + (keys + 0.5) * pitch
    d = np.linalg.norm(positions - centers[inverse], axis=1)
    # nearest point to each cell center, lowest index on ties
    order = np.lexsort((np.arange(len(d)), d, inverse))
    first = np.ones(len(order), dtype=bool)
    first[1:] = inverse[order][1:] != inverse[order][:-1]
    seeds = order[first]
    return seeds, inverse


def segment(cloud, params: SupervoxelParams = None, point_descriptors=None) -> Segmentation:
    """Oversegment ``cloud`` into supervoxels with an adjacency graph.

    ``point_descriptors`` may carry a precomputed ``(fpfh, valid)`` pair from
    :func:`features.point_fpfh` computed with ``params.fpfh_radius``.
    """
    params = params or SupervoxelParams()
    params.validate()
    n = len(cloud)
    if n == 0:
        raise ValueError("cannot segment an empty point cloud")
    positions = cloud.positions
    lab = rgb_to_cielab(cloud.colors)
    if point_descriptors is None:
        point_descriptors = point_fpfh(positions, cloud.normals, params.fpfh_radius)
    desc = point_descriptors[0]

    seeds, labels = _seed_points(positions, params.seed_radius)
    weights = (params.color_weight, params.spatial_weight, params.shape_weight,
               params.color_scale, params.seed_radius)
    labels = _kernels.cluster(
        np.ascontiguousarray(positions), np.ascontiguousarray(lab), np.ascontiguousarray(desc),
        seeds.astype(np.int64), labels.astype(np.int64), weights,
        params.seed_radius * np.sqrt(3), params.max_iterations,
    )

    k = int(labels.max()) + 1
    counts = np.bincount(labels, minlength=k)
    members = np.split(np.argsort(labels, kind="stable"), np.cumsum(counts)[:-1])

    def means(values):
        return np.column_stack([np.bincount(labels, values[:, j], minlength=k) for j in range(3)]) / counts[:, None]

    c_pos, c_col, c_nrm = means(positions), means(cloud.colors), means(cloud.normals)
    norms = np.linalg.norm(c_nrm, axis=1, keepdims=True)
    c_nrm = np.where(norms > 0, c_nrm / np.where(norms > 0, norms, 1.0), [0.0, 0.0, 1.0])
    supervoxels = [Supervoxel(i, m, Point(c_pos[i], c_col[i], c_nrm[i]), set())
                   for i, m in enumerate(members)]

    pairs = cKDTree(positions).query_pairs(params.voxel_resolution, output_type="ndarray")
    if len(pairs):
        a, b = labels[pairs[:, 0]], labels[pairs[:, 1]]
        cross = a != b
        edges = np.unique(np.sort(np.column_stack([a[cross], b[cross]]), axis=1), axis=0)
        for i, j in edges:
            supervoxels[i].neighbors.add(int(j))
            supervoxels[j].neighbors.add(int(i))
    return Segmentation(supervoxels, labels)
