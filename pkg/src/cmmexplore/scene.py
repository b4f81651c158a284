"""Procedural tabletop scenes rendered as colored, normal-equipped point clouds.

A scene is a flat rectangular table plus a list of primitive objects (spheres
and boxes). Fixed objects belong to the background and keep the same pose for
every seed; moveable objects are re-posed from the seed. The ground truth keeps
the provenance of every point, which serves as the expert oracle.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np

TABLE_ID = -1


class ConfigError(ValueError):
    """Raised for an invalid scene or experiment configuration."""


class Point(NamedTuple):
    position: np.ndarray
    color: np.ndarray
    normal: np.ndarray


@dataclass
class PointCloud:
    positions: np.ndarray
    colors: np.ndarray
    normals: np.ndarray

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float).reshape(-1, 3)
        self.colors = np.asarray(self.colors, dtype=float).reshape(-1, 3)
        self.normals = np.asarray(self.normals, dtype=float).reshape(-1, 3)
        n = len(self.positions)
        if len(self.colors) != n or len(self.normals) != n:
            raise ValueError("positions, colors and normals must have the same length")

    def __len__(self) -> int:
        return len(self.positions)

    def __getitem__(self, i: int) -> Point:
        return Point(self.positions[i], self.colors[i], self.normals[i])

    def subset(self, idx) -> "PointCloud":
        return PointCloud(self.positions[idx], self.colors[idx], self.normals[idx])

    def copy(self) -> "PointCloud":
        return PointCloud(self.positions.copy(), self.colors.copy(), self.normals.copy())

    @staticmethod
    def concatenate(clouds: Sequence["PointCloud"]) -> "PointCloud":
        clouds = list(clouds)
        if not clouds:
            return PointCloud(np.empty((0, 3)), np.empty((0, 3)), np.empty((0, 3)))
        return PointCloud(
            np.concatenate([c.positions for c in clouds]),
            np.concatenate([c.colors for c in clouds]),
            np.concatenate([c.normals for c in clouds]),
        )

    def tobytes(self) -> bytes:
        return self.positions.tobytes() + self.colors.tobytes() + self.normals.tobytes()


@dataclass
class TableSpec:
    extent: tuple = (0.6, 0.6)
    color: tuple = (0.8, 0.55, 0.25)
    # per-point colors are drawn uniformly between color and color_alt
    color_alt: Optional[tuple] = None


@dataclass
class ObjectSpec:
    shape: str
    size: tuple
    color: tuple
    moveable: bool = True
    color_alt: Optional[tuple] = None
    # fixed (x, y) on the table; only honoured for non-moveable objects
    position: Optional[tuple] = None
    name: str = ""

    def dims(self) -> np.ndarray:
        """Full extent along x, y, z before rotation."""
        if self.shape == "sphere":
            d = float(self.size[0])
            return np.array([d, d, d])
        return np.asarray(self.size, dtype=float)

    def footprint_radius(self) -> float:
        d = self.dims()
        if self.shape == "sphere":
            return d[0] / 2
        return float(np.hypot(d[0], d[1]) / 2)

    def label(self, index: int) -> str:
        return self.name or f"object[{index}] ({self.shape})"


@dataclass
class PoseJitter:
    # margin kept between object footprints and the table edge, meters
    margin: float = 0.02
    max_yaw: float = np.pi


@dataclass
class SceneConfig:
    table: TableSpec = field(default_factory=TableSpec)
    objects: list = field(default_factory=list)
    sampling_density: float = 3000.0
    pose_jitter: PoseJitter = field(default_factory=PoseJitter)
    noise_sigma: float = 0.0
    # seed for the background (table sampling and fixed-object placement)
    layout_seed: int = 0

    def validate(self, min_object_size: float = 0.0) -> None:
        if self.sampling_density <= 0:
            raise ConfigError("scene.sampling_density must be > 0")
        if self.noise_sigma < 0:
            raise ConfigError("scene.noise_sigma must be >= 0")
        if len(self.table.extent) != 2 or min(self.table.extent) <= 0:
            raise ConfigError("scene.table.extent must be two positive lengths")
        for i, obj in enumerate(self.objects):
            if obj.shape not in ("sphere", "box"):
                raise ConfigError(f"{obj.label(i)}: unknown shape {obj.shape!r}")
            expected = 1 if obj.shape == "sphere" else 3
            if len(obj.size) != expected:
                raise ConfigError(f"{obj.label(i)}: size needs {expected} value(s)")
            if min(obj.dims()) <= min_object_size:
                raise ConfigError(
                    f"{obj.label(i)}: smallest dimension {min(obj.dims()):.3f} m must exceed "
                    f"the supervoxel seed radius {min_object_size:.3f} m"
                )
            for c in (obj.color, obj.color_alt):
                if c is not None and (len(c) != 3 or min(c) < 0 or max(c) > 1):
                    raise ConfigError(f"{obj.label(i)}: colors must be RGB triples in [0, 1]")


@dataclass
class Placement:
    object_id: int
    center: np.ndarray
    yaw: float


@dataclass
class GroundTruth:
    background_cloud: PointCloud
    # 1 = background (table or fixed object), 0 = moveable object point
    membership: np.ndarray
    object_ids: np.ndarray
    placements: list
    moveable: list

    def object_points(self, object_id: int) -> np.ndarray:
        return np.flatnonzero(self.object_ids == object_id)


def _mix_colors(rng, n, color, color_alt):
    base = np.asarray(color, dtype=float)
    if color_alt is None:
        return np.tile(base, (n, 1))
    t = rng.random((n, 1))
    return base + t * (np.asarray(color_alt, dtype=float) - base)


def _yaw_matrix(yaw):
    c, s = np.cos(yaw), np.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _sample_table(rng, table: TableSpec, density):
    ex, ey = table.extent
    n = max(1, int(round(ex * ey * density)))
    xy = (rng.random((n, 2)) - 0.5) * np.array([ex, ey])
    pos = np.column_stack([xy, np.zeros(n)])
    normals = np.tile([0.0, 0.0, 1.0], (n, 1))
    colors = _mix_colors(rng, n, table.color, table.color_alt)
    return PointCloud(pos, colors, normals)


def _sample_sphere(rng, obj: ObjectSpec, density):
    r = obj.dims()[0] / 2
    n = max(1, int(round(4 * np.pi * r * r * density)))
    v = rng.standard_normal((n, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return v * r, v, _mix_colors(rng, n, obj.color, obj.color_alt)


def _sample_box(rng, obj: ObjectSpec, density):
    sx, sy, sz = obj.dims()
    h = np.array([sx, sy, sz]) / 2
    # faces: +x, -x, +y, -y, +z (bottom face rests on the table)
    faces = [(0, 1.0), (0, -1.0), (1, 1.0), (1, -1.0), (2, 1.0)]
    pos, nrm = [], []
    for axis, sign in faces:
        a, b = [k for k in range(3) if k != axis]
        area = (2 * h[a]) * (2 * h[b])
        n = max(1, int(round(area * density)))
        p = np.empty((n, 3))
        p[:, axis] = sign * h[axis]
        p[:, a] = (rng.random(n) - 0.5) * 2 * h[a]
        p[:, b] = (rng.random(n) - 0.5) * 2 * h[b]
        nn = np.zeros((n, 3))
        nn[:, axis] = sign
        pos.append(p)
        nrm.append(nn)
    pos = np.concatenate(pos)
    nrm = np.concatenate(nrm)
    return pos, nrm, _mix_colors(rng, len(pos), obj.color, obj.color_alt)


def _render_object(rng, obj: ObjectSpec, placement: Placement, density):
    if obj.shape == "sphere":
        pos, nrm, col = _sample_sphere(rng, obj, density)
    else:
        pos, nrm, col = _sample_box(rng, obj, density)
    rot = _yaw_matrix(placement.yaw)
    return PointCloud(pos @ rot.T + placement.center, col, nrm @ rot.T)


def _place(rng, cfg: SceneConfig, idx, obj, taken, max_retries=100):
    ex, ey = cfg.table.extent
    rad = obj.footprint_radius()
    lim = np.array([ex / 2, ey / 2]) - rad - cfg.pose_jitter.margin
    if np.any(lim < 0):
        raise ConfigError(f"{obj.label(idx)} does not fit on the table")
    for _ in range(max_retries):
        xy = (rng.random(2) * 2 - 1) * lim
        yaw = float(rng.uniform(-cfg.pose_jitter.max_yaw, cfg.pose_jitter.max_yaw))
        if all(np.hypot(*(xy - c)) > rad + r + cfg.pose_jitter.margin for c, r in taken):
            return xy, yaw
    raise ConfigError(f"could not place {obj.label(idx)} without interpenetration "
                      f"after {max_retries} attempts")


def _placement(obj, idx, xy, yaw):
    z = obj.dims()[2] / 2
    return Placement(idx, np.array([xy[0], xy[1], z]), yaw)


def _background(cfg: SceneConfig):
    """Table plus fixed objects; depends only on the config, never on the pose seed."""
    rng = np.random.default_rng(cfg.layout_seed)
    parts = [_sample_table(rng, cfg.table, cfg.sampling_density)]
    ids = [np.full(len(parts[0]), TABLE_ID)]
    placements, taken = {}, []
    for i, obj in enumerate(cfg.objects):
        if obj.moveable:
            continue
        if obj.position is not None:
            xy, yaw = np.asarray(obj.position, dtype=float), 0.0
        else:
            xy, yaw = _place(rng, cfg, i, obj, taken)
        taken.append((xy, obj.footprint_radius()))
        placements[i] = _placement(obj, i, xy, yaw)
        pc = _render_object(rng, obj, placements[i], cfg.sampling_density)
        parts.append(pc)
        ids.append(np.full(len(pc), i))
    return PointCloud.concatenate(parts), np.concatenate(ids), placements, taken


def _under_box(positions, obj, placement):
    """Mask of table points hidden beneath a box resting on the table."""
    local = (positions - placement.center) @ _yaw_matrix(placement.yaw)
    h = obj.dims() / 2
    return (np.abs(local[:, 0]) < h[0]) & (np.abs(local[:, 1]) < h[1])


def generate_scene(config: SceneConfig, seed: int, min_object_size: float = 0.0):
    """Render the scene for one pose seed.

    Returns ``(cloud, ground_truth)``. Moveable objects get a random position
    and yaw drawn by rejection sampling so that footprints never overlap.
    """
    config.validate(min_object_size)
    bg, bg_ids, placements, taken = _background(config)
    rng = np.random.default_rng(seed)

    keep = np.ones(len(bg), dtype=bool)
    parts, ids = [], []
    for i, obj in enumerate(config.objects):
        if not obj.moveable:
            continue
        xy, yaw = _place(rng, config, i, obj, taken)
        taken.append((xy, obj.footprint_radius()))
        placements[i] = _placement(obj, i, xy, yaw)
        pc = _render_object(rng, obj, placements[i], config.sampling_density)
        parts.append(pc)
        ids.append(np.full(len(pc), i))
        if obj.shape == "box":
            keep &= ~((bg_ids == TABLE_ID) & _under_box(bg.positions, obj, placements[i]))

    cloud = PointCloud.concatenate([bg.subset(keep)] + parts)
    object_ids = np.concatenate([bg_ids[keep]] + ids) if ids else bg_ids[keep]
    if config.noise_sigma > 0:
        cloud.positions = cloud.positions + rng.normal(0, config.noise_sigma, cloud.positions.shape)

    moveable = [obj.moveable for obj in config.objects]
    membership = np.ones(len(cloud), dtype=np.int8)
    for i, m in enumerate(moveable):
        if m:
            membership[object_ids == i] = 0
    gt = GroundTruth(bg, membership, object_ids,
                     [placements[k] for k in sorted(placements)], moveable)
    return cloud, gt


def oracle_label(member_indices, gt: GroundTruth, threshold: float = 0.5) -> int:
    """Expert label of a supervoxel: 1 when most of its points are moveable-object points."""
    idx = np.asarray(member_indices)
    if idx.size == 0:
        raise ValueError("supervoxel has no points")
    frac = np.mean(gt.membership[idx] == 0)
    return int(frac > threshold)


def parent_object(member_indices, gt: GroundTruth) -> int:
    """Most frequent moveable object among the members, or TABLE_ID if none."""
    ids = gt.object_ids[np.asarray(member_indices)]
    ids = ids[np.array([i >= 0 and gt.moveable[i] for i in ids], dtype=bool)]
    if ids.size == 0:
        return TABLE_ID
    vals, counts = np.unique(ids, return_counts=True)
    return int(vals[np.argmax(counts)])


def displace_object(cloud: PointCloud, gt: GroundTruth, object_id: int, translation) -> PointCloud:
    """Rigidly translate one moveable object's points; everything else is untouched."""
    if not (0 <= object_id < len(gt.moveable)) or not gt.moveable[object_id]:
        raise KeyError(f"object {object_id} is not a moveable object of this scene")
    out = cloud.copy()
    mask = gt.object_ids == object_id
    out.positions[mask] += np.asarray(translation, dtype=float)
    return out
