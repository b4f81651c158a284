"""Color and shape descriptors of supervoxels.

The feature of a supervoxel is 48 values: a 15-bin CIELab histogram
(5 bins for each of L, a, b) followed by a 33-bin FPFH (11 bins for each of
the three pair angles). Each 5-bin and each 11-bin block sums to one.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np
from scipy import sparse
from scipy.spatial import cKDTree

from . import _kernels

COLOR_BINS = 5
ANGLE_BINS = 11
COLOR_DIM = 3 * COLOR_BINS
FPFH_DIM = 3 * ANGLE_BINS
FEATURE_DIM = COLOR_DIM + FPFH_DIM

LAB_RANGES = ((0.0, 100.0), (-110.0, 110.0), (-110.0, 110.0))
ANGLE_RANGES = ((-1.0, 1.0), (-1.0, 1.0), (-np.pi, np.pi))
ANGLE_EPS = 1e-12

# sRGB (D65) to XYZ
_RGB2XYZ = np.array([
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
])
_WHITE_D65 = np.array([0.95047, 1.0, 1.08883])


class IsolatedPointError(ValueError):
    """A query point has no neighbor within the FPFH radius."""


class PairAngles(NamedTuple):
    alpha: float
    phi: float
    theta: float


def rgb_to_cielab(rgb) -> np.ndarray:
    """Convert sRGB in [0, 1] to CIELab under the D65 white point.

    Accepts a single triple or an ``(n, 3)`` array.
    """
    rgb = np.clip(np.asarray(rgb, dtype=float), 0.0, 1.0)
    lin = np.where(rgb <= 0.04045, rgb / 12.92, ((rgb + 0.055) / 1.055) ** 2.4)
    xyz = lin @ _RGB2XYZ.T / _WHITE_D65
    eps = (6 / 29) ** 3
    f = np.where(xyz > eps, np.cbrt(xyz), xyz / (3 * (6 / 29) ** 2) + 4 / 29)
    fx, fy, fz = f[..., 0], f[..., 1], f[..., 2]
    return np.stack([116 * fy - 16, 500 * (fx - fy), 200 * (fy - fz)], axis=-1)


def _bin_index(values, lo, hi, nbins):
    idx = np.floor((np.asarray(values) - lo) / (hi - lo) * nbins).astype(int)
    return np.clip(idx, 0, nbins - 1)


def cielab_histogram_from_lab(lab) -> np.ndarray:
    lab = np.asarray(lab, dtype=float).reshape(-1, 3)
    if len(lab) == 0:
        raise ValueError("cannot build a color histogram of zero points")
    out = np.empty(COLOR_DIM)
    for c, (lo, hi) in enumerate(LAB_RANGES):
        counts = np.bincount(_bin_index(lab[:, c], lo, hi, COLOR_BINS), minlength=COLOR_BINS)
        out[c * COLOR_BINS:(c + 1) * COLOR_BINS] = counts / len(lab)
    return out


def cielab_histogram(colors) -> np.ndarray:
    """15-bin L||a||b histogram of RGB colors; each channel sums to 1."""
    return cielab_histogram_from_lab(rgb_to_cielab(colors))


def _angles(ps, ns, pt, nt):
    """Vectorized pair angles with the frame anchored at the source points."""
    d = pt - ps
    dhat = d / np.sqrt(np.einsum("...i,...i->...", d, d))[..., None]
    u = ns
    v = _cross(u, dhat)
    w = _cross(u, v)
    alpha = np.einsum("...i,...i->...", v, nt)
    phi = np.einsum("...i,...i->...", u, dhat)
    y = np.einsum("...i,...i->...", w, nt)
    # rounding noise around opposite normals must not flip theta between -pi and pi
    y = np.where(np.abs(y) < ANGLE_EPS, 0.0, y)
    theta = np.arctan2(y, np.einsum("...i,...i->...", u, nt))
    return alpha, phi, theta


def _cross(a, b):
    ax, ay, az = a[..., 0], a[..., 1], a[..., 2]
    bx, by, bz = b[..., 0], b[..., 1], b[..., 2]
    return np.stack([ay * bz - az * by, az * bx - ax * bz, ax * by - ay * bx], axis=-1)


def pair_angles(p_s, n_s, p_t, n_t) -> PairAngles:
    """Angles (alpha, phi, theta) between a source and a target oriented point."""
    p_s, p_t = np.asarray(p_s, dtype=float), np.asarray(p_t, dtype=float)
    if np.linalg.norm(p_t - p_s) == 0:
        raise ValueError("pair angles are undefined for coincident points")
    a, f, t = _angles(p_s, np.asarray(n_s, float), p_t, np.asarray(n_t, float))
    return PairAngles(float(a), float(f), float(t))


def _angle_bins(alpha, phi, theta):
    cols = []
    for k, (vals, (lo, hi)) in enumerate(zip((alpha, phi, theta), ANGLE_RANGES)):
        cols.append(_bin_index(vals, lo, hi, ANGLE_BINS) + k * ANGLE_BINS)
    return cols


def _normalize_blocks(hist, nblocks, width):
    hist = np.asarray(hist, dtype=float)
    shaped = hist.reshape(hist.shape[:-1] + (nblocks, width))
    sums = shaped.sum(axis=-1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        shaped = np.where(sums > 0, shaped / sums, 0.0)
    return shaped.reshape(hist.shape)


def point_fpfh(positions, normals, radius: float):
    """FPFH of every point of a cloud.

    Returns ``(descriptors, valid)`` where ``valid`` is False for points with
    no neighbor inside ``radius``; their descriptor rows are zero.
    """
    positions = np.ascontiguousarray(positions, dtype=float)
    normals = np.ascontiguousarray(normals, dtype=float)
    pairs = cKDTree(positions).query_pairs(radius, output_type="ndarray")
    desc, k = _kernels.fpfh_from_pairs(positions, normals, pairs.astype(np.int64).reshape(-1, 2))
    return desc, k > 0


def _spfh_at(positions, normals, tree, index, radius):
    nb = np.asarray(tree.query_ball_point(positions[index], radius), dtype=int)
    d = np.linalg.norm(positions[nb] - positions[index], axis=1)
    nb, d = nb[d > 0], d[d > 0]
    hist = np.zeros(FPFH_DIM)
    if len(nb):
        a, f, t = _angles(positions[index][None], normals[index][None], positions[nb], normals[nb])
        for cols in _angle_bins(a, f, t):
            np.add.at(hist, cols, 1.0)
    return _normalize_blocks(hist, 3, ANGLE_BINS), nb, d


def fpfh(cloud, query_index: int, radius: float) -> np.ndarray:
    """33-bin FPFH of a single point of ``cloud``."""
    pos, nrm = cloud.positions, cloud.normals
    tree = cKDTree(pos)
    own, nb, d = _spfh_at(pos, nrm, tree, query_index, radius)
    if len(nb) == 0:
        raise IsolatedPointError(f"point {query_index} has no neighbor within {radius} m")
    acc = np.zeros(FPFH_DIM)
    for j, dj in zip(nb, d):
        acc += _spfh_at(pos, nrm, tree, j, radius)[0] / dj
    return _normalize_blocks(own + acc / len(nb), 3, ANGLE_BINS)


def centroid_spfh(cloud, centroid, normal, radius: float) -> np.ndarray:
    """SPFH of a virtual oriented point against the cloud points around it."""
    tree = cKDTree(cloud.positions)
    nb = np.asarray(tree.query_ball_point(centroid, radius), dtype=int)
    d = np.linalg.norm(cloud.positions[nb] - centroid, axis=1)
    nb = nb[d > 0]
    if len(nb) == 0:
        raise IsolatedPointError("supervoxel centroid has no neighbor within the FPFH radius")
    normal = np.asarray(normal, float)
    normal = normal / max(np.linalg.norm(normal), 1e-12)
    a, f, t = _angles(np.asarray(centroid)[None], normal[None], cloud.positions[nb], cloud.normals[nb])
    hist = np.zeros(FPFH_DIM)
    for cols in _angle_bins(a, f, t):
        np.add.at(hist, cols, 1.0)
    return _normalize_blocks(hist, 3, ANGLE_BINS)


class FeatureExtractor:
    """Caches per-point Lab colors and FPFH of one cloud for repeated extraction."""

    def __init__(self, cloud, radius: float, point_descriptors=None):
        self.cloud = cloud
        self.radius = radius
        self.lab = rgb_to_cielab(cloud.colors)
        if point_descriptors is None:
            point_descriptors = point_fpfh(cloud.positions, cloud.normals, radius)
        self.fpfh, self.valid = point_descriptors

    def supervoxel_feature(self, sv, neighbors=()) -> np.ndarray:
        members = np.asarray(sv.member_indices)
        if members.size == 0:
            raise ValueError("supervoxel has no points")
        color = cielab_histogram_from_lab(self.lab[members])
        region = np.concatenate([members] + [np.asarray(n.member_indices) for n in neighbors])
        region = region[self.valid[region]]
        if region.size:
            shape = _normalize_blocks(self.fpfh[region].mean(axis=0), 3, ANGLE_BINS)
        else:
            pos = self.cloud.positions[members]
            nrm = self.cloud.normals[members]
            shape = centroid_spfh(self.cloud, pos.mean(axis=0), nrm.mean(axis=0), self.radius)
        return np.concatenate([color, shape])

    def all_features(self, supervoxels) -> np.ndarray:
        """Features of every supervoxel of a segmentation, shape ``(len, 48)``."""
        k = len(supervoxels)
        if k == 0:
            return np.empty((0, FEATURE_DIM))
        n = len(self.cloud)
        owner = np.full(n, -1)
        for i, sv in enumerate(supervoxels):
            owner[np.asarray(sv.member_indices)] = i
        if np.any(owner < 0):
            # partial cover of the cloud: fall back to the per-supervoxel path
            by_id = {sv.id: sv for sv in supervoxels}
            return np.array([self.supervoxel_feature(sv, [by_id[j] for j in sorted(sv.neighbors)])
                             for sv in supervoxels])
        counts = np.bincount(owner, minlength=k).astype(float)
        color = np.zeros((k, COLOR_DIM))
        for c, (lo, hi) in enumerate(LAB_RANGES):
            bins = _bin_index(self.lab[:, c], lo, hi, COLOR_BINS) + c * COLOR_BINS
            color += np.bincount(owner * COLOR_DIM + bins, minlength=k * COLOR_DIM).reshape(k, COLOR_DIM)
        color /= counts[:, None]

        member = sparse.csr_matrix((self.valid.astype(float), (owner, np.arange(n))), shape=(k, n))
        sums = member @ self.fpfh
        nvalid = np.asarray(member.sum(axis=1)).ravel()
        index = {sv.id: i for i, sv in enumerate(supervoxels)}
        rows, cols = [], []
        for i, sv in enumerate(supervoxels):
            rows.append(i)
            cols.append(i)
            for j in sv.neighbors:
                if j in index:
                    rows.append(i)
                    cols.append(index[j])
        region = sparse.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(k, k))
        shape_sum = region @ sums
        shape_cnt = region @ nvalid
        shape = np.zeros((k, FPFH_DIM))
        ok = shape_cnt > 0
        shape[ok] = _normalize_blocks(shape_sum[ok] / shape_cnt[ok, None], 3, ANGLE_BINS)
        for i in np.flatnonzero(~ok):
            m = np.asarray(supervoxels[i].member_indices)
            shape[i] = centroid_spfh(self.cloud, self.cloud.positions[m].mean(axis=0),
                                     self.cloud.normals[m].mean(axis=0), self.radius)
        return np.hstack([color, shape])


def supervoxel_feature(sv, neighbors, cloud, radius: float) -> np.ndarray:
    """48-dim feature: Lab histogram of ``sv`` and mean FPFH over ``sv`` and its neighbors."""
    return FeatureExtractor(cloud, radius).supervoxel_feature(sv, neighbors)
