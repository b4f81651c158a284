"""ASCII PLY export of point clouds and per-point scalar maps."""

from __future__ import annotations

from pathlib import Path

import numpy as np

BLACK_YELLOW = ((0.0, 0.0, 0.0), (1.0, 1.0, 0.0))
BLUE_RED = ((0.0, 0.0, 1.0), (1.0, 0.0, 0.0))


def ramp(values, lo: float, hi: float, colors=BLACK_YELLOW) -> np.ndarray:
    """Linear color ramp of ``values`` over ``[lo, hi]``, RGB in [0, 1]."""
    t = np.clip((np.asarray(values, dtype=float) - lo) / (hi - lo), 0.0, 1.0)[:, None]
    a, b = np.asarray(colors[0]), np.asarray(colors[1])
    return (1 - t) * a + t * b


def to_bytes8(colors) -> np.ndarray:
    return np.clip(np.rint(np.asarray(colors, dtype=float) * 255), 0, 255).astype(np.uint8)


def write_ply(path, positions, normals, colors) -> Path:
    """Write ``x y z nx ny nz red green blue`` vertices, colors given in [0, 1]."""
    path = Path(path)
    positions = np.asarray(positions, dtype=float)
    normals = np.asarray(normals, dtype=float)
    rgb = to_bytes8(colors)
    header = "\n".join([
        "ply", "format ascii 1.0", f"element vertex {len(positions)}",
        "property float x", "property float y", "property float z",
        "property float nx", "property float ny", "property float nz",
        "property uchar red", "property uchar green", "property uchar blue",
        "end_header",
    ])
    lines = [header]
    for p, n, c in zip(positions, normals, rgb):
        lines.append(f"{p[0]:.6f} {p[1]:.6f} {p[2]:.6f} {n[0]:.6f} {n[1]:.6f} {n[2]:.6f} {c[0]} {c[1]} {c[2]}")
    path.write_text("\n".join(lines) + "\n")
    return path


def read_ply(path):
    """Read a file written by :func:`write_ply`; returns positions, normals and 8-bit colors."""
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != "ply":
        raise ValueError(f"{path}: not a PLY file")
    end = lines.index("end_header")
    n = next(int(x.split()[-1]) for x in lines[:end] if x.startswith("element vertex"))
    data = np.array([x.split() for x in lines[end + 1:end + 1 + n]], dtype=float).reshape(n, 9)
    return data[:, :3], data[:, 3:6], data[:, 6:].astype(np.uint8)


def write_cloud(path, cloud) -> Path:
    return write_ply(path, cloud.positions, cloud.normals, cloud.colors)


def write_point_map(path, cloud, labels, values, lo=0.0, hi=1.0, colors=BLACK_YELLOW) -> Path:
    """Color every point by the value of its supervoxel."""
    per_point = np.asarray(values, dtype=float)[np.asarray(labels)]
    return write_ply(path, cloud.positions, cloud.normals, ramp(per_point, lo, hi, colors))


def write_segmentation(path, cloud, labels, seed: int = 0) -> Path:
    """Debug export with one random color per supervoxel."""
    labels = np.asarray(labels)
    palette = np.random.default_rng(seed).random((int(labels.max()) + 1, 3))
    return write_ply(path, cloud.positions, cloud.normals, palette[labels])
