"""Compiled inner loops for per-point descriptors and supervoxel assignment."""

import math

import numpy as np
from numba import njit

N_BINS = 11
N_DESC = 33


@njit(cache=True)
def _bin(value, lo, hi, nbins):
    k = int(math.floor((value - lo) / (hi - lo) * nbins))
    if k < 0:
        return 0
    if k >= nbins:
        return nbins - 1
    return k


@njit(cache=True)
def pair_bins(P, Nm, s, t):
    """Bin indices (0..32) of the alpha, phi, theta angles of the pair s -> t."""
    dx, dy, dz = P[t, 0] - P[s, 0], P[t, 1] - P[s, 1], P[t, 2] - P[s, 2]
    norm = math.sqrt(dx * dx + dy * dy + dz * dz)
    dx, dy, dz = dx / norm, dy / norm, dz / norm
    ux, uy, uz = Nm[s, 0], Nm[s, 1], Nm[s, 2]
    nx, ny, nz = Nm[t, 0], Nm[t, 1], Nm[t, 2]
    vx, vy, vz = uy * dz - uz * dy, uz * dx - ux * dz, ux * dy - uy * dx
    wx, wy, wz = uy * vz - uz * vy, uz * vx - ux * vz, ux * vy - uy * vx
    alpha = vx * nx + vy * ny + vz * nz
    phi = ux * dx + uy * dy + uz * dz
    y = wx * nx + wy * ny + wz * nz
    if abs(y) < 1e-12:
        y = 0.0
    theta = math.atan2(y, ux * nx + uy * ny + uz * nz)
    return (_bin(alpha, -1.0, 1.0, N_BINS),
            N_BINS + _bin(phi, -1.0, 1.0, N_BINS),
            2 * N_BINS + _bin(theta, -math.pi, math.pi, N_BINS))


@njit(cache=True)
def _normalize_rows(h):
    for i in range(h.shape[0]):
        for b in range(3):
            s = 0.0
            for j in range(b * N_BINS, (b + 1) * N_BINS):
                s += h[i, j]
            if s > 0:
                for j in range(b * N_BINS, (b + 1) * N_BINS):
                    h[i, j] /= s


@njit(cache=True)
def fpfh_from_pairs(positions, normals, pairs):
    """FPFH of every point given the undirected neighbor pairs (i < j)."""
    n = positions.shape[0]
    m = pairs.shape[0]
    spfh = np.zeros((n, N_DESC))
    k = np.zeros(n, dtype=np.int64)
    dist = np.empty(m)
    for e in range(m):
        i, j = pairs[e, 0], pairs[e, 1]
        dx = positions[j, 0] - positions[i, 0]
        dy = positions[j, 1] - positions[i, 1]
        dz = positions[j, 2] - positions[i, 2]
        dist[e] = math.sqrt(dx * dx + dy * dy + dz * dz)
        if dist[e] == 0.0:
            continue
        a, f, th = pair_bins(positions, normals, i, j)
        spfh[i, a] += 1.0
        spfh[i, f] += 1.0
        spfh[i, th] += 1.0
        k[i] += 1
        a, f, th = pair_bins(positions, normals, j, i)
        spfh[j, a] += 1.0
        spfh[j, f] += 1.0
        spfh[j, th] += 1.0
        k[j] += 1
    _normalize_rows(spfh)
    out = spfh.copy()
    for e in range(m):
        if dist[e] == 0.0:
            continue
        i, j = pairs[e, 0], pairs[e, 1]
        wi = 1.0 / (k[i] * dist[e])
        wj = 1.0 / (k[j] * dist[e])
        for b in range(N_DESC):
            out[i, b] += wi * spfh[j, b]
            out[j, b] += wj * spfh[i, b]
    _normalize_rows(out)
    return out, k


@njit(cache=True)
def _grid_index(c_pos, origin, cell, dims):
    k = c_pos.shape[0]
    keys = np.empty(k, dtype=np.int64)
    for c in range(k):
        ix = int(math.floor((c_pos[c, 0] - origin[0]) / cell))
        iy = int(math.floor((c_pos[c, 1] - origin[1]) / cell))
        iz = int(math.floor((c_pos[c, 2] - origin[2]) / cell))
        ix = min(max(ix, 0), dims[0] - 1)
        iy = min(max(iy, 0), dims[1] - 1)
        iz = min(max(iz, 0), dims[2] - 1)
        keys[c] = (ix * dims[1] + iy) * dims[2] + iz
    order = np.argsort(keys, kind="mergesort")
    ncell = dims[0] * dims[1] * dims[2]
    start = np.zeros(ncell + 1, dtype=np.int64)
    for c in range(k):
        start[keys[c] + 1] += 1
    for q in range(ncell):
        start[q + 1] += start[q]
    return order, start


@njit(cache=True)
def _assign(positions, lab, desc, c_pos, c_lab, c_desc, labels, weights, reach):
    w_color, w_space, w_shape, color_scale, seed_radius = weights
    n = positions.shape[0]
    nd = desc.shape[1]
    origin = np.empty(3)
    dims = np.empty(3, dtype=np.int64)
    for a in range(3):
        lo = positions[0, a]
        hi = positions[0, a]
        for i in range(n):
            lo = min(lo, positions[i, a])
            hi = max(hi, positions[i, a])
        origin[a] = lo
        dims[a] = int(math.floor((hi - lo) / reach)) + 1
    order, start = _grid_index(c_pos, origin, reach, dims)
    sc = w_color / (color_scale * color_scale)
    ss = w_space / (3.0 * seed_radius * seed_radius)
    r2 = reach * reach
    out = labels.copy()
    for p in range(n):
        cx = int(math.floor((positions[p, 0] - origin[0]) / reach))
        cy = int(math.floor((positions[p, 1] - origin[1]) / reach))
        cz = int(math.floor((positions[p, 2] - origin[2]) / reach))
        best = np.inf
        for gx in range(max(cx - 1, 0), min(cx + 2, dims[0])):
            for gy in range(max(cy - 1, 0), min(cy + 2, dims[1])):
                for gz in range(max(cz - 1, 0), min(cz + 2, dims[2])):
                    key = (gx * dims[1] + gy) * dims[2] + gz
                    for q in range(start[key], start[key + 1]):
                        c = order[q]
                        dx = positions[p, 0] - c_pos[c, 0]
                        dy = positions[p, 1] - c_pos[c, 1]
                        dz = positions[p, 2] - c_pos[c, 2]
                        ds2 = dx * dx + dy * dy + dz * dz
                        if ds2 > r2:
                            continue
                        dc = 0.0
                        for j in range(3):
                            diff = lab[p, j] - c_lab[c, j]
                            dc += diff * diff
                        inter = 0.0
                        s1 = 0.0
                        s2 = 0.0
                        for j in range(nd):
                            a = desc[p, j]
                            b = c_desc[c, j]
                            inter += a if a < b else b
                            s1 += a
                            s2 += b
                        total = s1 if s1 > s2 else s2
                        df = 1.0 - inter / total if total > 0 else 1.0
                        d = math.sqrt(sc * dc + ss * ds2 + w_shape * df * df)
                        if d < best or (d == best and c < out[p]):
                            best = d
                            out[p] = c
    return out


@njit(cache=True)
def _compact_means(labels, k, positions, lab, desc):
    """Drop empty clusters, relabel densely, and return the cluster means."""
    n = labels.shape[0]
    counts = np.zeros(k, dtype=np.int64)
    for i in range(n):
        counts[labels[i]] += 1
    remap = np.full(k, -1, dtype=np.int64)
    m = 0
    for c in range(k):
        if counts[c] > 0:
            remap[c] = m
            m += 1
    new = np.empty(n, dtype=np.int64)
    c_pos = np.zeros((m, 3))
    c_lab = np.zeros((m, 3))
    c_desc = np.zeros((m, desc.shape[1]))
    cnt = np.zeros(m)
    for i in range(n):
        c = remap[labels[i]]
        new[i] = c
        cnt[c] += 1.0
        for j in range(3):
            c_pos[c, j] += positions[i, j]
            c_lab[c, j] += lab[i, j]
        for j in range(desc.shape[1]):
            c_desc[c, j] += desc[i, j]
    for c in range(m):
        c_pos[c] /= cnt[c]
        c_lab[c] /= cnt[c]
        c_desc[c] /= cnt[c]
    return new, c_pos, c_lab, c_desc


@njit(cache=True)
def cluster(positions, lab, desc, seeds, labels, weights, reach, max_iterations):
    """Iterate assignment and centroid refinement until the labels stop changing.

    Ties go to the lowest centroid id; a point with no centroid in reach keeps
    its label. ``weights`` is (color, spatial, shape, color_scale, seed_radius).
    """
    c_pos = positions[seeds].copy()
    c_lab = lab[seeds].copy()
    c_desc = desc[seeds].copy()
    for _ in range(max_iterations):
        k = c_pos.shape[0]
        new = _assign(positions, lab, desc, c_pos, c_lab, c_desc, labels, weights, reach)
        new, c_pos, c_lab, c_desc = _compact_means(new, k, positions, lab, desc)
        changed = c_pos.shape[0] != k
        if not changed:
            for i in range(labels.shape[0]):
                if new[i] != labels[i]:
                    changed = True
                    break
        labels = new
        if not changed:
            break
    return labels
