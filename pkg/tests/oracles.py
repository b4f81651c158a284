"""Deliberately naive reference implementations used as test oracles.

Nothing here imports the package's numerical code; each function follows the
textbook definition with plain loops so that agreement is meaningful.
"""

import math

import numpy as np
from scipy import integrate, special
from scipy.stats import multivariate_normal

# sRGB primaries to XYZ and the D65 reference white, as published with the sRGB standard
RGB2XYZ = [
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
]
WHITE = (0.95047, 1.0, 1.08883)


def lab_of(rgb):
    lin = []
    for c in rgb:
        lin.append(c / 12.92 if c <= 0.04045 else ((c + 0.055) / 1.055) ** 2.4)
    xyz = [sum(RGB2XYZ[i][j] * lin[j] for j in range(3)) / WHITE[i] for i in range(3)]

    def f(t):
        d = 6.0 / 29.0
        return t ** (1.0 / 3.0) if t > d ** 3 else t / (3 * d * d) + 4.0 / 29.0

    fx, fy, fz = (f(t) for t in xyz)
    return (116 * fy - 16, 500 * (fx - fy), 200 * (fy - fz))


def lab_histogram(colors):
    ranges = ((0.0, 100.0), (-110.0, 110.0), (-110.0, 110.0))
    hist = [0.0] * 15
    for rgb in colors:
        lab = lab_of(rgb)
        for c in range(3):
            lo, hi = ranges[c]
            k = int(math.floor((lab[c] - lo) / (hi - lo) * 5))
            k = min(max(k, 0), 4)
            hist[c * 5 + k] += 1
    return np.array(hist) / len(colors)


def angles(ps, ns, pt, nt):
    d = np.array(pt, float) - np.array(ps, float)
    d = d / math.sqrt(float(d @ d))
    u = np.array(ns, float)
    v = np.cross(u, d)
    w = np.cross(u, v)
    nt = np.array(nt, float)
    return float(v @ nt), float(u @ d), math.atan2(float(w @ nt), float(u @ nt))


def _bin(x, lo, hi):
    return min(max(int(math.floor((x - lo) / (hi - lo) * 11)), 0), 10)


def _normalize(h):
    h = np.array(h, float)
    for b in range(3):
        s = h[b * 11:(b + 1) * 11].sum()
        if s > 0:
            h[b * 11:(b + 1) * 11] /= s
    return h


def neighbors(positions, q, radius):
    out = []
    for j in range(len(positions)):
        d = math.dist(positions[q], positions[j])
        if 0 < d <= radius:
            out.append((j, d))
    return out


def spfh(positions, normals, q, radius):
    h = [0.0] * 33
    for j, _ in neighbors(positions, q, radius):
        a, f, t = angles(positions[q], normals[q], positions[j], normals[j])
        h[_bin(a, -1, 1)] += 1
        h[11 + _bin(f, -1, 1)] += 1
        h[22 + _bin(t, -math.pi, math.pi)] += 1
    return _normalize(h)


def fpfh(positions, normals, q, radius):
    nb = neighbors(positions, q, radius)
    acc = np.zeros(33)
    for j, d in nb:
        acc += spfh(positions, normals, j, radius) / d
    return _normalize(spfh(positions, normals, q, radius) + acc / len(nb))


def gmm_density(x, weights, means, covs):
    return sum(w * multivariate_normal(m, c).pdf(x) for w, m, c in zip(weights, means, covs))


def class_probability(x, model1, model0):
    g1 = gmm_density(x, *model1) if model1[0] else 0.0
    g0 = gmm_density(x, *model0) if model0[0] else 0.0
    return (1 + g1) / (2 + g1 + g0)


def membership(x, weights, means, covs):
    terms = [w * multivariate_normal(m, c).pdf(x) for w, m, c in zip(weights, means, covs)]
    total = sum(terms)
    return [t / total for t in terms]


def loglikelihood(samples, weights, means, covs):
    return sum(math.log(max(gmm_density(s, weights, means, covs), 1e-300)) for s in samples)


def soft_confusion(prob, delta):
    tp = tn = fp = fn = 0.0
    for p, d in zip(prob, delta):
        tp += p * (1 - d)
        tn += (1 - p) * d
        fp += p * d
        fn += (1 - p) * (1 - d)
    return tp, tn, fp, fn


def f_pdf(x, d1, d2):
    if x <= 0:
        return 0.0
    logc = (special.gammaln((d1 + d2) / 2) - special.gammaln(d1 / 2) - special.gammaln(d2 / 2)
            + (d1 / 2) * math.log(d1 / d2))
    return math.exp(logc + (d1 / 2 - 1) * math.log(x) - ((d1 + d2) / 2) * math.log1p(d1 * x / d2))


def f_quantile(q, d1, d2):
    """Quantile by bisection on the numerically integrated density."""

    def cdf(x):
        return integrate.quad(f_pdf, 0, x, args=(d1, d2), epsabs=1e-13, epsrel=1e-12, limit=200)[0]

    lo, hi = 0.0, 1.0
    while cdf(hi) < q:
        hi *= 2
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if cdf(mid) < q:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
