"""Fisher (F) distribution CDF and quantile."""

from functools import lru_cache

import numpy as np
from scipy.optimize import brentq
from scipy.special import betainc


class QuantileError(ArithmeticError):
    pass


def f_cdf(x, d1, d2):
    """CDF of the F(d1, d2) distribution."""
    x = np.asarray(x, dtype=float)
    y = np.where(x > 0, d1 * x / (d1 * x + d2), 0.0)
    return betainc(d1 / 2.0, d2 / 2.0, y)


@lru_cache(maxsize=4096)
def fisher_quantile(q: float, d1: int, d2: int, tol: float = 1e-10) -> float:
    """Value x with ``F(d1, d2).cdf(x) == q``, found by bracketing and Brent's method."""
    if not 0.0 < q < 1.0:
        raise ValueError(f"quantile level must be in (0, 1), got {q}")
    if d1 <= 0 or d2 <= 0:
        raise ValueError("degrees of freedom must be positive")

    def g(x):
        return float(f_cdf(x, d1, d2)) - q

    lo, hi = 0.0, 1.0
    while g(hi) < 0:
        lo, hi = hi, hi * 2.0
        if hi > 1e300:
            raise QuantileError(f"could not bracket the {q} quantile of F({d1}, {d2})")
    try:
        x, info = brentq(g, lo, hi, xtol=tol * 1e-2, rtol=4 * np.finfo(float).eps,
                         maxiter=500, full_output=True)
    except (RuntimeError, ValueError) as exc:
        raise QuantileError(str(exc)) from exc
    if not info.converged:
        raise QuantileError(f"quantile search for F({d1}, {d2}) did not converge")
    return float(x)


def tolerance_threshold(n: int, p: int, alpha: float) -> float:
    """Squared Mahalanobis radius of the (1 - alpha) tolerance ellipsoid of n samples in p dims."""
    if n <= p:
        raise ValueError(f"a tolerance region needs more samples ({n}) than dimensions ({p})")
    if alpha >= 1.0:
        # the quantile at level 0 is 0: the region shrinks to the mean itself
        return 0.0
    return (n - 1) * p / (n - p) * (n + 1) / n * fisher_quantile(1.0 - alpha, p, n - p)
