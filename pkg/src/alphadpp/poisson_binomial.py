"""Subset-size law of DPP(alpha L): a Poisson Binomial over the eigenvalues.

If ``L`` has eigenvalues ``lam_i`` then ``|S|`` for ``S ~ DPP(alpha L)`` is a sum
of independent ``Bernoulli(alpha lam_i / (alpha lam_i + 1))``. The predicates
at the bottom are the distributional facts the binary search relies on; they
are evaluated exactly on the pmf so tests can sweep them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.optimize

DEFAULT_C = 0.25
_TIE_RTOL = 1e-12


@dataclass(frozen=True, eq=False)
class SizeDistribution:
    probs: np.ndarray
    success: np.ndarray

    @property
    def mean(self):
        return float(self.success.sum())

    @property
    def support(self):
        """Smallest and largest size with positive probability."""
        lo = int((self.success >= 1.0).sum())
        hi = int((self.success > 0.0).sum())
        return lo, hi

    def cdf(self):
        return np.cumsum(self.probs)

    def prob_below(self, k):
        return float(self.probs[: max(k, 0)].sum())

    def prob_above(self, k):
        return float(self.probs[k + 1 :].sum()) if k + 1 < self.probs.size else 0.0

    def prob(self, k):
        return float(self.probs[k]) if 0 <= k < self.probs.size else 0.0


def bernoulli_params(eigenvalues, alpha=1.0):
    x = alpha * np.asarray(eigenvalues, dtype=float)
    if x.size and x.min() < 0:
        raise ValueError("eigenvalues must be nonnegative")
    return x / (x + 1.0)


def size_pmf(eigenvalues, alpha=1.0):
    """Exact pmf of the number of successes, by iterated convolution (O(n^2))."""
    p = bernoulli_params(eigenvalues, alpha)
    pmf = np.zeros(p.size + 1)
    pmf[0] = 1.0
    for j, pj in enumerate(p, start=1):
        head = pmf[: j + 1].copy()
        pmf[1 : j + 1] = head[1:] * (1.0 - pj) + head[:-1] * pj
        pmf[0] = head[0] * (1.0 - pj)
    return SizeDistribution(pmf, p)


def pmf_from_params(success):
    """Same as :func:`size_pmf` but from the Bernoulli parameters directly."""
    success = np.asarray(success, dtype=float)
    with np.errstate(divide="ignore"):
        lam = success / (1.0 - success)
    return size_pmf(lam)


def mode(dist):
    """Most likely size; near-ties resolve to the smaller value."""
    p = dist.probs
    return int(np.flatnonzero(p >= p.max() * (1 - _TIE_RTOL))[0])


def median(dist):
    """Smallest ``j`` with ``P(X <= j) >= 1/2``."""
    return int(np.searchsorted(dist.cdf(), 0.5 - 1e-12))


def is_unimodal(dist, rtol=1e-9):
    p = dist.probs
    k = mode(dist)
    up = np.diff(p[: k + 1])
    down = np.diff(p[k:])
    tol = rtol * p.max()
    return bool((up >= -tol).all() and (down <= tol).all())


def is_log_concave(dist, rtol=1e-8):
    lo, hi = dist.support
    p = dist.probs[lo : hi + 1]
    if p.size < 3:
        return True
    mid = p[1:-1] ** 2
    outer = p[:-2] * p[2:]
    # entries that underflowed carry no information about concavity
    ok = (mid >= outer * (1 - rtol)) | (outer < 1e-290)
    return bool(ok.all())


def darroch_bracket_holds(dist):
    """Mode lies in ``{floor(mean), floor(mean) + 1}``, with the finer subcases."""
    mean = dist.mean
    n = dist.success.size
    k = math.floor(mean + 1e-12)
    m = mode(dist)
    if m not in (k, k + 1):
        return False
    if mean < k + 1.0 / (k + 2) - 1e-12:
        return m == k
    if n - k + 1 > 0 and mean > k + 1 - 1.0 / (n - k + 1) + 1e-12:
        return m == k + 1
    return True


def mode_probability_bound_holds(dist, c=DEFAULT_C):
    k = mode(dist)
    return bool(dist.probs[k] >= c / math.sqrt(k + 1))


def branching_threshold(k, c=DEFAULT_C):
    return c / (12.0 * math.sqrt(3.0 * (k + 1)))


def branching_property_holds(dist, k, c=DEFAULT_C):
    """If ``p(k)`` is tiny, ``k`` splits the mass unevenly toward the mode."""
    if dist.prob(k) >= branching_threshold(k, c):
        return True
    limit = 0.5 - c / 12.0
    m = mode(dist)
    if m < k:
        return dist.prob_above(k) <= limit
    if m > k:
        return dist.prob_below(k) <= limit
    return True


def alpha_for_mean(eigenvalues, target):
    """Rescaling ``alpha`` at which ``d_eff(alpha L)`` equals ``target``."""
    lam = np.asarray(eigenvalues, dtype=float)
    if not 0 < target < (lam > 0).sum():
        raise ValueError("target must lie strictly between 0 and rank(L)")

    def gap(log_a):
        x = math.exp(log_a) * lam
        return float((x / (x + 1.0)).sum()) - target

    return math.exp(scipy.optimize.brentq(gap, -60.0, 60.0, xtol=1e-14))
