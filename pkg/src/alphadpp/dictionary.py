"""Weighted Nystrom dictionaries and the approximate marginals they induce.

For a dictionary ``(D, W)`` and rescaling ``alpha`` the approximate marginal of
item ``i`` is::

    l_i = alpha * (L_ii - alpha * L_iD (alpha L_DD + W^-1)^-1 L_Di)

We never factor ``alpha L_DD + W^-1`` directly. With ``S = W^1/2`` and the
eigendecomposition ``S L_DD S = U diag(lam) U^T`` of the compressed matrix,
``(alpha L_DD + W^-1)^-1 = S U diag(1 / (alpha lam + 1)) U^T S``, so a single
O(m^3) decomposition serves every ``alpha`` and each marginal costs O(m^2).
"""

from __future__ import annotations

import itertools
import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import AccuracyWarning, EmptyDictionary, NumericalFailure, Unsupported
from .linalg import eigendecompose_psd

_generation = itertools.count()

MARGINAL_OVERSHOOT = 1e-6
MARGINAL_NEGATIVE = -1e-6
SPECTRUM_FLOOR = 1e-13


@dataclass(frozen=True, eq=False)
class Dictionary:
    """Distinct item indices with strictly positive weights (the diagonal of ``W``)."""

    indices: np.ndarray
    weights: np.ndarray
    alpha: float | None = None
    q: float | None = None
    generation: int = field(default_factory=lambda: next(_generation))

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.intp).ravel()
        w = np.asarray(self.weights, dtype=float).ravel()
        if idx.shape != w.shape:
            raise ValueError("indices and weights must have the same length")
        if w.size and not (w > 0).all():
            raise ValueError("dictionary weights must be strictly positive")
        if np.unique(idx).size != idx.size:
            raise ValueError("dictionary indices must be distinct")
        idx.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "weights", w)

    @property
    def m(self):
        return int(self.indices.size)

    @classmethod
    def full(cls, n, weight=1.0):
        return cls(np.arange(n), np.full(n, float(weight)))

    @classmethod
    def from_draws(cls, draws, weights, **kw):
        """Collapse a multiset of draws; repeated items add their weights.

        Summing keeps ``sum_j w_j phi(D_j) phi(D_j)^T`` unchanged, so the
        approximate marginals are the same as for the multiset.
        """
        draws = np.asarray(draws, dtype=np.intp)
        weights = np.broadcast_to(np.asarray(weights, dtype=float), draws.shape)
        uniq, inv = np.unique(draws, return_inverse=True)
        return cls(uniq, np.bincount(inv, weights=weights, minlength=uniq.size), **kw)

    def to_json(self):
        return json.dumps(
            {
                "alpha": self.alpha,
                "indices": self.indices.tolist(),
                "weights": self.weights.tolist(),
                "q": self.q,
            }
        )

    @classmethod
    def from_json(cls, text):
        obj = json.loads(text)
        return cls(obj["indices"], obj["weights"], alpha=obj.get("alpha"), q=obj.get("q"))


def compressed_matrix(dictionary, src):
    """``W^1/2 L_DD W^1/2``."""
    s = np.sqrt(dictionary.weights)
    return s[:, None] * src.block(dictionary.indices, dictionary.indices) * s[None, :]


class DictionarySpectrum:
    """Eigendecomposition of the compressed matrix, shared by all rescalings."""

    def __init__(self, dictionary, src):
        if dictionary.m == 0:
            raise EmptyDictionary("cannot build a marginal core from an empty dictionary")
        self.dictionary = dictionary
        self.src = src
        self.sqrt_w = np.sqrt(dictionary.weights)
        self.eigenvalues, U = eigendecompose_psd(compressed_matrix(dictionary, src))
        self.projector = U.T * self.sqrt_w[None, :]

    def core(self, alpha):
        return MarginalCore(self, alpha)


class MarginalCore:
    """Everything needed to evaluate approximate marginals at a fixed ``alpha``."""

    def __init__(self, spectrum, alpha):
        if not alpha > 0:
            raise ValueError("alpha must be positive")
        self.spectrum = spectrum
        self.alpha = float(alpha)
        self.src = spectrum.src
        self.dictionary = spectrum.dictionary
        lam = spectrum.eigenvalues
        x = self.alpha * lam
        # alpha / (alpha lam + 1) = 1/lam - 1/(lam (alpha lam + 1)): splitting the
        # correction this way keeps both parts nonnegative and the rounding error
        # linear in alpha; directions with numerically zero lam are dropped
        self._live = lam > SPECTRUM_FLOOR * lam.max(initial=0.0)
        live = lam[self._live]
        self._inv = 1.0 / live
        self._tail = 1.0 / (live * (self.alpha * live + 1.0))
        # d_eff(alpha * L_hat) and log det(I + alpha * L_hat)
        self.s_tilde = float((x / (x + 1.0)).sum())
        self.logdet_hat = float(np.log1p(x).sum())

    @property
    def bound(self):
        return self.alpha * self.src.kappa_sq

    @property
    def core_matrix(self):
        d = self.dictionary
        M = self.alpha * self.src.block(d.indices, d.indices)
        M[np.diag_indices(d.m)] += 1.0 / d.weights
        return M

    def with_alpha(self, alpha):
        return MarginalCore(self.spectrum, alpha)

    def raw_marginals(self, idx):
        idx = np.asarray(idx, dtype=np.intp)
        cross = self.src.block(self.dictionary.indices, idx)
        y2 = (self.spectrum.projector[self._live] @ cross) ** 2
        residual = np.maximum(self.src.diag(idx) - self._inv @ y2, 0.0)
        return self.alpha * (residual + self._tail @ y2)

    def marginals(self, idx):
        """Approximate marginals clamped to ``[0, alpha * kappa_sq]``."""
        raw = self.raw_marginals(idx)
        bound = self.bound
        if raw.size:
            if raw.min() < MARGINAL_NEGATIVE:
                raise NumericalFailure(f"approximate marginal {raw.min():.3e} is negative")
            if raw.max() > bound * (1 + MARGINAL_OVERSHOOT):
                warnings.warn(
                    f"approximate marginal {raw.max():.6g} exceeds alpha*kappa^2 = {bound:.6g}",
                    AccuracyWarning,
                    stacklevel=2,
                )
        return np.clip(raw, 0.0, bound)


def build_core(dictionary, src, alpha):
    return DictionarySpectrum(dictionary, src).core(alpha)


class MarginalCache:
    """Per-item marginals for one ``(alpha, dictionary)`` pair.

    Values start at the upper bound ``alpha * kappa_sq`` and are lowered to
    the computed ``l_i`` the first time item ``i`` is requested; nothing is
    computed twice.
    """

    def __init__(self, core):
        self.core = core
        self.key = (core.alpha, core.dictionary.generation)
        n = core.src.n
        self.values = np.full(n, core.bound)
        self.known = np.zeros(n, dtype=bool)
        self.hits = 0
        self.misses = 0

    def lookup(self, idx):
        idx = np.asarray(idx, dtype=np.intp)
        fresh = idx[~self.known[idx]]
        if fresh.size:
            fresh = np.unique(fresh)
            self.values[fresh] = self.core.marginals(fresh)
            self.known[fresh] = True
        self.misses += int(fresh.size)
        self.hits += int(idx.size - fresh.size)
        return self.values[idx]

    @property
    def computed(self):
        return np.flatnonzero(self.known)


def approx_marginal(dictionary, src, alpha, i, cache=None):
    if cache is None:
        cache = MarginalCache(build_core(dictionary, src, alpha))
    elif cache.key != (float(alpha), dictionary.generation):
        raise ValueError("cache was built for a different alpha or dictionary")
    return float(cache.lookup([i])[0])


def exact_marginals(L, alpha=1.0):
    """Diagonal of ``alpha L (I + alpha L)^-1`` for a dense matrix."""
    L = np.asarray(L, dtype=float)
    n = L.shape[0]
    A = alpha * L
    return np.diag(np.linalg.solve(np.eye(n) + A, A)).copy()


def certify_accuracy(dictionary, src, alpha, eps, cap=600, slack=1e-9):
    """Check the (eps, alpha)-accuracy sandwich on a small instance.

    Uses the feature map ``phi(i)`` given by the rows of ``U diag(lam)^1/2``
    from an eigendecomposition of ``L`` and tests::

        (1-eps)(I/alpha + Phi^T Phi) <= I/alpha + Phi_D^T W Phi_D <= (1+eps)(I/alpha + Phi^T Phi)

    through the extreme eigenvalues of the whitened middle term.
    """
    if src.n > cap:
        raise Unsupported(f"certify_accuracy needs n <= {cap}")
    lam, U = eigendecompose_psd(src.dense(cap=cap))
    Phi = U * np.sqrt(lam)[None, :]
    PhiD = Phi[dictionary.indices]
    B = np.eye(lam.size) / alpha + (PhiD.T * dictionary.weights[None, :]) @ PhiD
    a = 1.0 / np.sqrt(1.0 / alpha + lam)
    mid = a[:, None] * B * a[None, :]
    ev = np.linalg.eigvalsh(0.5 * (mid + mid.T))
    return bool(ev.min() >= 1 - eps - slack and ev.max() <= 1 + eps + slack)
