"""Exact k-DPP sampling: interval search, binary search on alpha, size rejection.

A draw ``S ~ DPP(alpha L)`` conditioned on ``|S| = k`` is an exact sample of
``k-DPP(L)`` for every ``alpha > 0``, so the search only affects efficiency:
it looks for an ``alpha`` where ``Pr(|S| = k)`` is not too small, using nothing
but subset sizes returned by a DPP oracle.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .alpha_sampler import AlphaSampler, AlphaSamplerConfig, SampleTrace
from .bless import BlessConfig, bless_i
from .dictionary import DictionarySpectrum
from .errors import BudgetExhausted, ConfigError, InfeasibleSize, LowConfidenceWarning
from .poisson_binomial import DEFAULT_C, branching_threshold


@dataclass
class BinarySearchConfig:
    c: float = DEFAULT_C
    C: float = 4.0
    delta: float = 0.1
    max_steps: int | None = None

    def __post_init__(self):
        if not 0 < self.c < 1:
            raise ConfigError("c must lie in (0, 1)")
        if not self.C >= 1:
            raise ConfigError("C must be at least 1")
        if not 0 < self.delta < 1:
            raise ConfigError("delta must lie in (0, 1)")


@dataclass
class SearchResult:
    alpha_hat: float
    steps: int
    oracle_calls: int
    low_confidence: bool = False
    history: list = field(default_factory=list)  # (alpha_bar, p_k, p_below, p_above)


def search_step_limit(gamma, cfg=None):
    if cfg is not None and cfg.max_steps is not None:
        return cfg.max_steps
    return max(1, math.ceil(math.log2(gamma)))


def draws_per_step(s, k, cfg):
    return max(1, math.ceil(cfg.C * math.sqrt(k) * math.log(s / cfg.delta)))


def oracle_call_bound(gamma, k, cfg):
    steps = search_step_limit(gamma, cfg)
    return steps * draws_per_step(steps, k, cfg)


def binary_search_alpha(oracle, interval, k, cfg=None, rng=None):
    """Find ``alpha`` in ``interval`` with ``Pr(|S| = k)`` bounded below.

    ``oracle(alpha, t, rng)`` must return ``t`` subset sizes of independent
    draws from ``DPP(alpha L)``. Search happens in log-scale (geometric
    midpoints).
    """
    cfg = cfg or BinarySearchConfig()
    lo, hi = interval.alpha_min, interval.alpha_max
    threshold = 0.5 * branching_threshold(k, cfg.c)
    tight = 1.0 + 1.0 / (k + 3) ** 2
    calls = 0
    history = []
    limit = search_step_limit(hi / lo, cfg)
    for s in range(1, limit + 1):
        if hi / lo < tight:
            return SearchResult(lo, s - 1, calls, False, history)
        mid = math.sqrt(lo * hi)
        t = draws_per_step(s, k, cfg)
        sizes = np.asarray(oracle(mid, t, rng))
        calls += t
        p_k = float((sizes == k).mean())
        p_below = float((sizes < k).mean())
        p_above = float((sizes > k).mean())
        history.append((mid, p_k, p_below, p_above))
        if p_k >= threshold:
            return SearchResult(mid, s, calls, False, history)
        if p_below > p_above:
            lo = mid
        else:
            hi = mid
    if hi / lo < tight:
        return SearchResult(lo, limit, calls, False, history)
    warnings.warn(
        f"binary search used all {limit} steps; falling back to alpha_min", LowConfidenceWarning, stacklevel=2
    )
    return SearchResult(lo, limit, calls, True, history)


@dataclass
class KdppResult:
    sample: np.ndarray
    alpha_hat: float | None
    search_steps: int
    oracle_calls: int
    size_rejections: int
    trace: SampleTrace
    low_confidence: bool = False


class KDPPSampler:
    """Preprocess once (interval, dictionary, alpha), then draw as many k-DPP samples as needed."""

    def __init__(
        self,
        src,
        k,
        rng,
        bless_cfg=None,
        alpha_cfg=None,
        search_cfg=None,
        patience=10_000,
    ):
        if k < 1:
            raise ConfigError("k must be at least 1")
        if k > src.n:
            raise InfeasibleSize(f"k = {k} exceeds n = {src.n}")
        self.src = src
        self.k = k
        self.rng = rng
        self.patience = patience
        self.alpha_cfg = alpha_cfg
        self.trace = SampleTrace(src.n)
        self.timings = {"bless": 0.0, "search": 0.0, "sampling": 0.0}
        self.size_rejections = 0
        self._samplers = {}
        self.bless = None
        self.search = None
        self.alpha_hat = None
        if k == src.n:
            return  # the only size-n subset

        t0 = time.perf_counter()
        self.bless = bless_i(src, k, bless_cfg or BlessConfig(), rng)
        self._spectrum = DictionarySpectrum(self.bless.dictionary, src)
        # None: each alpha uses the dictionary's own estimate max(1, d_eff(alpha L_hat))
        self.r = alpha_cfg.r if alpha_cfg is not None else None
        t1 = time.perf_counter()
        self.search = binary_search_alpha(
            self._oracle, self.bless.interval, k, search_cfg or BinarySearchConfig(), rng
        )
        self.alpha_hat = self.search.alpha_hat
        self.timings["bless"] = t1 - t0
        self.timings["search"] = time.perf_counter() - t1

    def sampler(self, alpha):
        if alpha not in self._samplers:
            self._samplers[alpha] = AlphaSampler(self.src, None, alpha, spectrum=self._spectrum)
        return self._samplers[alpha]

    def _config(self, alpha):
        base = self.alpha_cfg
        if base is None:
            return AlphaSamplerConfig(alpha=alpha, r=self.r)
        return AlphaSamplerConfig(
            alpha=alpha,
            r=self.r,
            max_rejections=base.max_rejections,
            r_doubling=base.r_doubling,
            backend=base.backend,
            auto_backend=base.auto_backend,
            max_iterations=base.max_iterations,
        )

    def _draw(self, alpha, count, rng):
        samples, _ = self.sampler(alpha).sample_many(count, rng, self._config(alpha), self.trace)
        self.trace.observed = self.observed
        return samples

    def _oracle(self, alpha, t, rng):
        return [s.size for s in self._draw(alpha, t, rng)]

    @property
    def observed(self):
        if not self._samplers:
            return 0
        known = np.zeros(self.src.n, dtype=bool)
        for s in self._samplers.values():
            known |= s.cache.known
        return int(known.sum())

    @property
    def beta(self):
        return self.observed / self.src.n

    def sample_many(self, count):
        """``count`` i.i.d. k-DPP samples (sorted index arrays)."""
        if self.k == self.src.n:
            return [np.arange(self.src.n) for _ in range(count)]
        t0 = time.perf_counter()
        out = []
        misses = 0
        all_small = True
        seen = hit = 0
        while len(out) < count:
            need = count - len(out)
            p_est = max((hit + 1) / (seen + 1), 1e-3)
            batch = int(min(4096, max(1, math.ceil(need / p_est))))
            draws = self._draw(self.alpha_hat, batch, self.rng)
            seen += batch
            hit += sum(s.size == self.k for s in draws)
            for s in draws:
                if s.size == self.k:
                    if len(out) < count:
                        out.append(s)
                    misses = 0
                    all_small = True
                else:
                    self.size_rejections += 1
                    misses += 1
                    all_small = all_small and s.size < self.k
            if misses >= self.patience:
                if all_small:
                    raise InfeasibleSize(
                        f"{misses} consecutive draws all smaller than k = {self.k}"
                    )
                if misses >= 10 * self.patience:
                    raise BudgetExhausted("size rejection budget exhausted", self.trace)
        self.timings["sampling"] += time.perf_counter() - t0
        return out

    def sample(self):
        return self.sample_many(1)[0]

    def result(self, sample):
        return KdppResult(
            sample=sample,
            alpha_hat=self.alpha_hat,
            search_steps=self.search.steps if self.search else 0,
            oracle_calls=self.search.oracle_calls if self.search else 0,
            size_rejections=self.size_rejections,
            trace=self.trace,
            low_confidence=bool(self.search and self.search.low_confidence),
        )


def sample_kdpp(src, k, rng, bless_cfg=None, alpha_cfg=None, search_cfg=None, patience=10_000):
    """One exact draw from ``k-DPP(L)``: ``Pr(S) = det(L_S) / e_k(eigenvalues of L)``."""
    sampler = KDPPSampler(src, k, rng, bless_cfg, alpha_cfg, search_cfg, patience)
    return sampler.result(sampler.sample())
