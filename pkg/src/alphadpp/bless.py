"""Doubling-alpha leverage-score sampling (BLESS-I).

Starting from a rescaling small enough that ``d_eff(alpha L) < (k-1)/2``, the
dictionary is rebuilt at ``2 alpha``, ``4 alpha``, ... from the previous one.
Each round only looks at a ``Bernoulli(min(q alpha kappa^2, 1))`` subsample of
the items. The rounds stop once the estimated effective dimension passes
``2(k+2)``; the levels at which the estimate crossed ``(k-1)/2`` and
``2(k+2)`` bracket a rescaling whose size mode is ``k``.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .dictionary import Dictionary, DictionarySpectrum
from .errors import BudgetExhausted, ConfigError, EmptyDictionary


@dataclass
class BlessConfig:
    q: float = 2.0
    q_dpp: float = 1.0  # final oversampling is q_dpp * q * d_hat^2
    q_final: float | None = None  # absolute final oversampling, overrides q_dpp
    delta: float = 0.1
    q_doubling: bool = True
    max_restarts: int = 10
    max_rounds: int = 60

    def __post_init__(self):
        if not self.q > 0 or not self.q_dpp > 0:
            raise ConfigError("q and q_dpp must be positive")
        if self.q_final is not None and not self.q_final > 0:
            raise ConfigError("q_final must be positive")


@dataclass
class SearchInterval:
    alpha_min: float
    alpha_max: float
    deff_by_level: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0 < self.alpha_min <= self.alpha_max:
            raise ValueError("need 0 < alpha_min <= alpha_max")

    @property
    def gamma(self):
        return self.alpha_max / self.alpha_min

    def to_json(self):
        return json.dumps(
            {
                "alpha_min": self.alpha_min,
                "alpha_max": self.alpha_max,
                "deff_by_level": {repr(a): d for a, d in self.deff_by_level.items()},
            }
        )


@dataclass
class BlessResult:
    interval: SearchInterval
    dictionary: Dictionary
    deff_max: float
    q: float
    rounds: int
    touched: np.ndarray  # items whose marginal was computed at least once
    restarts: int = 0

    @property
    def touched_fraction(self):
        return float(self.touched.mean()) if self.touched.size else 0.0


def theory_q(n, kappa_sq, eps=0.5, delta=0.1):
    """Oversampling that guarantees (eps, alpha)-accuracy w.p. ``1 - delta``."""
    return 54.0 * kappa_sq * (2 * eps + 1) ** 2 / eps**2 * math.log(12.0 * n**2 / delta)


def dictionary_deff(dictionary, marginals):
    """Importance-weighted estimate ``sum_j w_j l_j`` of the approximate effective dimension.

    When no item saturates (``q l_j < b``) every weight is ``1/(q l_j)`` and
    this is exactly ``|D| / q``.
    """
    return float((dictionary.weights * marginals).sum())


def touch(n, b, rng):
    """Indices of a ``Bernoulli(b)`` subsample of ``[n]``, in increasing order."""
    count = int(rng.binomial(n, b))
    if count == n:
        return np.arange(n)
    return np.sort(rng.choice(n, size=count, replace=False))


def bless_round(src, prev, alpha, q, b, rng, touched=None):
    """Resample a dictionary at ``alpha`` using marginals from ``prev``.

    Returns ``(dictionary, d_hat)``.
    """
    if not 0 < b <= 1:
        raise ValueError("b must lie in (0, 1]")
    core = DictionarySpectrum(prev, src).core(alpha)
    idx = touch(src.n, b, rng)
    if touched is not None:
        touched[idx] = True
    l = core.marginals(idx)
    p = np.minimum(q * l, b)
    keep = rng.random(idx.size) * b < p
    d = Dictionary(idx[keep], 1.0 / p[keep], alpha=alpha, q=q)
    return d, dictionary_deff(d, l[keep])


def _exit_level(k, n):
    # d_eff(alpha L) < n, so cap the exit level when 2(k+2) is out of reach
    return min(2.0 * (k + 2), k + 1 + (n - k - 1) / 2.0)


def _run(src, k, q, cfg, rng, touched):
    n, ksq = src.n, src.kappa_sq
    alpha = max(k - 1, 1) / (n * ksq)
    d_low = max((k - 1) / 2.0, 0.25)
    draws = rng.integers(0, n, size=math.ceil(q * max(k - 1, 1)))
    current = Dictionary.from_draws(draws, 1.0 / (q * alpha * ksq), alpha=alpha, q=q)
    d_hat = d_low
    levels = {alpha: d_hat}
    alpha_min = None
    exit_level = _exit_level(k, n)
    rounds = 0
    while d_hat <= exit_level:
        if rounds >= cfg.max_rounds:
            warnings.warn(
                f"BLESS-I stopped after {rounds} doublings with d_hat = {d_hat:.3g}",
                RuntimeWarning,
                stacklevel=3,
            )
            break
        prev_alpha, prev_d = alpha, d_hat
        alpha *= 2.0
        b = min(q * alpha * ksq, 1.0)
        current, d_hat = bless_round(src, current, alpha, q, b, rng, touched)
        rounds += 1
        if current.m == 0:
            raise EmptyDictionary(f"empty dictionary at alpha = {alpha:.3e}")
        levels[alpha] = d_hat
        if alpha_min is None and prev_d <= d_low < d_hat:
            alpha_min = prev_alpha
    alpha_max = alpha
    if alpha_min is None:
        alpha_min = min(levels)

    if cfg.q_final is not None:
        q_final = cfg.q_final * q / cfg.q  # restarts double this too
    else:
        q_final = cfg.q_dpp * q * d_hat**2
    b_max = min(q_final * alpha_max * ksq, 1.0)
    final, _ = bless_round(src, current, alpha_max, q_final, b_max, rng, touched)
    if final.m == 0:
        raise EmptyDictionary("empty final dictionary")
    interval = SearchInterval(alpha_min, alpha_max, levels)
    return BlessResult(interval, final, d_hat, q, rounds, touched)


def bless_i(src, k, cfg=None, rng=None):
    """Search interval, final dictionary at ``alpha_max`` and effective-dimension estimates."""
    cfg = cfg or BlessConfig()
    rng = rng if rng is not None else np.random.default_rng()
    if k < 1 or k > src.n:
        raise ValueError("k must lie in [1, n]")
    q = cfg.q
    for attempt in range(cfg.max_restarts + 1):
        touched = np.zeros(src.n, dtype=bool)
        try:
            result = _run(src, k, q, cfg, rng, touched)
            result.restarts = attempt
            return result
        except EmptyDictionary:
            if not cfg.q_doubling:
                raise
            q *= 2.0
    raise BudgetExhausted(f"BLESS-I kept producing empty dictionaries up to q = {q / 2:g}")
