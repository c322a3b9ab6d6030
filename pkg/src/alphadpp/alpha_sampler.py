"""Exact DPP(alpha L) sampling by rejection from a uniformly thinned proposal.

One loop iteration:

1. ``u ~ Poisson(r e^{1/r} alpha n kappa^2)`` uniform draws ``rho`` from ``[n]``;
2. keep ``rho_j`` with probability ``l_{rho_j} / (alpha kappa^2)`` giving a
   multiset ``sigma`` of size ``t`` (marginals come from the dictionary);
3. accept with probability
   ``exp(s_tilde - t/r) det(I + alpha Lt_sigma) / det(I + alpha L_hat)`` where
   ``Lt_sigma[a, b] = L[sigma_a, sigma_b] / (r sqrt(l_a l_b))``;
4. on acceptance draw ``S ~ DPP(alpha Lt_sigma)`` and map it back to items.

Accepted draws are exact for any dictionary and any ``r >= 1``. Iterations are
independent, so a batch of iterations yields i.i.d. samples, one per accepted
iteration; :meth:`AlphaSampler.sample_many` exploits this.

Two alternative proposal mechanisms produce the same law of ``sigma`` and are
kept for equivalence testing: ``"poisson"`` draws ``s_i ~ Poisson(r e^{1/r}
l_i)`` for every item, ``"binomial"`` draws ``u_i ~ Poisson(r e^{1/r} alpha
kappa^2)`` then ``s_i ~ Binomial(u_i, l_i / (alpha kappa^2))``.
"""

from __future__ import annotations

import json
import math
from array import array
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .dictionary import DictionarySpectrum, MarginalCache
from .dpp_exact import floor_eigenvalues, sample_dpp_batch_grouped
from .errors import AccuracyWarning, BudgetExhausted, ConfigError, NumericalFailure

BACKENDS = ("uniform", "poisson", "binomial")
INTENSITY_CAP = 2.0**31
RATIO_SLACK = 1e-6
MAX_BATCH = 16384
CHUNK_ENTRIES = 2_000_000


@dataclass
class AlphaSamplerConfig:
    alpha: float
    r: float | None = None  # None: max(1, d_eff of the compressed matrix)
    max_rejections: int = 64
    r_doubling: bool = True
    backend: str = "uniform"
    auto_backend: bool = True
    max_iterations: int = 10_000_000

    def __post_init__(self):
        if not self.alpha > 0:
            raise ConfigError("alpha must be positive")
        if self.r is not None and not self.r >= 1:
            raise ConfigError("r must be at least 1")
        if self.backend not in BACKENDS:
            raise ConfigError(f"backend must be one of {BACKENDS}")
        if self.max_rejections < 1:
            raise ConfigError("max_rejections must be positive")


@dataclass
class SampleTrace:
    n: int
    iterations: int = 0
    accepted: int = 0
    # compact typed arrays: long runs record millions of iterations
    u_values: array = field(default_factory=lambda: array("q"))
    t_values: array = field(default_factory=lambda: array("q"))
    accept_log_ratios: array = field(default_factory=lambda: array("d"))
    r_history: list = field(default_factory=list)
    observed: int = 0
    timings: dict = field(default_factory=lambda: {"propose": 0.0, "accept": 0.0, "finish": 0.0})

    @property
    def beta(self):
        return self.observed / self.n if self.n else 0.0

    def to_dict(self):
        return {
            "iterations": self.iterations,
            "accepted": self.accepted,
            "u_values": self.u_values.tolist(),
            "t_values": self.t_values.tolist(),
            "beta": self.beta,
            "accept_log_ratios": self.accept_log_ratios.tolist(),
            "r_history": [float(x) for x in self.r_history],
            "timings": dict(self.timings),
        }

    def to_json(self):
        return json.dumps(self.to_dict())


@dataclass
class Proposal:
    """A batch of intermediate samples stored flat: ``items[offsets[g]:offsets[g]+t[g]]``."""

    items: np.ndarray
    marginals: np.ndarray
    t: np.ndarray
    u: np.ndarray
    r: float

    @property
    def offsets(self):
        return np.concatenate(([0], np.cumsum(self.t)[:-1])).astype(np.intp)

    def sigma(self, g):
        o = self.offsets[g]
        return self.items[o : o + self.t[g]]

    def count_patterns(self, n):
        """Per-iteration item count vectors as hashable tuples."""
        rows = np.repeat(np.arange(self.t.size), self.t)
        counts = np.zeros((self.t.size, n), dtype=np.int64)
        np.add.at(counts, (rows, self.items), 1)
        return [tuple(c) for c in counts]


class AlphaSampler:
    """Rejection sampler for ``DPP(alpha L)`` bound to one dictionary and one ``alpha``.

    The marginal cache lives as long as the sampler, so repeated draws never
    recompute an ``l_i``; ``observed`` counts items touched so far.
    """

    def __init__(self, src, dictionary, alpha, spectrum=None):
        if spectrum is None:
            spectrum = DictionarySpectrum(dictionary, src)
        self.src = src
        self.n = src.n
        self.core = spectrum.core(alpha)
        self.alpha = self.core.alpha
        self.bound = self.core.bound
        self.cache = MarginalCache(self.core)
        self._acc_rate = 0.25
        self._tried = 0
        self._hits = 0

    @property
    def s_tilde(self):
        return self.core.s_tilde

    @property
    def observed(self):
        return int(self.cache.known.sum())

    def default_r(self):
        return max(1.0, self.core.s_tilde)

    def intensity(self, r):
        return r * math.exp(1.0 / r) * self.alpha * self.n * self.src.kappa_sq

    def choose_backend(self, cfg, r):
        if cfg.auto_backend and cfg.backend == "uniform" and self.n > 1:
            # uniform pre-sampling stops paying off once it would touch ~n log n draws
            if self.intensity(r) >= self.n * math.log(self.n):
                return "poisson"
        return cfg.backend

    # -- proposals -------------------------------------------------------

    def propose(self, batch, r, rng, backend="uniform"):
        if backend == "uniform":
            return self._propose_uniform(batch, r, rng)
        if backend == "poisson":
            return self._propose_poisson(batch, r, rng)
        if backend == "binomial":
            return self._propose_binomial(batch, r, rng)
        raise ConfigError(f"unknown backend {backend!r}")

    def _propose_uniform(self, batch, r, rng):
        lam = self.intensity(r)
        if lam > INTENSITY_CAP:
            raise ConfigError(f"Poisson intensity {lam:.3e} exceeds 2^31")
        u = rng.poisson(lam, size=batch)
        rho = rng.integers(0, self.n, size=int(u.sum()))
        l = self.cache.lookup(rho)
        keep = rng.random(rho.size) * self.bound < l
        owner = np.repeat(np.arange(batch), u)[keep]
        return Proposal(rho[keep], l[keep], np.bincount(owner, minlength=batch), u, r)

    def _expand(self, s, l_all, u, r):
        batch = s.shape[0]
        rows, cols = np.nonzero(s)
        reps = s[rows, cols]
        items = np.repeat(cols, reps).astype(np.intp)
        return Proposal(items, l_all[items], s.sum(axis=1), u, r)

    def _propose_poisson(self, batch, r, rng):
        l_all = self.cache.lookup(np.arange(self.n))
        s = rng.poisson(r * math.exp(1.0 / r) * l_all, size=(batch, self.n))
        return self._expand(s, l_all, s.sum(axis=1), r)

    def _propose_binomial(self, batch, r, rng):
        u = rng.poisson(r * math.exp(1.0 / r) * self.bound, size=(batch, self.n))
        touched = np.flatnonzero(u.any(axis=0))
        l_all = np.zeros(self.n)
        l_all[touched] = self.cache.lookup(touched)
        s = rng.binomial(u, l_all / self.bound)
        return self._expand(s, l_all, u.sum(axis=1), r)

    # -- acceptance ------------------------------------------------------

    def rescaled_blocks(self, prop, rows, t):
        """``Lt_sigma`` for the iterations ``rows`` (all of size ``t``): ``(G, t, t)``."""
        idx = prop.offsets[rows][:, None] + np.arange(t)[None, :]
        items = prop.items[idx]
        scale = 1.0 / np.sqrt(prop.r * prop.marginals[idx])
        blocks = self.src.stacked_blocks(items)
        return items, blocks * scale[:, :, None] * scale[:, None, :]

    def evaluate(self, prop, uniforms=None):
        """Acceptance log-ratios, acceptance decisions and the accepted ``Lt_sigma`` stacks.

        The ratio for each iteration is
        ``s_tilde - t/r + logdet(I + alpha Lt) - logdet(I + alpha L_hat)`` and
        iteration ``g`` is accepted iff ``uniforms[g] < exp(min(ratio, 0))``.
        Blocks are built in chunks of bounded size and only the accepted ones
        are kept, for :meth:`finish`.
        """
        batch = prop.t.size
        if uniforms is None:
            uniforms = np.ones(batch)
        logdet = np.zeros(batch)
        accept = np.zeros(batch, dtype=bool)
        blocks = {}
        base = self.core.s_tilde - self.core.logdet_hat
        for t in np.unique(prop.t):
            rows_t = np.flatnonzero(prop.t == t)
            if t == 0:
                accept[rows_t] = uniforms[rows_t] < math.exp(min(base, 0.0))
                continue
            t = int(t)
            step = max(1, CHUNK_ENTRIES // (t * t))
            kept = []
            for start in range(0, rows_t.size, step):
                rows = rows_t[start : start + step]
                items, M = self.rescaled_blocks(prop, rows, t)
                A = self.alpha * M
                A[:, np.arange(t), np.arange(t)] += 1.0
                sign, ld = np.linalg.slogdet(A)
                bad = sign <= 0
                if bad.any():
                    # rounding noise amplified by a huge alpha; use the floored
                    # spectrum, which is also what the finishing DPP draw sees
                    ld[bad] = _floored_logdet(M[bad], self.alpha)
                logdet[rows] = ld
                lr = base - t / prop.r + ld
                ok = uniforms[rows] < np.exp(np.minimum(lr, 0.0))
                accept[rows] = ok
                if ok.any():
                    kept.append((rows[ok], items[ok], M[ok]))
            if kept:
                blocks[t] = tuple(np.concatenate(parts) for parts in zip(*kept))
        lr = base - prop.t / prop.r + logdet
        return lr, accept, blocks

    def log_ratios(self, prop):
        return self.evaluate(prop)[0]

    def finish(self, prop, rows, rng, blocks=None):
        """Draw ``DPP(alpha Lt_sigma)`` for accepted iterations and map back to items."""
        if blocks is None:
            forced = np.zeros(prop.t.size)
            forced[rows] = -1.0  # keep exactly the requested rows
            blocks = self.evaluate(prop, forced)[2]
        empty = np.zeros(0, dtype=np.intp)
        out = {int(g): empty for g in rows}
        chosen = np.zeros(prop.t.size, dtype=bool)
        chosen[rows] = True
        for t, (grows, items, M) in blocks.items():
            sel = np.flatnonzero(chosen[grows])
            if not sel.size:
                continue
            for sub, picks in sample_dpp_batch_grouped(M[sel], rng, scale=self.alpha):
                local = sel[sub]
                drawn = np.sort(items[local[:, None], picks], axis=1)
                dup = (np.diff(drawn, axis=1) == 0).any(axis=1)
                for g, d, has_dup in zip(grows[local], drawn, dup):
                    # copies of one item in sigma map to a single item
                    out[int(g)] = np.unique(d) if has_dup else d
        return out

    # -- driver ----------------------------------------------------------

    def sample_many(self, count, rng, cfg=None, trace=None, r=None):
        """``count`` i.i.d. draws from ``DPP(alpha L)``; returns ``(samples, trace)``."""
        cfg = cfg or AlphaSamplerConfig(alpha=self.alpha)
        if trace is None:
            trace = SampleTrace(self.n)
        r = float(r or cfg.r or self.default_r())
        if not trace.r_history:
            trace.r_history.append(r)
        samples = []
        streak = 0
        while len(samples) < count:
            if trace.iterations >= cfg.max_iterations:
                raise BudgetExhausted("iteration budget exhausted", trace)
            need = count - len(samples)
            batch = int(min(MAX_BATCH, max(1, math.ceil(need / max(self._acc_rate, 1e-3)))))
            batch = min(batch, cfg.max_iterations - trace.iterations)
            backend = self.choose_backend(cfg, r)

            t0 = time.perf_counter()
            prop = self.propose(batch, r, rng, backend)
            t1 = time.perf_counter()
            lr, accept, blocks = self.evaluate(prop, rng.random(batch))
            if lr.max(initial=-np.inf) > RATIO_SLACK:
                warnings.warn(
                    f"acceptance log-ratio {lr.max():.3e} is positive; clamping to 0",
                    AccuracyWarning,
                    stacklevel=2,
                )
            t2 = time.perf_counter()

            # replay the batch in iteration order as the sequential loop would:
            # it stops after `need` acceptances, or doubles r once a run of
            # max_rejections rejections completes (later iterations are dropped)
            hits = np.flatnonzero(accept)
            self._tried += batch
            self._hits += int(hits.size)
            self._acc_rate = max((self._hits + 1) / (self._tried + 4), 1e-3)
            last = np.maximum.accumulate(np.where(accept, np.arange(batch), -1 - streak))
            run = np.arange(batch) - last
            limit = np.flatnonzero(run >= cfg.max_rejections)
            stop = int(limit[0]) if limit.size else batch
            used = hits[hits < stop][:need]
            end = int(used[-1]) + 1 if used.size == need else min(stop + 1, batch)
            streak = int(run[end - 1]) if end else streak

            trace.iterations += end
            trace.u_values.frombytes(prop.u[:end].astype(np.int64).tobytes())
            trace.t_values.frombytes(prop.t[:end].astype(np.int64).tobytes())
            trace.accept_log_ratios.frombytes(lr[:end].astype(np.float64).tobytes())
            if used.size:
                drawn = self.finish(prop, used, rng, blocks)
                samples.extend(drawn[int(g)] for g in used)
                trace.accepted += int(used.size)
            if used.size < need and stop < batch:
                if not cfg.r_doubling:
                    trace.observed = self.observed
                    raise BudgetExhausted(
                        f"{cfg.max_rejections} consecutive rejections with r doubling disabled",
                        trace,
                    )
                r *= 2.0
                streak = 0
                trace.r_history.append(r)
            trace.timings["propose"] += t1 - t0
            trace.timings["accept"] += t2 - t1
            trace.timings["finish"] += time.perf_counter() - t2
        trace.observed = self.observed
        return samples, trace

    def sample(self, rng, cfg=None, trace=None):
        samples, trace = self.sample_many(1, rng, cfg, trace)
        return samples[0], trace


def _floored_logdet(M, alpha):
    vals = np.linalg.eigvalsh(0.5 * (M + np.swapaxes(M, 1, 2)))
    lam = floor_eigenvalues(np.maximum(vals, 0.0))
    out = np.log1p(alpha * lam).sum(axis=1)
    if not np.isfinite(out).all():
        raise NumericalFailure("I + alpha * Lt_sigma is not positive definite")
    return out


def sample_rescaled_dpp(src, dictionary, cfg, rng):
    """One exact draw from ``DPP(cfg.alpha * L)``; returns ``(subset, trace)``."""
    sampler = AlphaSampler(src, dictionary, cfg.alpha)
    return sampler.sample(rng, cfg)


def _with_backend(cfg, backend):
    return AlphaSamplerConfig(
        alpha=cfg.alpha,
        r=cfg.r,
        max_rejections=cfg.max_rejections,
        r_doubling=cfg.r_doubling,
        backend=backend,
        auto_backend=False,
        max_iterations=cfg.max_iterations,
    )


def sample_rescaled_dpp_backend_poisson(src, dictionary, cfg, rng):
    """Same law, proposal ``s_i ~ Poisson(r e^{1/r} l_i)`` for every item."""
    return sample_rescaled_dpp(src, dictionary, _with_backend(cfg, "poisson"), rng)


def sample_rescaled_dpp_backend_binomial(src, dictionary, cfg, rng):
    """Same law, proposal ``u_i ~ Poisson(r e^{1/r} alpha kappa^2)``, ``s_i ~ Binomial``."""
    return sample_rescaled_dpp(src, dictionary, _with_backend(cfg, "binomial"), rng)


def acceptance_log_ratio(logdet_sigma, t, s_tilde, r, logdet_hat):
    """``s_tilde - t/r + logdet(I + alpha Lt_sigma) - logdet(I + alpha L_hat)``."""
    value = s_tilde - t / r + logdet_sigma - logdet_hat
    if value > RATIO_SLACK:
        warnings.warn(f"acceptance log-ratio {value:.3e} is positive", AccuracyWarning, stacklevel=2)
    return float(value)


def poisson_process_determinants(sampler, r, draws, rng):
    """``det(I + alpha Lt_sigma)`` with ``s_i ~ Poisson(r l_i)`` (no ``e^{1/r}`` inflation).

    Under this proposal the expectation equals ``det(I + alpha L)`` for any
    positive marginals, which makes it a Monte-Carlo check of the rescaling.
    """
    l_all = sampler.cache.lookup(np.arange(sampler.n))
    s = rng.poisson(r * l_all, size=(draws, sampler.n))
    prop = sampler._expand(s, l_all, s.sum(axis=1), r)
    lr = sampler.log_ratios(prop)
    logdet = lr - sampler.core.s_tilde + prop.t / r + sampler.core.logdet_hat
    return np.exp(logdet)
