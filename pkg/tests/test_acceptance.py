"""Acceptance suite: one test and one PASS/FAIL line per criterion.

Run with ``pytest -v tests/test_acceptance.py``; the lines are repeated in the
terminal summary under "acceptance criteria".
"""

import collections
import math
import sys
import time

import numpy as np
import pytest

from _report import record
from alphadpp.alpha_sampler import AlphaSampler, poisson_process_determinants
from alphadpp.bless import BlessConfig, bless_i, theory_q
from alphadpp.cli import bench_rows, build_parser
from alphadpp.data import gaussian_mixture
from alphadpp.dictionary import Dictionary
from alphadpp.kdpp import BinarySearchConfig, binary_search_alpha, oracle_call_bound
from alphadpp.bless import SearchInterval
from alphadpp.linalg import KernelSource, deff_from_eigenvalues, effective_dimension, log_det_i_plus
from alphadpp.oracle import two_sample_chi_square
from alphadpp.poisson_binomial import (
    DEFAULT_C,
    alpha_for_mean,
    branching_property_holds,
    darroch_bracket_holds,
    is_log_concave,
    is_unimodal,
    median,
    mode,
    mode_probability_bound_holds,
    size_pmf,
)
from alphadpp.validation import P_THRESHOLD, alpha_dpp_pvalue, kdpp_pvalue, random_rbf_instance

SEEDS = range(10)


def test_criterion_1_alpha_dpp_exactness():
    details, ok = [], True
    for dictionary in ("full", "poor"):
        t0 = time.perf_counter()
        ps = [alpha_dpp_pvalue(seed, 200_000, n=8, dictionary=dictionary) for seed in SEEDS]
        seconds = time.perf_counter() - t0
        passes = sum(p > P_THRESHOLD for p in ps)
        ok &= passes >= 9 and seconds <= 300
        details.append(f"{dictionary}: {passes}/10 seeds p>0.001, {seconds:.0f}s")
    assert record(1, ok, "; ".join(details))


def test_criterion_2_kdpp_exactness():
    ps = [kdpp_pvalue(seed, 50_000, n=8, k=2) for seed in SEEDS]
    passes = sum(p > P_THRESHOLD for p in ps)
    assert record(2, passes >= 9, f"{passes}/10 seeds p>0.001, min p={min(ps):.3g}")


def test_criterion_3_backend_equivalence():
    n = 6
    src = random_rbf_instance(n, 0)
    alpha = alpha_for_mean(np.linalg.eigvalsh(src.dense()), 2.0)
    results = []
    for label, dictionary in (("full", Dictionary.full(n)), ("poor", Dictionary([1, 4], [1.0, 1.0]))):
        sampler = AlphaSampler(src, dictionary, alpha)
        rng = np.random.default_rng([3, len(label)])
        patterns = {
            b: collections.Counter(sampler.propose(50_000, 2.0, rng, b).count_patterns(n))
            for b in ("uniform", "poisson", "binomial")
        }
        for a, b in (("uniform", "poisson"), ("uniform", "binomial"), ("poisson", "binomial")):
            results.append((f"{label} {a}/{b}", two_sample_chi_square(patterns[a], patterns[b])))
    ok = all(p > P_THRESHOLD for _, p in results)
    assert record(3, ok, ", ".join(f"{name} p={p:.3g}" for name, p in results))


def test_criterion_4_determinant_identity():
    n = 6
    src = random_rbf_instance(n, 1)
    L = src.dense()
    alpha = alpha_for_mean(np.linalg.eigvalsh(L), 2.0)
    target = math.exp(log_det_i_plus(L, alpha))
    errors = []
    for label, dictionary in (("full", Dictionary.full(n)), ("poor", Dictionary([0, 5], [1.0, 1.0]))):
        sampler = AlphaSampler(src, dictionary, alpha)
        dets = poisson_process_determinants(sampler, 2.0, 100_000, np.random.default_rng(4))
        errors.append((label, abs(dets.mean() / target - 1)))
    ok = all(e <= 0.02 for _, e in errors)
    assert record(4, ok, ", ".join(f"{label} rel. error {e:.2e}" for label, e in errors))


def test_criterion_5_lemma5():
    rng = np.random.default_rng(5)
    alphas = np.linspace(0.05, 1.0, 20)
    worst = math.inf
    for _ in range(100):
        m = int(rng.integers(1, 40))
        A = rng.normal(size=(m, int(rng.integers(1, m + 1)))) * rng.lognormal(sigma=2.0)
        M = A @ A.T
        d1 = effective_dimension(M, 1.0)
        tr = float(np.trace(M))
        for a in alphas:
            da = effective_dimension(M, a)
            worst = min(worst, da / d1 - a, a - da / tr)
    assert record(5, worst >= -1e-10, f"smallest slack {worst:.3e} over 2000 cases")


def random_spectrum(rng):
    n = int(rng.integers(1, 61))
    kind = rng.integers(3)
    if kind == 0:
        lam = rng.exponential(size=n)
    elif kind == 1:
        lam = rng.lognormal(sigma=3.0, size=n)
    else:
        lam = rng.pareto(1.0, size=n)
    lam[rng.random(n) < 0.1] = 0.0
    return lam * rng.lognormal(sigma=2.0)


def enumerate_pmf(p):
    out = np.zeros(p.size + 1)
    for bits in np.ndindex(*(2,) * p.size):
        b = np.array(bits, dtype=bool)
        out[b.sum()] += np.prod(np.where(b, p, 1 - p))
    return out


def test_criterion_6_poisson_binomial():
    rng = np.random.default_rng(6)
    failures = collections.Counter()
    for _ in range(200):
        d = size_pmf(random_spectrum(rng))
        failures["unimodal"] += not is_unimodal(d)
        failures["log-concave"] += not is_log_concave(d)
        failures["median"] += abs(median(d) - mode(d)) > 1
        failures["darroch"] += not darroch_bracket_holds(d)
        failures["mode bound"] += not mode_probability_bound_holds(d, DEFAULT_C)
        failures["branching"] += not all(
            branching_property_holds(d, k, DEFAULT_C) for k in range(d.probs.size)
        )
    worst = 0.0
    for _ in range(30):
        lam = random_spectrum(rng)[: int(rng.integers(1, 13))]
        d = size_pmf(lam)
        worst = max(worst, float(np.abs(d.probs - enumerate_pmf(d.success)).max()))
    ok = sum(failures.values()) == 0 and worst <= 1e-12
    detail = ", ".join(f"{k}: {v}" for k, v in failures.items())
    assert record(6, ok, f"counterexamples {detail}; pmf vs enumeration max error {worst:.1e}")


def test_criterion_7_binary_search():
    rng = np.random.default_rng(7)
    cfg = BinarySearchConfig()
    good = 0
    calls_ok = True
    for _ in range(20):
        k = int(rng.integers(2, 21))
        n = int(rng.integers(400, 2001))
        lam = rng.lognormal(sigma=2.0, size=n)
        lam /= alpha_for_mean(lam, 10 * (k + 2))  # d_eff(L) = 10(k+2)
        lo = 0.25 * (k - 1) / lam.sum()
        hi = 8 * (k + 2) / deff_from_eigenvalues(lam)
        interval = SearchInterval(lo, hi)

        def oracle(alpha, t, r):
            return r.choice(n + 1, size=t, p=size_pmf(lam, alpha).probs)

        res = binary_search_alpha(oracle, interval, k, cfg, rng)
        good += size_pmf(lam, res.alpha_hat).prob(k) >= cfg.c / (48 * math.sqrt(3 * (k + 1)))
        calls_ok &= res.oracle_calls <= oracle_call_bound(interval.gamma, k, cfg)
    ok = good >= 18 and calls_ok
    assert record(7, ok, f"{good}/20 instances meet the Pr(|S|=k) floor, call bound {'held' if calls_ok else 'VIOLATED'}")


def test_criterion_8_bless_interval():
    n, k = 500, 5
    q = theory_q(n, 1.0)
    good = 0
    for seed in SEEDS:
        src = KernelSource.from_features(gaussian_mixture(n, seed=seed), "rbf", 4.0)
        L = src.dense()
        lam = np.clip(np.linalg.eigvalsh(L), 0, None)
        res = bless_i(src, k, BlessConfig(q=q), np.random.default_rng(seed))
        iv = res.interval
        bounds = 0.25 * (k - 1) / np.trace(L) <= iv.alpha_min <= iv.alpha_max <= 8 * (k + 2) / deff_from_eigenvalues(lam)
        grid = np.geomspace(iv.alpha_min, iv.alpha_max, 200)
        has_mode = any(mode(size_pmf(lam, a)) == k for a in grid)
        good += bounds and has_mode
    assert record(8, good >= 9, f"{good}/10 seeds satisfy both bounds and contain a mode-k alpha (q={q:.0f})")


def test_criterion_9_acceptance_floor():
    rates = []
    for target in (1.0, 2.0, 3.0):
        src = random_rbf_instance(8, 9)
        alpha = alpha_for_mean(np.linalg.eigvalsh(src.dense()), target)
        sampler = AlphaSampler(src, Dictionary.full(8), alpha)
        r = sampler.s_tilde  # equals d_eff(alpha L) for the full dictionary
        rng = np.random.default_rng(int(target))
        prop = sampler.propose(10_000, r, rng)
        _, accept, _ = sampler.evaluate(prop, rng.random(10_000))
        rates.append((r, accept.mean()))
    ok = all(rate >= math.exp(-3) for _, rate in rates)
    assert record(9, ok, ", ".join(f"r={r:.2f}: rate {rate:.3f}" for r, rate in rates) + f" (floor {math.exp(-3):.3f})")


def test_criterion_10_trends():
    args = build_parser().parse_args(["bench", "--n-grid", "10000,30000,100000", "--reps", "3"])
    t0 = time.perf_counter()
    rows = bench_rows(args)
    total = time.perf_counter() - t0
    betas = [row["beta"] for row in rows]
    times = [row["mean_runtime"] for row in rows]
    decreasing = all(b < a for a, b in zip(betas, betas[1:]))
    ratio = max(times) / min(times)
    ok = decreasing and ratio <= 3 and total <= 1800
    detail = (
        f"beta {' > '.join(f'{b:.3f}' for b in betas)}; runtime {', '.join(f'{t:.2f}s' for t in times)}"
        f" (max/min {ratio:.2f}); total {total:.0f}s"
    )
    assert record(10, ok, detail)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
