import math

import numpy as np
import pytest

from alphadpp.bless import (
    BlessConfig,
    SearchInterval,
    bless_i,
    bless_round,
    dictionary_deff,
    theory_q,
    touch,
)
from alphadpp.data import gaussian_mixture
from alphadpp.dictionary import Dictionary, certify_accuracy
from alphadpp.errors import BudgetExhausted, ConfigError, EmptyDictionary
from alphadpp.linalg import KernelSource, deff_from_eigenvalues
from alphadpp.poisson_binomial import mode, size_pmf


def lemma4_bounds(L, k):
    lam = np.clip(np.linalg.eigvalsh(L), 0, None)
    return 0.25 * (k - 1) / np.trace(L), 8 * (k + 2) / deff_from_eigenvalues(lam)


def mixture_source(n, seed, sigma=4.0):
    return KernelSource.from_features(gaussian_mixture(n, seed=seed), "rbf", sigma)


def test_identity_kernel_interval():
    n, k = 100, 3
    src = KernelSource.explicit(np.eye(n))
    q = theory_q(n, 1.0)
    for seed in range(5):
        res = bless_i(src, k, BlessConfig(q=q), np.random.default_rng(seed))
        lo, hi = lemma4_bounds(np.eye(n), k)
        iv = res.interval
        assert lo <= iv.alpha_min < iv.alpha_max <= hi
        # closed form d_eff(alpha I) = n alpha / (alpha + 1) crosses 2(k+2) only at the last level
        deff = lambda a: n * a / (a + 1)
        assert deff(iv.alpha_max) > 2 * (k + 2) * 0.5
        assert deff(iv.alpha_max / 2) <= 2 * (k + 2) * 2


@pytest.mark.parametrize("seed", range(5))
def test_interval_ordering_practical_q(seed):
    src = mixture_source(400, seed)
    res = bless_i(src, 4, BlessConfig(), np.random.default_rng(seed))
    assert res.interval.alpha_min < res.interval.alpha_max
    assert res.dictionary.m > 0


def test_mode_k_inside_interval():
    n, k = 500, 5
    src = mixture_source(n, 0)
    lam = np.clip(np.linalg.eigvalsh(src.dense()), 0, None)
    res = bless_i(src, k, BlessConfig(q=theory_q(n, 1.0)), np.random.default_rng(0))
    grid = np.geomspace(res.interval.alpha_min, res.interval.alpha_max, 200)
    assert any(mode(size_pmf(lam, a)) == k for a in grid)


def test_round_dense_when_b_is_one():
    src = mixture_source(200, 1)
    touched = np.zeros(200, dtype=bool)
    prev = Dictionary.full(200)
    bless_round(src, prev, 0.1, 2.0, 1.0, np.random.default_rng(0), touched)
    assert touched.all()


def test_round_saturated_keeps_all_touched():
    src = mixture_source(200, 2)
    prev = Dictionary.full(200)
    b = 0.3
    rng = np.random.default_rng(1)
    touched = np.zeros(200, dtype=bool)
    d, _ = bless_round(src, prev, 1.0, 1e9, b, rng, touched)
    assert np.array_equal(np.sort(d.indices), np.flatnonzero(touched))
    assert np.allclose(d.weights, 1 / b)


def test_touch_fraction_within_three_sigma():
    n = 5000
    rng = np.random.default_rng(2)
    for b in (0.01, 0.1, 0.5):
        frac = touch(n, b, rng).size / n
        assert frac <= b + 3 * math.sqrt(b * (1 - b) / n)


def test_round_touch_fraction():
    src = mixture_source(2000, 3)
    prev = Dictionary(np.arange(50), np.full(50, 40.0))
    rng = np.random.default_rng(3)
    q, alpha = 2.0, 0.01
    b = min(q * alpha * src.kappa_sq, 1.0)
    touched = np.zeros(2000, dtype=bool)
    bless_round(src, prev, alpha, q, b, rng, touched)
    assert touched.mean() <= b + 3 * math.sqrt(b * (1 - b) / 2000)


def test_dictionary_deff_unsaturated_is_size_over_q():
    l = np.array([0.01, 0.02, 0.05])
    q = 3.0
    d = Dictionary([0, 1, 2], 1 / (q * l))
    assert dictionary_deff(d, l) == pytest.approx(3 / q)


def round_sizes(n, q, seed):
    """m / q and the exact d_eff for one round at a fixed alpha."""
    src = mixture_source(n, seed)
    lam = np.clip(np.linalg.eigvalsh(src.dense()), 0, None)
    alpha = 0.05
    b = min(q * alpha * src.kappa_sq, 1.0)
    d, _ = bless_round(src, Dictionary.full(n), alpha, q, b, np.random.default_rng(seed))
    return d.m / q, deff_from_eigenvalues(lam, alpha)


def test_size_bound_theory_q():
    n = 300
    q = theory_q(n, 1.0)
    ok = 0
    for seed in range(10):
        ratio, deff = round_sizes(n, q, seed)
        ok += 0.5 * deff <= ratio <= 2 * deff
    assert ok >= 9, "m/q is capped by n/q when every keep probability saturates"


def test_size_bound_unsaturated_q():
    ok = 0
    for seed in range(10):
        ratio, deff = round_sizes(2000, 2.0, seed)
        ok += 0.5 * deff <= ratio <= 2 * deff
    assert ok >= 9


def test_final_dictionary_certified_theory_q():
    n = 300
    ok = 0
    for seed in range(10):
        src = mixture_source(n, seed)
        res = bless_i(src, 4, BlessConfig(q=theory_q(n, 1.0)), np.random.default_rng(seed))
        eps = min(0.5, 1.0 / res.deff_max)
        ok += certify_accuracy(res.dictionary, src, res.interval.alpha_max, eps)
    assert ok >= 9


def test_deff_estimates_nondecreasing():
    ok = 0
    for seed in range(10):
        src = mixture_source(1000, seed)
        res = bless_i(src, 5, BlessConfig(), np.random.default_rng(seed))
        levels = [res.interval.deff_by_level[a] for a in sorted(res.interval.deff_by_level)]
        ok += all(b >= a for a, b in zip(levels, levels[1:]))
    assert ok >= 9


def test_k_equals_one_supported():
    src = mixture_source(300, 4)
    res = bless_i(src, 1, BlessConfig(), np.random.default_rng(4))
    assert res.interval.alpha_min <= res.interval.alpha_max


def test_empty_dictionary_without_doubling():
    src = KernelSource.explicit(np.eye(50) * 1e-12, kappa_sq=1.0)
    with pytest.raises(EmptyDictionary):
        bless_i(src, 2, BlessConfig(q=0.01, q_doubling=False), np.random.default_rng(0))


def test_restart_budget():
    src = KernelSource.explicit(np.eye(50) * 1e-12, kappa_sq=1.0)
    with pytest.raises(BudgetExhausted):
        bless_i(src, 2, BlessConfig(q=0.01, max_restarts=2), np.random.default_rng(0))


def test_restarts_double_q():
    src = mixture_source(300, 5)
    res = bless_i(src, 3, BlessConfig(q=1e-3), np.random.default_rng(5))
    assert res.q == pytest.approx(1e-3 * 2**res.restarts)
    assert res.restarts >= 1


def test_config_and_interval_validation():
    with pytest.raises(ConfigError):
        BlessConfig(q=0)
    with pytest.raises(ValueError):
        SearchInterval(2.0, 1.0)
    iv = SearchInterval(0.5, 2.0, {0.5: 1.0})
    assert iv.gamma == 4.0
    assert '"alpha_min": 0.5' in iv.to_json()
