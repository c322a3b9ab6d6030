import collections
import math
import warnings

import numpy as np
import pytest

from alphadpp.bless import SearchInterval
from alphadpp.errors import ConfigError, InfeasibleSize, LowConfidenceWarning
from alphadpp.kdpp import (
    BinarySearchConfig,
    KDPPSampler,
    binary_search_alpha,
    draws_per_step,
    oracle_call_bound,
    sample_kdpp,
    search_step_limit,
)
from alphadpp.linalg import KernelSource
from alphadpp.poisson_binomial import branching_threshold, mode, size_pmf
from alphadpp.validation import random_rbf_instance


def pmf_oracle(lam):
    def oracle(alpha, t, rng):
        return rng.choice(lam.size + 1, size=t, p=size_pmf(lam, alpha).probs)

    return oracle


def test_tight_interval_returns_alpha_min():
    calls = []
    oracle = lambda a, t, rng: calls.append(t) or [0] * t
    k = 3
    iv = SearchInterval(1.0, 1.0 + 0.5 / (k + 3) ** 2)
    res = binary_search_alpha(oracle, iv, k, BinarySearchConfig(), np.random.default_rng(0))
    assert res.alpha_hat == 1.0
    assert res.oracle_calls == 0 and not calls


def test_identity_spectrum_success():
    lam = np.ones(50)
    k = 5
    cfg = BinarySearchConfig()
    for seed in range(10):
        rng = np.random.default_rng(seed)
        res = binary_search_alpha(pmf_oracle(lam), SearchInterval(1e-3, 10.0), k, cfg, rng)
        assert 1e-3 <= res.alpha_hat <= 10.0
        assert size_pmf(lam, res.alpha_hat).prob(k) >= cfg.c / (4 * 12 * math.sqrt(3 * (k + 1)))


def test_branching_direction_on_synthetic_spectra():
    rng = np.random.default_rng(1)
    cfg = BinarySearchConfig()
    for _ in range(20):
        lam = rng.lognormal(sigma=1.5, size=int(rng.integers(30, 200)))
        k = int(rng.integers(2, 15))
        res = binary_search_alpha(pmf_oracle(lam), SearchInterval(1e-4, 1e2), k, cfg, rng)
        for mid, *_ in res.history:
            d = size_pmf(lam, mid)
            if d.prob(k) >= branching_threshold(k, cfg.c):
                continue
            if mode(d) < k:
                assert d.prob_below(k) > d.prob_above(k)
            elif mode(d) > k:
                assert d.prob_above(k) > d.prob_below(k)


def test_oracle_call_formula():
    cfg = BinarySearchConfig(c=0.25, C=4, delta=0.1)
    assert search_step_limit(16.0, cfg) == 4
    assert search_step_limit(1.5, cfg) == 1
    assert draws_per_step(1, 4, cfg) == math.ceil(4 * 2 * math.log(10))
    assert oracle_call_bound(16.0, 4, cfg) == 4 * math.ceil(8 * math.log(4 / 0.1))


def test_exhaustion_falls_back_with_warning():
    oracle = lambda a, t, rng: [0] * (t // 2) + [9] * (t - t // 2)
    iv = SearchInterval(1.0, 1024.0)
    with pytest.warns(LowConfidenceWarning):
        res = binary_search_alpha(oracle, iv, 3, BinarySearchConfig(max_steps=2), np.random.default_rng(0))
    assert res.low_confidence and res.alpha_hat == 1.0
    assert res.steps == 2


def test_config_validation():
    with pytest.raises(ConfigError):
        BinarySearchConfig(c=1.5)
    with pytest.raises(ConfigError):
        BinarySearchConfig(C=0.5)
    with pytest.raises(ConfigError):
        BinarySearchConfig(delta=1.0)


def test_k_equals_n():
    src = random_rbf_instance(6, 0)
    res = sample_kdpp(src, 6, np.random.default_rng(0))
    assert res.sample.tolist() == list(range(6))


def test_k_above_n():
    with pytest.raises(InfeasibleSize):
        KDPPSampler(random_rbf_instance(4, 0), 5, np.random.default_rng(0))


def test_identity_uniform_pairs():
    n, k = 6, 2
    src = KernelSource.explicit(np.eye(n))
    sampler = KDPPSampler(src, k, np.random.default_rng(1))
    draws = 15_000
    c = collections.Counter(tuple(s.tolist()) for s in sampler.sample_many(draws))
    p = 1 / 15
    assert len(c) == 15
    for v in c.values():
        assert abs(v - draws * p) <= 3 * math.sqrt(draws * p * (1 - p))


def test_infeasible_rank():
    v = np.array([1.0, 0.5, 0.2, 0.1])
    src = KernelSource.explicit(np.outer(v, v))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        sampler = KDPPSampler(src, 2, np.random.default_rng(0), patience=300)
        with pytest.raises(InfeasibleSize):
            sampler.sample()


@pytest.mark.parametrize("seed", range(5))
def test_pipeline_invariants(seed):
    src = random_rbf_instance(40, seed, sigma=1.0)
    k = 3
    sampler = KDPPSampler(src, k, np.random.default_rng(seed))
    iv = sampler.bless.interval
    assert iv.alpha_min <= sampler.alpha_hat <= iv.alpha_max
    assert sampler.search.oracle_calls <= oracle_call_bound(iv.gamma, k, BinarySearchConfig())
    for s in sampler.sample_many(20):
        assert s.size == k and np.unique(s).size == k
    res = sampler.result(s)
    assert res.alpha_hat == sampler.alpha_hat
    assert res.trace.observed == sampler.observed
    assert 0 <= sampler.beta <= 1


def test_size_rejection_rate_when_search_succeeds():
    cfg = BinarySearchConfig()
    k = 3
    checked = 0
    for seed in range(10):
        src = random_rbf_instance(40, seed, sigma=1.0)
        sampler = KDPPSampler(src, k, np.random.default_rng(seed), search_cfg=cfg)
        if sampler.search.low_confidence or not sampler.search.history:
            continue
        if sampler.search.history[-1][0] != sampler.alpha_hat:
            continue
        checked += 1
        lam = np.clip(np.linalg.eigvalsh(src.dense()), 0, None)
        assert size_pmf(lam, sampler.alpha_hat).prob(k) >= 0.25 * branching_threshold(k, cfg.c)
    assert checked > 0


def test_determinism():
    src = random_rbf_instance(30, 3, sigma=1.0)
    a = KDPPSampler(src, 3, np.random.default_rng(9)).sample_many(10)
    b = KDPPSampler(src, 3, np.random.default_rng(9)).sample_many(10)
    assert [s.tolist() for s in a] == [s.tolist() for s in b]
