"""Brute-force DPP and k-DPP probabilities plus a pooled chi-square test.

Only for small ground sets: every subset is enumerated.
"""

from __future__ import annotations

import itertools

import numpy as np
import scipy.stats

from .errors import Unsupported

MAX_ENUM = 14


def _check_size(L):
    L = np.asarray(L, dtype=float)
    if L.ndim != 2 or L.shape[0] != L.shape[1]:
        raise ValueError("L must be square")
    if L.shape[0] > MAX_ENUM:
        raise Unsupported(f"enumeration is limited to n <= {MAX_ENUM}")
    return L


def _det(L, S):
    if not S:
        return 1.0
    return float(np.linalg.det(L[np.ix_(S, S)]))


def enumerate_dpp(L):
    """``{S: det(L_S) / det(I + L)}`` over all subsets, keyed by sorted tuples."""
    L = _check_size(L)
    n = L.shape[0]
    norm = float(np.linalg.det(np.eye(n) + L))
    return {
        S: _det(L, S) / norm
        for size in range(n + 1)
        for S in itertools.combinations(range(n), size)
    }


def enumerate_kdpp(L, k):
    L = _check_size(L)
    n = L.shape[0]
    if not 0 <= k <= n:
        raise ValueError("k must lie in [0, n]")
    dets = {S: _det(L, S) for S in itertools.combinations(range(n), k)}
    total = sum(dets.values())
    if total <= 0:
        raise ValueError(f"no subset of size {k} has positive determinant")
    return {S: d / total for S, d in dets.items()}


def marginals_from_table(table, n):
    out = np.zeros(n)
    for S, p in table.items():
        out[list(S)] += p
    return out


def chi_square_gof(observed, expected, min_expected=5.0):
    """Pearson chi-square p-value of ``observed`` counts against ``expected`` probabilities.

    Cells are sorted by expected count and the smallest are pooled until every
    cell expects at least ``min_expected``. Observed keys absent from
    ``expected`` are impossible outcomes and give p = 0.
    """
    if any(key not in expected and c > 0 for key, c in observed.items()):
        return 0.0
    keys = list(expected)
    total = float(sum(observed.values()))
    exp = np.array([expected[key] for key in keys], dtype=float) * total
    obs = np.array([observed.get(key, 0) for key in keys], dtype=float)
    order = np.argsort(exp)
    exp, obs = exp[order], obs[order]
    cells_e, cells_o = [], []
    acc_e = acc_o = 0.0
    for e, o in zip(exp, obs):
        acc_e += e
        acc_o += o
        if acc_e >= min_expected:
            cells_e.append(acc_e)
            cells_o.append(acc_o)
            acc_e = acc_o = 0.0
    if acc_e > 0 or acc_o > 0:
        if cells_e:
            cells_e[-1] += acc_e
            cells_o[-1] += acc_o
        else:
            cells_e.append(acc_e)
            cells_o.append(acc_o)
    if len(cells_e) < 2:
        raise Unsupported("fewer than two cells after pooling")
    e = np.array(cells_e)
    o = np.array(cells_o)
    stat = float(((o - e) ** 2 / e).sum())
    return float(scipy.stats.chi2.sf(stat, df=len(e) - 1))


def two_sample_chi_square(counts_a, counts_b, min_expected=5.0):
    """p-value for two count tables drawn from the same law (contingency test).

    Categories are pooled, rarest first, until each pooled category expects
    ``min_expected`` in both samples.
    """
    keys = sorted(set(counts_a) | set(counts_b), key=lambda x: counts_a.get(x, 0) + counts_b.get(x, 0))
    na = float(sum(counts_a.values()))
    nb = float(sum(counts_b.values()))
    frac = min(na, nb) / (na + nb)
    rows = []
    acc = np.zeros(2)
    for key in keys:
        acc += (counts_a.get(key, 0), counts_b.get(key, 0))
        if acc.sum() * frac >= min_expected:
            rows.append(acc.copy())
            acc[:] = 0
    if acc.sum() > 0:
        if rows:
            rows[-1] += acc
        else:
            rows.append(acc.copy())
    if len(rows) < 2:
        raise Unsupported("fewer than two cells after pooling")
    table = np.array(rows).T
    _, p, _, _ = scipy.stats.chi2_contingency(table, correction=False)
    return float(p)
