"""Exact spectral samplers for DPP(M) and k-DPP(M) on small dense matrices.

Both follow the two-phase recipe: pick a set of eigenvectors (independently
for a DPP, via elementary symmetric polynomials for a k-DPP), then sample the
projection DPP they span one item at a time.
"""

from __future__ import annotations

import numpy as np

from .errors import InfeasibleSize, NumericalFailure
from .linalg import TOL_PSD, eigendecompose_psd

PROB_SLACK = 1e-9
DEGENERACY_FLOOR = 1e-12


def elementary_symmetric(eigenvalues, k_max):
    """``e_0 .. e_kmax`` of the given values by the standard one-pass recurrence."""
    e = np.zeros(k_max + 1)
    e[0] = 1.0
    for lam in np.asarray(eigenvalues, dtype=float):
        e[1:] = e[1:] + lam * e[:-1]
    return e


def _esp_table(eigenvalues, k):
    """``E[l, j] = e_l(lam_1..lam_j)`` for ``l <= k``."""
    lam = np.asarray(eigenvalues, dtype=float)
    E = np.zeros((k + 1, lam.size + 1))
    E[0, :] = 1.0
    for j, x in enumerate(lam, start=1):
        E[1:, j] = E[1:, j - 1] + x * E[:-1, j - 1]
    return E


def _check_probs(p, label):
    if p.size and (p.min() < -PROB_SLACK or p.max() > 1 + PROB_SLACK):
        raise NumericalFailure(f"{label} probability outside [0, 1]: [{p.min()}, {p.max()}]")


def floor_eigenvalues(vals):
    """Zero eigenvalues that are rounding noise relative to the largest one."""
    top = vals.max(axis=-1, keepdims=True) if vals.size else 0.0
    return np.where(vals > DEGENERACY_FLOOR * np.maximum(top, 0.0), vals, 0.0)


def sample_projection(V, rng):
    """Sample from the projection DPP with kernel ``V V^T`` (``V`` orthonormal columns)."""
    V = np.array(V, dtype=float)
    out = []
    while V.shape[1]:
        rowsq = np.einsum("ij,ij->i", V, V)
        _check_probs(rowsq, "projection")
        rowsq = np.clip(rowsq, 0.0, None)
        total = rowsq.sum()
        if total <= DEGENERACY_FLOOR:
            raise NumericalFailure("projection basis collapsed")
        i = int(np.searchsorted(np.cumsum(rowsq), rng.random() * total, side="right"))
        i = min(i, V.shape[0] - 1)
        out.append(i)
        j = int(np.argmax(np.abs(V[i])))
        pivot = V[i, j]
        if abs(pivot) < DEGENERACY_FLOOR:
            raise NumericalFailure("degenerate pivot in projection sampler")
        V = V - np.outer(V[:, j] / pivot, V[i])
        V = np.delete(V, j, axis=1)
        if V.shape[1]:
            V, _ = np.linalg.qr(V)  # re-orthogonalize the remaining basis
    return np.sort(np.array(out, dtype=np.intp))


def sample_dpp_eig(eigenvalues, eigenvectors, rng):
    keep = rng.random(eigenvalues.size) < eigenvalues / (eigenvalues + 1.0)
    return sample_projection(eigenvectors[:, keep], rng)


def sample_dpp(M, rng, scale=1.0):
    """Draw ``S ~ DPP(scale * M)``; returns sorted row indices of ``M``."""
    M = np.asarray(M, dtype=float)
    if M.shape[0] == 0:
        return np.zeros(0, dtype=np.intp)
    vals, vecs = eigendecompose_psd(M)
    return sample_dpp_eig(scale * floor_eigenvalues(vals), vecs, rng)


def sample_kdpp_small(M, k, rng):
    """Draw ``S ~ k-DPP(M)``: ``Pr(S) = det(M_S) / e_k(eigenvalues)``."""
    M = np.asarray(M, dtype=float)
    if k == 0:
        return np.zeros(0, dtype=np.intp)
    vals, vecs = eigendecompose_psd(M)
    if k > M.shape[0] or (vals > TOL_PSD * max(vals[0], 0.0)).sum() < k:
        raise InfeasibleSize(f"k = {k} exceeds the numerical rank of M")
    E = _esp_table(vals, k)
    chosen = []
    remaining = k
    for j in range(vals.size, 0, -1):
        if remaining == 0:
            break
        if j == remaining:
            take = True
        else:
            take = rng.random() < vals[j - 1] * E[remaining - 1, j - 1] / E[remaining, j]
        if take:
            chosen.append(j - 1)
            remaining -= 1
    return sample_projection(vecs[:, chosen], rng)


def sample_dpp_batch(Ms, rng, scale=1.0):
    """Independent draws ``S_g ~ DPP(scale * Ms[g])`` for a stack of equal-size matrices."""
    Ms = np.asarray(Ms, dtype=float)
    out = [np.zeros(0, dtype=np.intp) for _ in range(Ms.shape[0])]
    for rows, picks in sample_dpp_batch_grouped(Ms, rng, scale):
        for g, p in zip(rows, np.sort(picks, axis=1)):
            out[g] = p
    return out


def sample_dpp_batch_grouped(Ms, rng, scale=1.0):
    """Like :func:`sample_dpp_batch` but grouped by sample size.

    Returns ``[(rows, picks), ...]`` where ``picks[j]`` holds the (unsorted)
    indices drawn for ``Ms[rows[j]]``; empty draws are omitted.

    The projection phase works on the kernel ``K = V V^T`` and conditions on
    each pick by a Schur-complement update, which is the same chain rule as
    :func:`sample_projection` written without an explicit basis.
    """
    Ms = np.asarray(Ms, dtype=float)
    G, t, _ = Ms.shape
    if t == 0 or G == 0:
        return []
    vals, vecs = np.linalg.eigh(0.5 * (Ms + np.swapaxes(Ms, 1, 2)))
    top = np.maximum(vals[:, -1:], 0.0)
    if (vals < -TOL_PSD * np.maximum(top, 1e-300)).any():
        raise NumericalFailure("stacked matrix is not PSD")
    lam = scale * floor_eigenvalues(np.maximum(vals, 0.0))
    keep = rng.random(lam.shape) < lam / (lam + 1.0)
    sizes = keep.sum(axis=1)
    groups = []
    for size in np.unique(sizes):
        if size == 0:
            continue
        rows = np.flatnonzero(sizes == size)
        V = vecs[rows].transpose(0, 2, 1)[keep[rows]].reshape(rows.size, size, t)
        K = np.einsum("gki,gkj->gij", V, V)
        groups.append((rows, _project_batch(K, int(size), rng)))
    return groups


def _project_batch(K, size, rng):
    B, t, _ = K.shape
    ar = np.arange(B)
    picks = np.empty((B, size), dtype=np.intp)
    for step in range(size):
        d = np.diagonal(K, axis1=1, axis2=2).copy()
        _check_probs(d, "projection")
        np.clip(d, 0.0, None, out=d)
        cum = np.cumsum(d, axis=1)
        total = cum[:, -1]
        if (total <= DEGENERACY_FLOOR).any():
            raise NumericalFailure("projection kernel collapsed")
        u = rng.random(B) * total
        i = np.minimum((cum <= u[:, None]).sum(axis=1), t - 1)
        picks[:, step] = i
        if step + 1 < size:
            col = K[ar, :, i]
            piv = col[ar, i]
            K = K - col[:, :, None] * col[:, None, :] / piv[:, None, None]
    return picks
