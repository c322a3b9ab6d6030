"""Kernel access and small dense linear algebra.

The similarity matrix ``L`` is only ever touched through a :class:`KernelSource`:
single entries, rectangular blocks (rows/cols may repeat), diagonals, and
stacks of principal blocks. Feature-based kernels are evaluated on demand so
an ``n x n`` matrix is never materialized.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

from .errors import KappaBoundViolated, NotPSD, NumericalFailure, Unsupported

TOL_PSD = 1e-8
TOL_SYM = 1e-10
KAPPA_TOL = 1e-9
EXPLICIT_CAP = 20_000

KERNELS = ("rbf", "linear", "cosine")


class KernelSource:
    """Read-only access to a PSD similarity matrix ``L`` with ``|L_ij| <= kappa_sq``.

    Build one with :meth:`explicit` or :meth:`from_features`. Instances are
    immutable after construction and safe to share.
    """

    def __init__(self, n, kappa_sq, *, matrix=None, features=None, kernel=None, sigma=1.0):
        if kappa_sq <= 0:
            raise ValueError("kappa_sq must be positive")
        self.n = int(n)
        self.kappa_sq = float(kappa_sq)
        self._matrix = matrix
        self._features = features
        self.kernel = kernel if matrix is None else "explicit"
        self.sigma = float(sigma)
        if features is not None:
            self._sqnorms = np.einsum("ij,ij->i", features, features)

    @classmethod
    def explicit(cls, L, kappa_sq=None, cap=EXPLICIT_CAP):
        L = np.array(L, dtype=float)
        if L.ndim != 2 or L.shape[0] != L.shape[1]:
            raise ValueError("L must be square")
        n = L.shape[0]
        if n > cap:
            raise Unsupported(f"explicit kernels are limited to n <= {cap} (got {n})")
        scale = max(np.abs(L).max(initial=0.0), 1.0)
        if np.abs(L - L.T).max(initial=0.0) > TOL_SYM * scale:
            raise ValueError("L is not symmetric")
        L = 0.5 * (L + L.T)
        L.setflags(write=False)
        bound = float(np.abs(L).max(initial=0.0))
        if kappa_sq is None:
            kappa_sq = bound if bound > 0 else 1.0
        elif bound > kappa_sq * (1 + KAPPA_TOL):
            raise KappaBoundViolated(f"max |L_ij| = {bound} exceeds kappa_sq = {kappa_sq}")
        return cls(n, kappa_sq, matrix=L)

    @classmethod
    def from_features(cls, X, kernel="rbf", sigma=1.0):
        X = np.array(X, dtype=float)
        if X.ndim != 2:
            raise ValueError("features must be a 2-D array (n x d)")
        if kernel not in KERNELS:
            raise ValueError(f"unknown kernel {kernel!r}; expected one of {KERNELS}")
        if kernel == "rbf":
            if sigma <= 0:
                raise ValueError("sigma must be positive")
            kappa_sq = 1.0
        elif kernel == "cosine":
            norms = np.linalg.norm(X, axis=1)
            X = X / np.where(norms > 0, norms, 1.0)[:, None]
            kappa_sq = 1.0
        else:
            kappa_sq = float(np.einsum("ij,ij->i", X, X).max(initial=0.0)) or 1.0
        X.setflags(write=False)
        return cls(X.shape[0], kappa_sq, features=X, kernel=kernel, sigma=sigma)

    @property
    def is_explicit(self):
        return self._matrix is not None

    def _check_index(self, idx):
        idx = np.asarray(idx, dtype=np.intp)
        if idx.size and (idx.min() < 0 or idx.max() >= self.n):
            raise IndexError(f"item index out of range [0, {self.n})")
        return idx

    def _check_bound(self, B):
        if B.size and np.abs(B).max() > self.kappa_sq * (1 + KAPPA_TOL):
            raise KappaBoundViolated(
                f"kernel entry {np.abs(B).max()} exceeds kappa_sq = {self.kappa_sq}"
            )
        return B

    def _eval(self, Xa, Xb, sqa, sqb):
        # works on (..., a, d) x (..., b, d) stacks
        G = Xa @ np.swapaxes(Xb, -1, -2)
        if self.kernel == "rbf":
            d2 = sqa[..., :, None] + sqb[..., None, :] - 2.0 * G
            np.maximum(d2, 0.0, out=d2)
            return np.exp(-d2 / (2.0 * self.sigma**2))
        return G

    def entry(self, i, j):
        return float(self.block([i], [j])[0, 0])

    def block(self, rows, cols):
        """Return ``L[rows][:, cols]``; duplicated indices give duplicated rows/cols."""
        rows = self._check_index(rows)
        cols = self._check_index(cols)
        if self._matrix is not None:
            B = self._matrix[np.ix_(rows, cols)]
        else:
            X = self._features
            B = self._eval(X[rows], X[cols], self._sqnorms[rows], self._sqnorms[cols])
        return self._check_bound(B)

    def stacked_blocks(self, idx):
        """Principal blocks for a stack of index rows: ``(G, t) -> (G, t, t)``."""
        idx = self._check_index(idx)
        if self._matrix is not None:
            B = self._matrix[idx[..., :, None], idx[..., None, :]]
        else:
            X = self._features[idx]
            sq = self._sqnorms[idx]
            B = self._eval(X, X, sq, sq)
        return self._check_bound(B)

    def diag(self, idx):
        idx = self._check_index(idx)
        if self._matrix is not None:
            return self._matrix[idx, idx].copy()
        if self.kernel == "rbf":
            return np.ones(idx.shape)
        return self._sqnorms[idx].copy()

    def trace(self):
        return float(self.diag(np.arange(self.n)).sum())

    def dense(self, cap=4000):
        """Materialize the full matrix; only for small ``n`` (tests, oracles)."""
        if self.n > cap:
            raise Unsupported(f"refusing to materialize a {self.n} x {self.n} kernel")
        idx = np.arange(self.n)
        return self.block(idx, idx)


def _as_symmetric(M):
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("expected a square matrix")
    if M.size:
        scale = max(np.abs(M).max(), 1.0)
        if np.abs(M - M.T).max() > TOL_SYM * scale:
            raise ValueError("matrix is not symmetric")
    return 0.5 * (M + M.T)


def eigendecompose_psd(M, tol_psd=TOL_PSD):
    """Eigenpairs of a symmetric PSD matrix, eigenvalues in descending order.

    Negative eigenvalues down to ``-tol_psd * lambda_max`` are rounding noise
    and are clipped to zero; anything more negative raises :class:`NotPSD`.
    """
    M = _as_symmetric(M)
    m = M.shape[0]
    if m == 0:
        return np.zeros(0), np.zeros((0, 0))
    try:
        vals, vecs = np.linalg.eigh(M)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"eigendecomposition did not converge: {exc}") from exc
    vals, vecs = vals[::-1], vecs[:, ::-1]
    scale = vals[0] if vals[0] > 0 else np.abs(M).max()
    if vals[-1] < -tol_psd * scale:
        raise NotPSD(f"eigenvalue {vals[-1]:.3e} below -tol_psd * {scale:.3e}")
    return np.maximum(vals, 0.0), vecs


def log_det_i_plus(M, scale=1.0):
    """``log det(I + scale * M)`` via Cholesky, falling back to clipped eigenvalues."""
    M = _as_symmetric(M)
    m = M.shape[0]
    if m == 0:
        return 0.0
    A = scale * M
    A[np.diag_indices(m)] += 1.0
    try:
        c = scipy.linalg.cholesky(A, lower=True, check_finite=False)
        return float(2.0 * np.log(np.diag(c)).sum())
    except np.linalg.LinAlgError:
        pass
    vals, _ = eigendecompose_psd(M)
    out = np.log1p(scale * vals).sum()
    if not np.isfinite(out):
        raise NumericalFailure("log det(I + scale*M) is not finite")
    return float(out)


def effective_dimension(M, scale=1.0):
    """``tr(sM (sM + I)^-1) = sum_i s*l_i / (s*l_i + 1)`` over eigenvalues ``l_i`` of ``M``."""
    M = _as_symmetric(M)
    if M.shape[0] == 0 or scale == 0:
        return 0.0
    vals, _ = eigendecompose_psd(M)
    return deff_from_eigenvalues(vals, scale)


def deff_from_eigenvalues(eigenvalues, scale=1.0):
    x = scale * np.asarray(eigenvalues, dtype=float)
    return float((x / (x + 1.0)).sum())
