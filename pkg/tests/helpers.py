"""Small shared fixtures for the unit tests."""

import numpy as np


def random_psd(m, rng, rank=None, scale=1.0):
    A = rng.normal(size=(m, rank or m))
    return scale * (A @ A.T) / (rank or m)


def eig_logdet(M, s):
    return float(np.log1p(s * np.clip(np.linalg.eigvalsh(M), 0, None)).sum())
