from pathlib import Path

import numpy as np
import pytest

DATA = Path(__file__).parent / "data"


@pytest.fixture
def data_dir():
    return DATA


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


def power_iteration(M, iters=5000, seed=0):
    """Dominant eigenvalue modulus of ``M`` by normalized power iteration."""
    x = np.random.default_rng(seed).standard_normal(M.shape[0])
    lam = 0.0
    for _ in range(iters):
        y = M @ x
        nrm = np.linalg.norm(y)
        if nrm == 0.0:
            return 0.0
        lam, x = nrm / np.linalg.norm(x), y / nrm
    return lam


def sym_sqrt_inv(T):
    w, V = np.linalg.eigh(T)
    return (V / np.sqrt(w)) @ V.T
