import numpy as np
import pytest

from cocyclepaths import PeriodicCocycle


def random_cocycle(seed: int, d: int, p: int, spread: float = 0.5) -> PeriodicCocycle:
    """Maps ``I + spread * G`` with Gaussian ``G``; well conditioned for small spread."""
    rng = np.random.default_rng(seed)
    maps = np.eye(d)[None] + spread * rng.normal(size=(p, d, d)) / np.sqrt(d)
    return PeriodicCocycle(maps)


def random_unit_vectors(rng, d: int, count: int) -> np.ndarray:
    V = rng.normal(size=(count, d))
    return V / np.linalg.norm(V, axis=1, keepdims=True)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def random_linear(rng, d: int) -> np.ndarray:
    """A well-conditioned matrix with singular values in [0.5, 2]."""
    from scipy.stats import ortho_group

    U = ortho_group.rvs(d, random_state=rng)
    V = ortho_group.rvs(d, random_state=rng)
    return U @ np.diag(np.exp(rng.uniform(np.log(0.5), np.log(2.0), size=d))) @ V.T


def nearby(rng, A: np.ndarray, size: float) -> np.ndarray:
    E = rng.normal(size=A.shape)
    return A + size * E / np.linalg.norm(E, 2)


def random_connection(rng, d: int, size: float = 0.02, r_in: float = 0.5, r_out: float = 1.0):
    from cocyclepaths import build_glued

    A = random_linear(rng, d)
    return build_glued(A, nearby(rng, A, size), r_in, r_out)
