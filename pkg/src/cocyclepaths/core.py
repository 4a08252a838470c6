"""Periodic linear cocycles and the max-norm distance on tuples of matrices.

Internally base points are ``0..p-1`` and ``maps[n]`` carries fiber ``n`` to
fiber ``n + 1 (mod p)``.  Serialized documents number the maps ``1..p``.
"""
from __future__ import annotations

from functools import cached_property

import numpy as np

from .errors import InvalidBase, InvalidMatrix, ShapeMismatch

COND_CEILING = 1e12


def _as_matrix(M) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise InvalidMatrix(f"expected a square matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise InvalidMatrix("matrix has non-finite entries")
    return M


def operator_norm(M) -> float:
    """Largest singular value of a square matrix (full SVD)."""
    M = _as_matrix(M)
    return float(np.linalg.svd(M, compute_uv=False)[0])


class PeriodicCocycle:
    """A period-``p`` tuple of invertible ``d x d`` real matrices.

    Parameters
    ----------
    maps : array_like, shape (p, d, d)
        ``maps[n]`` is the matrix from fiber ``n`` to fiber ``n + 1``.
    cond_ceiling : float
        Matrices with a 2-norm condition number at or above this are rejected.

    Instances are immutable; the stored array is read-only.
    """

    def __init__(self, maps, cond_ceiling: float = COND_CEILING):
        # a fixed memory layout keeps batched products reproducible bit for bit
        arr = np.array(maps, dtype=float, order="C")
        if arr.ndim == 2:
            arr = arr[None]
        if arr.ndim != 3 or arr.shape[1] != arr.shape[2] or arr.shape[0] < 1:
            raise InvalidMatrix(f"expected maps of shape (p, d, d), got {arr.shape}")
        if arr.shape[1] < 1:
            raise InvalidMatrix("dimension must be positive")
        if not np.all(np.isfinite(arr)):
            raise InvalidMatrix("cocycle has non-finite entries")
        sv = np.linalg.svd(arr, compute_uv=False)
        smin = sv[:, -1]
        with np.errstate(divide="ignore"):
            cond = np.where(smin > 0, sv[:, 0] / np.where(smin > 0, smin, 1.0), np.inf)
        bad = np.flatnonzero(cond >= cond_ceiling)
        if bad.size:
            raise InvalidMatrix(
                f"map {int(bad[0]) + 1} is singular or too ill-conditioned "
                f"(cond={cond[bad[0]]:.3g} >= {cond_ceiling:.3g})"
            )
        arr.flags.writeable = False
        self._maps = arr
        self._sv = sv

    @property
    def maps(self) -> np.ndarray:
        return self._maps

    @property
    def dim(self) -> int:
        return self._maps.shape[1]

    @property
    def period(self) -> int:
        return self._maps.shape[0]

    @cached_property
    def inverse_maps(self) -> np.ndarray:
        inv = np.linalg.inv(self._maps)
        inv.flags.writeable = False
        return inv

    @cached_property
    def norms(self) -> np.ndarray:
        return self._sv[:, 0].copy()

    @cached_property
    def inverse_norms(self) -> np.ndarray:
        return 1.0 / self._sv[:, -1]

    def __len__(self):
        return self.period

    def __getitem__(self, n):
        return self._maps[n % self.period]

    def __repr__(self):
        return f"PeriodicCocycle(dim={self.dim}, period={self.period})"

    def __eq__(self, other):
        if not isinstance(other, PeriodicCocycle):
            return NotImplemented
        return self._maps.shape == other._maps.shape and bool(np.array_equal(self._maps, other._maps))

    def __hash__(self):
        return hash((self._maps.shape, self._maps.tobytes()))

    def max_entry_diff(self, other: "PeriodicCocycle") -> float:
        _check_same_shape(self, other)
        return float(np.max(np.abs(self._maps - other._maps)))


def _check_same_shape(c1: PeriodicCocycle, c2: PeriodicCocycle):
    if c1.dim != c2.dim or c1.period != c2.period:
        raise ShapeMismatch(
            f"cocycles differ in shape: (d={c1.dim}, p={c1.period}) vs (d={c2.dim}, p={c2.period})"
        )


def batch_first_return(maps: np.ndarray) -> np.ndarray:
    """First returns at fiber 0 for a stack of cocycles, shape (m, p, d, d) -> (m, d, d).

    Every product in the package goes through this loop, so values computed
    during synthesis and during verification agree bit for bit.
    """
    m, p, d = maps.shape[0], maps.shape[1], maps.shape[2]
    B = np.broadcast_to(np.eye(d), (m, d, d)).copy()
    for k in range(p):
        B = maps[:, k] @ B
    return B


def first_return(c: PeriodicCocycle, base: int = 0) -> np.ndarray:
    """Return map ``A_{base+p-1} ... A_{base}`` at a base point."""
    p = c.period
    if not (0 <= base < p):
        raise InvalidBase(f"base {base} outside 0..{p - 1}")
    maps = c.maps if base == 0 else np.roll(c.maps, -base, axis=0)
    return batch_first_return(maps[None])[0]


def window_product(c: PeriodicCocycle, start: int, length: int) -> np.ndarray:
    """Product of ``length`` consecutive maps starting at fiber ``start`` (wrapping)."""
    P = np.eye(c.dim)
    for k in range(length):
        P = c.maps[(start + k) % c.period] @ P
    return P


def stack_norm2(X: np.ndarray) -> np.ndarray:
    """Operator 2-norms over the last two axes.

    Square 2x2 stacks use the closed form
    ``sigma_max^2 = (|X|_F^2 + sqrt(|X|_F^4 - 4 det^2)) / 2``; larger stacks
    take the top eigenvalue of the Gram matrix ``X^T X``, which is accurate to
    working precision for the largest singular value.
    """
    if X.shape[-2:] == (2, 2):
        a, b, c, d = X[..., 0, 0], X[..., 0, 1], X[..., 1, 0], X[..., 1, 1]
        f2 = a * a + b * b + c * c + d * d
        det = a * d - b * c
        disc = np.sqrt(np.maximum((f2 - 2 * det) * (f2 + 2 * det), 0.0))
        return np.sqrt((f2 + disc) / 2.0)
    if X.shape[-1] == 0 or X.shape[-2] == 0:
        return np.zeros(X.shape[:-2])
    G = np.swapaxes(X, -1, -2) @ X
    return np.sqrt(np.maximum(np.linalg.eigvalsh(G)[..., -1], 0.0))


def dist_cocycle(c1: PeriodicCocycle, c2: PeriodicCocycle) -> float:
    """max over n of ``max(|A_n - B_n|, |A_n^-1 - B_n^-1|)`` in operator norm."""
    _check_same_shape(c1, c2)
    fwd = stack_norm2(c1.maps - c2.maps)
    inv = stack_norm2(c1.inverse_maps - c2.inverse_maps)
    return float(max(fwd.max(), inv.max()))


def bound_of(c: PeriodicCocycle) -> float:
    """Smallest ``C`` with ``C^-1 <= |A_n v| <= C`` for all unit ``v`` and all ``n``."""
    return float(max(c.norms.max(), c.inverse_norms.max()))


def inverse_cocycle(c: PeriodicCocycle) -> PeriodicCocycle:
    """Cocycle of inverses traversed backwards.

    Its base point ``k`` is the original fiber ``(p - k) mod p``; its first
    return at base 0 is the inverse of the original one.
    """
    return PeriodicCocycle(c.inverse_maps[::-1], cond_ceiling=np.inf)


def repeat_cocycle(c: PeriodicCocycle, times: int) -> PeriodicCocycle:
    """The same orbit traversed ``times`` times (period ``times * p``)."""
    return PeriodicCocycle(np.concatenate([c.maps] * times), cond_ceiling=np.inf)


def identity_cocycle(dim: int, period: int = 1) -> PeriodicCocycle:
    return PeriodicCocycle(np.broadcast_to(np.eye(dim), (period, dim, dim)))


def constant_cocycle(M, period: int = 1) -> PeriodicCocycle:
    M = _as_matrix(M)
    return PeriodicCocycle(np.broadcast_to(M, (period,) + M.shape))
