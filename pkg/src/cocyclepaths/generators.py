"""Seeded random cocycles with a promised structure.

All kinds are built as ``A_n = Q_{n+1} T_n Q_n^T`` or ``U diag(s) V^T`` with
Haar-random orthogonal factors, so the bound ``C`` is controlled by the middle
factor alone.  Every generated cocycle is checked against its promise before
it is returned.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.stats import ortho_group

from .core import PeriodicCocycle, bound_of
from .errors import InfeasibleSpec, InvalidArgument
from .spectral import is_saddle, spectrum_of

KINDS = ("generic", "saddle", "det_one_2d", "prescribed_moduli")


@dataclass(frozen=True)
class GeneratorSpec:
    dim: int
    period: int
    bound: float
    kind: str = "generic"
    seed: int = 0
    moduli: Optional[Sequence[float]] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidArgument(f"unknown generator kind {self.kind!r}; expected one of {KINDS}")
        if self.dim < 1 or self.period < 1:
            raise InvalidArgument("dim and period must be positive")
        if not self.bound >= 1.0:
            raise InfeasibleSpec("bound C must be at least 1")


def _orth(rng, d: int) -> np.ndarray:
    if d == 1:
        return np.array([[rng.choice([-1.0, 1.0])]])
    return ortho_group.rvs(d, random_state=rng)


def _periodic_frames(rng, d: int, p: int) -> np.ndarray:
    Q = np.stack([_orth(rng, d) for _ in range(p)])
    return np.concatenate([Q, Q[:1]])


def _generic(spec: GeneratorSpec, rng) -> np.ndarray:
    d, p, C = spec.dim, spec.period, spec.bound
    maps = np.empty((p, d, d))
    for n in range(p):
        s = np.exp(rng.uniform(-np.log(C), np.log(C), size=d))
        maps[n] = _orth(rng, d) @ np.diag(s) @ _orth(rng, d).T
    return maps


def _triangular_maps(spec: GeneratorSpec, rng, log_moduli: np.ndarray) -> np.ndarray:
    """``Q_{n+1} T_n Q_n^T`` with upper-triangular ``T_n`` whose diagonal
    products are ``exp(log_moduli)``."""
    d, p, C = spec.dim, spec.period, spec.bound
    per_step = log_moduli / p
    if np.max(np.abs(per_step)) >= np.log(C):
        raise InfeasibleSpec("prescribed moduli need per-step rates beyond the bound C")
    # zero-sum jitter keeps the products exact while varying the steps
    room = np.log(C) - np.max(np.abs(per_step))
    jitter = rng.uniform(-0.5, 0.5, size=(p, d)) * min(room, 0.2)
    jitter -= jitter.mean(axis=0)
    diag_logs = per_step[None, :] + jitter
    signs = np.where(rng.random((p, d)) < 0.5, -1.0, 1.0)
    signs[-1] = signs[-1] * np.prod(signs, axis=0)  # positive products
    Q = _periodic_frames(rng, d, p)
    maps = np.empty((p, d, d))
    for n in range(p):
        T = np.diag(signs[n] * np.exp(diag_logs[n]))
        off = np.triu(rng.normal(size=(d, d)), 1)
        scale = 0.5
        while True:
            M = T + scale * off
            sv = np.linalg.svd(M, compute_uv=False)
            if max(sv[0], 1.0 / sv[-1]) <= C:
                break
            scale *= 0.5
            if scale < 1e-12:
                M = T
                break
        maps[n] = Q[n + 1] @ M @ Q[n].T
    return maps


def _saddle_logs(spec: GeneratorSpec, rng) -> np.ndarray:
    d = spec.dim
    if d < 2:
        raise InfeasibleSpec("a saddle needs dimension at least 2")
    top = min(3.0, 0.8 * spec.period * np.log(spec.bound))
    if top <= 0.1 + 0.05 * d:
        raise InfeasibleSpec("bound C and period too small for a saddle")
    while True:
        mags = rng.uniform(0.1, top, size=d)
        signs = rng.choice([-1.0, 1.0], size=d)
        signs[0], signs[1] = -1.0, 1.0
        logs = np.sort(signs * mags)
        if np.all(np.diff(logs) > 0.05):
            return logs


def _det_one_2d(spec: GeneratorSpec, rng) -> np.ndarray:
    if spec.dim != 2:
        raise InfeasibleSpec("det_one_2d needs dim = 2")
    p, C = spec.period, spec.bound
    root = np.sqrt(C)
    H = np.empty((p + 1, 2, 2))
    for n in range(p):
        s = np.exp(rng.uniform(0.0, np.log(root)))
        U, V = _orth(rng, 2), _orth(rng, 2)
        if np.linalg.det(U) * np.linalg.det(V) < 0:
            U[:, 1] = -U[:, 1]
        H[n] = U @ np.diag([s, 1.0 / s]) @ V.T
    H[p] = H[0]
    phi = rng.uniform(-np.pi, np.pi, size=p)
    total = np.mod(phi.sum(), np.pi)
    if min(total, np.pi - total) < 0.05:
        phi[0] += 0.5
    maps = np.empty((p, 2, 2))
    for n in range(p):
        c, s = np.cos(phi[n]), np.sin(phi[n])
        R = np.array([[c, -s], [s, c]])
        maps[n] = H[n + 1] @ R @ np.linalg.inv(H[n])
    return maps


def generate(spec: GeneratorSpec) -> PeriodicCocycle:
    """Deterministic random cocycle for ``spec``; the kind's promise is checked.

    * ``generic``: ``U diag(s) V^T`` with singular values in ``[1/C, C]``.
    * ``saddle``: product moduli ``exp(l_i)`` with ``|l_i|`` in ``[0.1, 3]``
      (capped at ``0.8 p log C``), pairwise log-gaps above 0.05 and both signs
      present.
    * ``prescribed_moduli``: product moduli given by ``spec.moduli``.
    * ``det_one_2d``: ``H_{n+1} R(phi_n) H_n^{-1}`` with ``|H|, |H^{-1}| <= sqrt(C)``,
      whose first return is elliptic.
    """
    rng = np.random.default_rng(spec.seed)
    if spec.kind == "generic":
        maps = _generic(spec, rng)
    elif spec.kind == "saddle":
        maps = _triangular_maps(spec, rng, _saddle_logs(spec, rng))
    elif spec.kind == "prescribed_moduli":
        if spec.moduli is None or len(spec.moduli) != spec.dim:
            raise InfeasibleSpec("prescribed_moduli needs one modulus per dimension")
        mod = np.asarray(spec.moduli, dtype=float)
        if np.any(mod <= 0):
            raise InfeasibleSpec("moduli must be positive")
        maps = _triangular_maps(spec, rng, np.log(mod))
    else:
        maps = _det_one_2d(spec, rng)
    c = PeriodicCocycle(maps)
    if bound_of(c) > spec.bound + 1e-9:
        raise InfeasibleSpec(f"generated bound {bound_of(c):.6g} exceeds {spec.bound}")
    if spec.kind == "saddle" and not is_saddle(c):
        raise InfeasibleSpec("generated cocycle is not a saddle")
    if spec.kind == "det_one_2d":
        if np.max(np.abs(np.linalg.det(maps) - 1.0)) > 1e-12:
            raise InfeasibleSpec("determinants drifted from 1")
        if spectrum_of(c).all_real:
            raise InfeasibleSpec("first return is not elliptic")
    return c
