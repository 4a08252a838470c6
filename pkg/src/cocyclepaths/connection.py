"""Radially glued maps at a fixed point of R^d.

A glued map is a stack of linear maps ``M_0, ..., M_k`` joined by radial bumps:

    C(x) = M_0 x + sum_j theta_j(|x|) (M_j - M_{j-1}) x

with ``theta_j = 1`` on ``|x| <= r_in_j`` and ``0`` on ``|x| >= r_out_j`` and
the annuli nested inward.  A single layer is a connection from the outer map
``A = M_0`` to the inner map ``B = M_1``; concatenating with a connection that
lives inside the inner linear region just appends a layer.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

from .core import PeriodicCocycle, _as_matrix, dist_cocycle, operator_norm, stack_norm2
from .errors import IncompatibleConcatenation, InvalidArgument, NotInvertible, NumericalFailure
from .spectral import strong_stable_space
from .verification import Certificate

PROFILES = ("plateau", "zero")
# max of d/ds of the exp(-1/s) plateau on [0, 1], attained at s = 1/2
PLATEAU_LIP = 2.0


def _f(s):
    with np.errstate(divide="ignore", over="ignore"):
        return np.where(s > 0, np.exp(-1.0 / np.where(s > 0, s, 1.0)), 0.0)


def _df(s):
    # f'(s) = f(s) / s^2
    safe = np.where(s > 0, s, 1.0)
    return np.where(s > 0, _f(s) / (safe * safe), 0.0)


def plateau(s):
    """Smooth step ``psi(s) = f(s) / (f(s) + f(1 - s))``: 0 for s <= 0, 1 for s >= 1."""
    s = np.asarray(s, dtype=float)
    a, b = _f(s), _f(1.0 - s)
    return a / (a + b)


def plateau_derivative(s):
    s = np.asarray(s, dtype=float)
    a, b = _f(s), _f(1.0 - s)
    da, db = _df(s), _df(1.0 - s)
    return (da * b + a * db) / (a + b) ** 2


@dataclass(frozen=True)
class Layer:
    r_in: float
    r_out: float
    profile: str = "plateau"

    def theta(self, r):
        r = np.asarray(r, dtype=float)
        if self.profile == "zero":
            return np.zeros_like(r)
        return plateau((self.r_out - r) / (self.r_out - self.r_in))

    def dtheta(self, r):
        r = np.asarray(r, dtype=float)
        if self.profile == "zero":
            return np.zeros_like(r)
        w = self.r_out - self.r_in
        return -plateau_derivative((self.r_out - r) / w) / w

    @property
    def lipschitz(self) -> float:
        return 0.0 if self.profile == "zero" else PLATEAU_LIP / (self.r_out - self.r_in)

    def scaled(self, lam: float) -> "Layer":
        return Layer(lam * self.r_in, lam * self.r_out, self.profile)


class GluedMap:
    """Piecewise map equal to ``inner`` near 0 and to ``outer`` far away.

    Build with :func:`build_glued`; :func:`concatenate_maps` and
    :func:`homothety_conjugate` produce further instances.
    """

    def __init__(self, matrices: Sequence[np.ndarray], layers: Sequence[Layer]):
        mats = tuple(np.array(_as_matrix(M), dtype=float) for M in matrices)
        if len(mats) != len(layers) + 1 or not layers:
            raise InvalidArgument("need one more matrix than layers, and at least one layer")
        d = mats[0].shape[0]
        for M in mats:
            if M.shape != (d, d):
                raise InvalidArgument("all matrices must share one square shape")
            M.setflags(write=False)
        for L in layers:
            if not 0 < L.r_in < L.r_out:
                raise InvalidArgument("radii must satisfy 0 < r_in < r_out")
            if L.profile not in PROFILES:
                raise InvalidArgument(f"unknown profile {L.profile!r}")
        for outer, inner in zip(layers, layers[1:]):
            if inner.r_out > outer.r_in:
                raise InvalidArgument("layers must be nested inward")
        self.matrices = mats
        self.layers = tuple(layers)
        self._diffs = tuple(b - a for a, b in zip(mats, mats[1:]))
        # the map inside the inner radius of layer j; a "zero" layer changes nothing
        level, exact = [mats[0]], True
        for j, L in enumerate(self.layers):
            if L.profile == "zero":
                level.append(level[-1])
            else:
                level.append(mats[j + 1] if exact else level[-1] + self._diffs[j])
            exact = exact and L.profile != "zero"
        self._level = tuple(level)

    dim = property(lambda self: self.matrices[0].shape[0])
    outer = property(lambda self: self.matrices[0])
    inner = property(lambda self: self.matrices[-1])
    r_out = property(lambda self: self.layers[0].r_out)
    r_in = property(lambda self: self.layers[-1].r_in)

    def __eq__(self, other):
        return (
            isinstance(other, GluedMap)
            and self.layers == other.layers
            and all(np.array_equal(a, b) for a, b in zip(self.matrices, other.matrices))
            and len(self.matrices) == len(other.matrices)
        )

    def __repr__(self):
        return f"GluedMap(dim={self.dim}, layers={len(self.layers)}, r_in={self.r_in:.6g}, r_out={self.r_out:.6g})"

    def _points(self, x):
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        return np.atleast_2d(x), single

    def _levels(self, r):
        # annuli are disjoint, so inside all of the first m inner radii only
        # layer m can be partially active
        return np.sum(r[:, None] <= np.array([L.r_in for L in self.layers])[None], axis=1)

    def __call__(self, x):
        X, single = self._points(x)
        r = np.linalg.norm(X, axis=1)
        m = self._levels(r)
        Y = np.empty_like(X)
        for k in np.unique(m):
            sel = m == k
            Y[sel] = X[sel] @ self._level[k].T
            if k < len(self.layers):
                th = self.layers[k].theta(r[sel])
                act = th > 0
                if act.any():
                    Xa = X[sel][act]
                    Y[np.flatnonzero(sel)[act]] += th[act, None] * (Xa @ self._diffs[k].T)
        return Y[0] if single else Y

    def jacobian(self, x):
        """``DC(x) = P_m + [theta I + theta'(r) x x^T / r] (M_{m+1} - M_m)`` with
        ``m`` the number of inner radii enclosing ``x`` and ``P_m`` the linear
        map inside them."""
        X, single = self._points(x)
        r = np.linalg.norm(X, axis=1)
        U = np.divide(X, r[:, None], out=np.zeros_like(X), where=r[:, None] > 0)
        m = self._levels(r)
        J = np.empty((X.shape[0], self.dim, self.dim))
        for k in np.unique(m):
            sel = m == k
            J[sel] = self._level[k]
            if k < len(self.layers):
                L, D = self.layers[k], self._diffs[k]
                th, dth = L.theta(r[sel]), L.dtheta(r[sel])
                DX = X[sel] @ D.T
                J[sel] += th[:, None, None] * D + dth[:, None, None] * DX[:, :, None] * U[sel][:, None, :]
        return J[0] if single else J

    def inverse(self, y, tol: float = 1e-14, max_iter: int = 60):
        """Solve ``C(x) = y`` by Newton's method from ``outer^{-1} y``."""
        Y, single = self._points(y)
        Ainv = np.linalg.inv(self.outer)
        X = Y @ Ainv.T
        for _ in range(max_iter):
            R = self(X) - Y
            scale = 1.0 + np.linalg.norm(Y, axis=1)
            if np.all(np.linalg.norm(R, axis=1) <= tol * scale):
                break
            X = X - np.linalg.solve(self.jacobian(X), R[:, :, None])[:, :, 0]
        else:
            raise NumericalFailure("Newton inversion of the glued map did not converge")
        return X[0] if single else X

    def to_dict(self):
        return {
            "dim": self.dim,
            "matrices": [M.reshape(-1).tolist() for M in self.matrices],
            "layers": [{"r_in": L.r_in, "r_out": L.r_out, "profile": L.profile} for L in self.layers],
        }

    @classmethod
    def from_dict(cls, doc):
        d = int(doc["dim"])
        mats = [np.asarray(m, dtype=float).reshape(d, d) for m in doc["matrices"]]
        layers = [Layer(float(L["r_in"]), float(L["r_out"]), L.get("profile", "plateau")) for L in doc["layers"]]
        return cls(mats, layers)


def conorm(M) -> float:
    return float(np.linalg.svd(_as_matrix(M), compute_uv=False)[-1])


def build_glued(A, B, r_in: float, r_out: float, profile: str = "plateau") -> GluedMap:
    """Glue ``B`` (near 0) to ``A`` (outside ``r_out``) with a radial bump.

    Raises
    ------
    NotInvertible
        If ``|A - B| (1 + r_out Lip(theta)) >= conorm(A)``, the criterion under
        which every Jacobian stays invertible.
    """
    A, B = _as_matrix(A), _as_matrix(B)
    if A.shape != B.shape:
        raise InvalidArgument("A and B must have the same shape")
    if not 0 < r_in < r_out:
        raise InvalidArgument("radii must satisfy 0 < r_in < r_out")
    L = Layer(float(r_in), float(r_out), profile)
    if profile not in PROFILES:
        raise InvalidArgument(f"unknown profile {profile!r}; expected one of {PROFILES}")
    lhs = operator_norm(A - B) * (1.0 + r_out * L.lipschitz)
    if not lhs < conorm(A):
        raise NotInvertible(f"|A-B|(1 + r_out Lip) = {lhs:.6g} is not below conorm(A) = {conorm(A):.6g}")
    return GluedMap([A, B], [L])


def map_distance(A, B) -> float:
    """``max(|A - B|, |A^-1 - B^-1|)`` for two linear maps."""
    return dist_cocycle(PeriodicCocycle(np.asarray(A, float)[None]), PeriodicCocycle(np.asarray(B, float)[None]))


@dataclass(frozen=True)
class SizeReport:
    size: float
    sample_count: int
    forward: float
    inverse: float

    def to_dict(self):
        return {"size": self.size, "sample_count": self.sample_count, "forward": self.forward, "inverse": self.inverse}


def _directions(d: int, count: int) -> np.ndarray:
    """Fixed direction set: an angle grid in 2D, axes plus seeded points otherwise."""
    if d == 1:
        return np.array([[1.0], [-1.0]])
    if d == 2:
        phi = np.pi * np.arange(count) / count  # u and -u give the same Jacobian
        return np.stack([np.cos(phi), np.sin(phi)], axis=1)
    rng = np.random.default_rng(12345 + d)
    V = rng.normal(size=(count, d))
    V /= np.linalg.norm(V, axis=1, keepdims=True)
    return np.concatenate([np.eye(d), V])


def size_sample_points(g: GluedMap, samples: int = 64, directions: int = 64) -> np.ndarray:
    """Sample points for :func:`connection_size`.

    Each layer contributes ``samples`` radii spread evenly over its closed
    annulus, plus the origin for the inner linear region.  The radii are fixed
    fractions of the layer's own radii, so conjugating by a homothety or
    nesting layers reproduces the same relative points.
    """
    U = _directions(g.dim, directions)
    frac = np.linspace(0.0, 1.0, samples)
    pts = [np.zeros((1, g.dim))]
    for L in g.layers:
        r = L.r_in + (L.r_out - L.r_in) * frac
        pts.append((r[:, None, None] * U[None]).reshape(-1, g.dim))
    return np.concatenate(pts)


def connection_size(g: GluedMap, samples: int = 64, directions: int = 64) -> SizeReport:
    """Sampled C^1 distance to the outer linear map.

    The larger of ``|DC(x) - A|`` and ``|DC(x)^{-1} - A^{-1}|`` over the sample
    points; outside ``r_out`` both vanish.
    """
    X = size_sample_points(g, samples, directions)
    J = g.jacobian(X)
    A = g.outer
    fwd = stack_norm2(J - A[None])
    inv = stack_norm2(np.linalg.inv(J) - np.linalg.inv(A)[None])
    f, i = float(fwd.max()), float(inv.max())
    return SizeReport(max(f, i), int(X.shape[0]), f, i)


def homothety_conjugate(g: GluedMap, lam: float) -> GluedMap:
    """``lam Id o g o lam^{-1} Id``: same matrices, every radius scaled by ``lam``."""
    if not 0 < lam <= 1:
        raise InvalidArgument("lambda must lie in (0, 1]")
    if lam == 1:
        return g
    return GluedMap(g.matrices, [L.scaled(lam) for L in g.layers])


def concatenate_maps(g: GluedMap, h: GluedMap, tol: float = 0.0) -> GluedMap:
    """``g * h``: equal to ``h`` on its ball of radius ``h.r_out`` and to ``g``
    elsewhere.

    Raises
    ------
    IncompatibleConcatenation
        When ``h``'s ball is not inside ``g``'s inner linear region or ``h``'s
        outer map differs from ``g``'s inner map.
    """
    if g.dim != h.dim:
        raise IncompatibleConcatenation("dimensions differ")
    if h.r_out > g.r_in:
        raise IncompatibleConcatenation(
            f"inner connection radius {h.r_out:.6g} exceeds the linear region radius {g.r_in:.6g}"
        )
    if np.max(np.abs(h.outer - g.inner)) > tol:
        raise IncompatibleConcatenation("outer map of the inner connection differs from the inner map")
    return GluedMap(g.matrices + h.matrices[1:], g.layers + h.layers)


def concatenation_inverse_defect(g: GluedMap, h: GluedMap, points: np.ndarray) -> float:
    """Largest gap between ``(g*h)^{-1}(y)`` and ``(g^{-1} * h^{-1})(y)``.

    The left side inverts the concatenated map directly; the right side picks
    ``h^{-1}`` on ``h(ball)`` and ``g^{-1}`` elsewhere, then inverts that piece
    on its own.
    """
    gh = concatenate_maps(g, h)
    Y = np.atleast_2d(points)
    lhs = gh.inverse(Y)
    inside = np.linalg.norm(Y @ np.linalg.inv(g.inner).T, axis=1) <= h.r_out
    rhs = np.empty_like(Y)
    if inside.any():
        rhs[inside] = h.inverse(Y[inside])
    if (~inside).any():
        rhs[~inside] = g.inverse(Y[~inside])
    scale = 1.0 + np.linalg.norm(Y, axis=1)
    return float(np.max(np.linalg.norm(lhs - rhs, axis=1) / scale))


@dataclass(frozen=True)
class MembershipReport:
    member: bool
    K: float
    steps: int
    entered_inner: bool
    escaped: bool
    worst_excess: float
    details: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "member": self.member,
            "K": self.K,
            "steps": self.steps,
            "entered_inner": self.entered_inner,
            "escaped": self.escaped,
            "worst_excess": self.worst_excess,
            **self.details,
        }


def membership_report(
    g: GluedMap,
    x,
    i: int,
    rate_window: Tuple[float, float],
    n_max: int = 200,
    box: float = 1e6,
    stop_ratio: float = 1e-8,
) -> MembershipReport:
    """Decay-rate test for the ``i``-strong stable set of ``g``.

    The orbit ``x_n = g^n(x)`` must obey ``|x_n| <= K sig_hi^n |x|`` with ``K``
    fitted on the first five iterates, and must enter the inner ball.  The
    orbit is followed until ``|x_n| < stop_ratio |x|`` or until the
    round-off envelope ``eps |x| prod |Dg(x_k)|`` reaches ``1e-3 |x_n|``;
    past that point the round-off along unstable directions could outweigh
    the orbit itself.
    """
    lo, hi = map(float, rate_window)
    mod = np.sort(np.abs(np.linalg.eigvals(g.outer)))
    d = g.dim
    if not 1 <= i <= d:
        raise InvalidArgument(f"i must lie in 1..{d}")
    upper = min(mod[i] if i < d else np.inf, 1.0)
    if not mod[i - 1] < lo < hi < upper:
        raise InvalidArgument(
            f"rate window ({lo:.6g}, {hi:.6g}) must sit strictly between |l_{i}| = {mod[i - 1]:.6g} and {upper:.6g}"
        )
    x = np.asarray(x, dtype=float)
    r0 = float(np.linalg.norm(x))
    if r0 == 0:
        raise InvalidArgument("x must be nonzero")
    norms = [r0]
    y = x
    escaped = False
    envelope = np.finfo(float).eps * r0
    for _ in range(n_max):
        envelope *= float(np.linalg.norm(g.jacobian(y[None])[0], 2))
        y = g(y)
        ny = float(np.linalg.norm(y))
        if not np.isfinite(ny) or ny > box:
            escaped = True
            break
        norms.append(ny)
        if ny < stop_ratio * r0 or envelope > 1e-3 * ny:
            break
    norms = np.array(norms)
    n = np.arange(len(norms))
    rel = norms / (r0 * hi ** n)
    K = float(rel[: min(6, len(rel))].max())
    excess = float((rel / K).max())
    entered = bool(norms.min() <= g.r_in)
    member = (not escaped) and entered and excess <= 1.0
    return MembershipReport(member, K, int(len(norms) - 1), entered, escaped, excess, {"final_norm": float(norms[-1])})


def strong_stable_membership(g: GluedMap, x, i: int, rate_window, n_max: int = 200, box: float = 1e6) -> bool:
    """True iff ``x`` passes the decay-rate test of :func:`membership_report`."""
    return membership_report(g, x, i, rate_window, n_max, box).member


def invariance_defect(g: GluedMap, i: int, samples: int = 200, seed: int = 0) -> float:
    """How far ``g`` moves points of the outer ``i``-strong stable subspace off it.

    Sampled over the annulus of every layer; a connection in the strict sense
    would have defect 0.  Reported as ``dist(g(x), E) / |g(x)|``.
    """
    c = PeriodicCocycle(g.outer[None])
    E = strong_stable_space(c, i)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for L in g.layers:
        coef = rng.normal(size=(samples, E.shape[1]))
        coef /= np.linalg.norm(coef, axis=1, keepdims=True)
        r = rng.uniform(L.r_in, L.r_out, size=samples)
        X = (coef @ E.T) * r[:, None]
        Y = g(X)
        off = Y - (Y @ E) @ E.T
        worst = max(worst, float(np.max(np.linalg.norm(off, axis=1) / np.linalg.norm(Y, axis=1))))
    return worst


def size_inequality_check(
    C1: GluedMap,
    C2: GluedMap,
    lambdas: Optional[Sequence[float]] = None,
    tol: float = 1e-6,
    samples: int = 64,
    directions: int = 64,
) -> Certificate:
    """Both size bounds for ``C1 * (lam C2)`` over a grid of ``lam``.

    With ``s1, s2`` the sizes of ``C1`` (from A to B) and ``C2`` (from B to C):

        size(C1 * lam C2) <= max(s1, s2 + dist(A, B))
        size(C1 * lam C2) <= s1 + s2

    ``lam`` values too large for the concatenation are skipped; the margin is
    ``tol`` plus the smallest slack over the remaining ones.
    """
    if lambdas is None:
        lambdas = [2.0 ** -k for k in range(4, 9)]
    s1 = connection_size(C1, samples, directions).size
    s2 = connection_size(C2, samples, directions).size
    dAB = map_distance(C1.outer, C1.inner)
    rows = []
    for lam in lambdas:
        h = homothety_conjugate(C2, lam)
        try:
            gh = concatenate_maps(C1, h)
        except IncompatibleConcatenation:
            continue
        s = connection_size(gh, samples, directions).size
        rows.append({"lambda": float(lam), "size": s, "slack_max": max(s1, s2 + dAB) - s, "slack_sum": s1 + s2 - s})
    if not rows:
        raise IncompatibleConcatenation("no lambda in the grid makes the concatenation defined")
    worst = min(min(r["slack_max"], r["slack_sum"]) for r in rows)
    details = {"size_1": s1, "size_2": s2, "dist_AB": dAB, "rows": rows, "tol": tol}
    return Certificate("size_inequalities", tol + worst, details, len(rows))
