"""Spectra of first-return maps, strong stable/unstable structure and angles.

Eigenvalues are always sorted by modulus, ties broken by real then imaginary
part.  Strong dimensions ``i`` are reported 1-based: ``i`` is the dimension of
the subspace, so ``i in I`` means the ``i`` smallest-modulus eigenvalues are
strictly separated from the rest and from the unit circle.

Invariant subspaces come from an ordered real Schur form of one return map and
are then carried around the orbit in the direction in which they attract:
subspaces of the smallest moduli backwards, of the largest moduli forwards.
Subspaces from the middle of the spectrum are intersections of one of each.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .core import PeriodicCocycle, first_return, inverse_cocycle
from .errors import (
    IllConditionedGap,
    InvalidBase,
    InvalidArgument,
    NoStrongDirection,
    NotInvariant,
    NotSaddle,
    NumericalFailure,
)

GAP_RTOL = 1e-9
INVARIANCE_TOL = 1e-7
COMPLEX_TOL = 1e-10


def sort_eigenvalues(ev) -> np.ndarray:
    ev = np.asarray(ev, dtype=complex)
    order = np.lexsort((ev.imag, ev.real, np.abs(ev)))
    return ev[order]


def is_real_eigenvalue(lam) -> bool:
    return abs(lam.imag) <= COMPLEX_TOL * max(1.0, abs(lam))


@dataclass(frozen=True)
class Spectrum:
    eigenvalues: np.ndarray

    @property
    def moduli(self) -> np.ndarray:
        return np.abs(self.eigenvalues)

    @property
    def all_real(self) -> bool:
        return all(is_real_eigenvalue(z) for z in self.eigenvalues)

    def to_dict(self):
        return {
            "eigenvalues": [{"re": float(z.real), "im": float(z.imag)} for z in self.eigenvalues],
            "moduli": [float(m) for m in self.moduli],
        }


def eigenvalues_of_matrix(B: np.ndarray) -> np.ndarray:
    try:
        ev = np.linalg.eigvals(B)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"eigensolver failed: {exc}") from exc
    if not np.all(np.isfinite(ev)):
        raise NumericalFailure("eigensolver returned non-finite values")
    return sort_eigenvalues(ev)


def spectrum_of(c: PeriodicCocycle, base: int = 0) -> Spectrum:
    """Eigenvalues of the first return at ``base``, canonically sorted."""
    return Spectrum(eigenvalues_of_matrix(first_return(c, base)))


def lyapunov_exponents(c: PeriodicCocycle) -> np.ndarray:
    """``log|lambda_i| / p``, ascending."""
    return np.sort(np.log(spectrum_of(c).moduli) / c.period)


def strong_dims_from_moduli(moduli, rtol: float = GAP_RTOL) -> set:
    """``{i : |l_i| < min(|l_{i+1}|, 1)}`` with a relative margin, ``|l_{d+1}| = inf``."""
    m = np.asarray(moduli, dtype=float)
    d = m.size
    out = set()
    for i in range(1, d + 1):
        nxt = m[i] if i < d else np.inf
        if m[i - 1] < min(nxt, 1.0) * (1.0 - rtol):
            out.add(i)
    return out


def strong_stable_dims(c: PeriodicCocycle) -> set:
    return strong_dims_from_moduli(spectrum_of(c).moduli)


def strong_unstable_dims(c: PeriodicCocycle) -> set:
    return strong_stable_dims(inverse_cocycle(c))


def strong_gap_margins(moduli, dims) -> dict:
    """Relative gap ``1 - |l_i| / min(|l_{i+1}|, 1)`` for each ``i`` in ``dims``."""
    m = np.asarray(moduli, dtype=float)
    d = m.size
    out = {}
    for i in dims:
        if not 1 <= i <= d:
            out[i] = -np.inf
            continue
        nxt = m[i] if i < d else np.inf
        out[i] = 1.0 - m[i - 1] / min(nxt, 1.0)
    return out


def is_saddle(c: PeriodicCocycle, tol: float = 1e-9) -> bool:
    m = spectrum_of(c).moduli
    return bool(np.all(np.abs(m - 1.0) > tol) and np.any(m < 1.0) and np.any(m > 1.0))


# ---------------------------------------------------------------------------
# invariant subspaces


def orthonormalize(X: np.ndarray) -> np.ndarray:
    if X.shape[1] == 1:
        # QR of one column with the sign convention below is plain normalization
        return X / np.linalg.norm(X)
    Q, R = np.linalg.qr(X)
    # sign convention: positive diagonal of R, so frames are deterministic
    sgn = np.sign(np.diag(R))
    sgn[sgn == 0] = 1.0
    return Q * sgn


def low_invariant_frame(B: np.ndarray, k: int) -> np.ndarray:
    """Orthonormal frame of the invariant subspace of ``B`` for its ``k``
    smallest-modulus eigenvalues, via ordered real Schur form.

    Raises :class:`IllConditionedGap` when the ``k``-th and ``k+1``-th moduli
    are not separated by a relative gap of ``GAP_RTOL``.
    """
    d = B.shape[0]
    if k == 0:
        return np.zeros((d, 0))
    if k == d:
        return np.eye(d)
    mod = np.abs(eigenvalues_of_matrix(B))
    lo, hi = mod[k - 1], mod[k]
    if not lo < hi * (1.0 - GAP_RTOL):
        raise IllConditionedGap(f"moduli {lo:.6g} and {hi:.6g} are not separated")
    thr = np.sqrt(lo * hi) if lo > 0 else hi / 2
    T, Z, sdim = scipy.linalg.schur(B, output="real", sort=lambda re, im: np.hypot(re, im) < thr)
    if sdim != k:
        raise IllConditionedGap(f"Schur reordering selected {sdim} eigenvalues, expected {k}")
    return Z[:, :k].copy()


def high_invariant_frame(B: np.ndarray, k: int) -> np.ndarray:
    """Invariant subspace for the ``k`` largest-modulus eigenvalues."""
    d = B.shape[0]
    if k == 0:
        return np.zeros((d, 0))
    if k == d:
        return np.eye(d)
    mod = np.abs(eigenvalues_of_matrix(B))
    lo, hi = mod[d - k - 1], mod[d - k]
    if not lo < hi * (1.0 - GAP_RTOL):
        raise IllConditionedGap(f"moduli {lo:.6g} and {hi:.6g} are not separated")
    thr = np.sqrt(lo * hi) if lo > 0 else hi / 2
    T, Z, sdim = scipy.linalg.schur(B, output="real", sort=lambda re, im: np.hypot(re, im) > thr)
    if sdim != k:
        raise IllConditionedGap(f"Schur reordering selected {sdim} eigenvalues, expected {k}")
    return Z[:, :k].copy()


def transport_residual(maps: np.ndarray, frames: np.ndarray) -> float:
    """max over n of the sine of the largest principal angle between
    ``A_n span(F_n)`` and ``span(F_{n+1})``, wrap-around step included."""
    p = maps.shape[0]
    k = frames.shape[2]
    if k == 0 or k == maps.shape[1]:
        return 0.0
    Q, _ = np.linalg.qr(maps @ frames)
    F1 = np.roll(frames, -1, axis=0)
    resid = Q - F1 @ (np.swapaxes(F1, 1, 2) @ Q)
    return float(np.linalg.svd(resid, compute_uv=False)[:, 0].max())


@dataclass(frozen=True)
class Subbundle:
    """One ``k``-dimensional subspace per base point, as orthonormal frames.

    ``frames[n]`` is a ``d x k`` matrix; ``residual`` is the transport
    residual under the cocycle it was built for.
    """

    frames: np.ndarray
    residual: float

    @property
    def dim_fiber(self) -> int:
        return self.frames.shape[2]

    @property
    def ambient_dim(self) -> int:
        return self.frames.shape[1]

    @property
    def period(self) -> int:
        return self.frames.shape[0]

    @property
    def invariant(self) -> bool:
        return self.residual < INVARIANCE_TOL

    @classmethod
    def from_frames(cls, c: PeriodicCocycle, frames) -> "Subbundle":
        frames = np.asarray(frames, dtype=float)
        if frames.ndim == 2:
            frames = np.broadcast_to(frames, (c.period,) + frames.shape)
        if frames.shape[:2] != (c.period, c.dim):
            raise InvalidArgument(f"frames of shape {frames.shape} do not fit the cocycle")
        frames = np.stack([orthonormalize(F) if F.shape[1] else F for F in frames])
        return cls(frames, transport_residual(c.maps, frames))

    def to_dict(self):
        return {
            "dim_fiber": self.dim_fiber,
            "residual": self.residual,
            "frames": [
                {"base": n + 1, "columns": self.frames[n].T.tolist()} for n in range(self.period)
            ],
        }


def require_invariant(sb: Subbundle, c: PeriodicCocycle, name: str = "subbundle") -> None:
    if sb.frames.shape[:2] != (c.period, c.dim):
        raise InvalidArgument(f"{name} does not fit the cocycle")
    resid = transport_residual(c.maps, sb.frames)
    if not resid < INVARIANCE_TOL:
        raise NotInvariant(f"{name} is not invariant (residual {resid:.3g})")


def _propagate(c: PeriodicCocycle, frame0: np.ndarray, forward: bool, sweeps: int = 2) -> np.ndarray:
    p = c.period
    k = frame0.shape[1]
    out = np.empty((p, c.dim, k))
    F = frame0
    for _ in range(sweeps):
        if forward:
            out[0] = F
            for n in range(p):
                F = orthonormalize(c.maps[n] @ F)
                if n + 1 < p:
                    out[n + 1] = F
        else:
            inv = c.inverse_maps
            for n in range(p - 1, -1, -1):
                F = orthonormalize(inv[n] @ F)
                out[n] = F
    return out


def low_bundle(c: PeriodicCocycle, k: int) -> Subbundle:
    """Invariant subbundle of the ``k`` smallest moduli (no strong-gap check)."""
    frame0 = low_invariant_frame(first_return(c, 0), k)
    if k in (0, c.dim):
        frames = np.broadcast_to(frame0, (c.period,) + frame0.shape).copy()
        return Subbundle(frames, 0.0)
    frames = _propagate(c, frame0, forward=False)
    return Subbundle(frames, transport_residual(c.maps, frames))


def high_bundle(c: PeriodicCocycle, k: int) -> Subbundle:
    """Invariant subbundle of the ``k`` largest moduli."""
    frame0 = high_invariant_frame(first_return(c, 0), k)
    if k in (0, c.dim):
        frames = np.broadcast_to(frame0, (c.period,) + frame0.shape).copy()
        return Subbundle(frames, 0.0)
    frames = _propagate(c, frame0, forward=True)
    return Subbundle(frames, transport_residual(c.maps, frames))


def intersect_frames(E: np.ndarray, F: np.ndarray, k: int) -> np.ndarray:
    """Orthonormal frame for the ``k``-dimensional intersection of two spans."""
    # vectors of span(E) closest to span(F): top right singular vectors of F^T E
    U, s, Vt = np.linalg.svd(F.T @ E)
    return orthonormalize(E @ Vt[:k].T)


def band_bundle(c: PeriodicCocycle, lo: int, hi: int) -> Subbundle:
    """Invariant subbundle for sorted eigenvalue positions ``lo..hi-1`` (0-based)."""
    d = c.dim
    if not 0 <= lo < hi <= d:
        raise InvalidArgument(f"bad eigenvalue band [{lo}, {hi})")
    if lo == 0:
        return low_bundle(c, hi)
    if hi == d:
        return high_bundle(c, d - lo)
    low = low_bundle(c, hi)
    high = high_bundle(c, d - lo)
    k = hi - lo
    frames = np.stack([intersect_frames(low.frames[n], high.frames[n], k) for n in range(c.period)])
    return Subbundle(frames, transport_residual(c.maps, frames))


def strong_stable_bundle(c: PeriodicCocycle, i: int) -> Subbundle:
    if i not in strong_stable_dims(c):
        raise NoStrongDirection(f"{i} is not a strong stable dimension")
    sb = low_bundle(c, i)
    if not sb.invariant:
        raise IllConditionedGap(f"strong stable bundle residual {sb.residual:.3g} too large")
    return sb


def strong_unstable_bundle(c: PeriodicCocycle, j: int) -> Subbundle:
    if j not in strong_unstable_dims(c):
        raise NoStrongDirection(f"{j} is not a strong unstable dimension")
    sb = high_bundle(c, j)
    if not sb.invariant:
        raise IllConditionedGap(f"strong unstable bundle residual {sb.residual:.3g} too large")
    return sb


def strong_stable_space(c: PeriodicCocycle, i: int, base: int = 0) -> np.ndarray:
    """``d x i`` orthonormal frame of the ``i``-strong stable direction at ``base``."""
    if not 0 <= base < c.period:
        raise InvalidBase(f"base {base} outside 0..{c.period - 1}")
    return strong_stable_bundle(c, i).frames[base]


def strong_unstable_space(c: PeriodicCocycle, j: int, base: int = 0) -> np.ndarray:
    if not 0 <= base < c.period:
        raise InvalidBase(f"base {base} outside 0..{c.period - 1}")
    return strong_unstable_bundle(c, j).frames[base]


@dataclass(frozen=True)
class SaddleSplitting:
    stable: Subbundle
    unstable: Subbundle

    @property
    def index(self) -> int:
        return self.stable.dim_fiber

    def angles(self) -> np.ndarray:
        return np.array(
            [min_angle(self.stable.frames[n], self.unstable.frames[n]) for n in range(self.stable.period)]
        )

    def min_angle(self) -> float:
        return float(self.angles().min())

    def to_dict(self):
        return {"index": self.index, "stable": self.stable.to_dict(), "unstable": self.unstable.to_dict()}


def stable_unstable_splitting(c: PeriodicCocycle, tol: float = 1e-9) -> SaddleSplitting:
    if not is_saddle(c, tol):
        raise NotSaddle("cocycle is not a saddle")
    m = spectrum_of(c).moduli
    i_s = int(np.sum(m < 1.0))
    stable = low_bundle(c, i_s)
    unstable = high_bundle(c, c.dim - i_s)
    for name, sb in (("stable", stable), ("unstable", unstable)):
        if not sb.invariant:
            raise IllConditionedGap(f"{name} bundle residual {sb.residual:.3g} too large")
    return SaddleSplitting(stable, unstable)


# ---------------------------------------------------------------------------
# angles


def _orth(X, name) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or X.shape[1] == 0 or not np.any(X):
        raise InvalidArgument(f"{name} must span a nonzero subspace")
    U, s, _ = np.linalg.svd(X, full_matrices=False)
    r = int(np.sum(s > s[0] * 1e-12))
    return U[:, :r]


def min_angle(E, F) -> float:
    """Smallest principal angle between ``span(E)`` and ``span(F)``, in ``[0, pi/2]``.

    Small angles come from the sines (residual of projecting one space on the
    other) and large ones from the cosines, which keeps both ends accurate.
    """
    QE = _orth(E, "E")
    QF = _orth(F, "F")
    if QE.shape[0] != QF.shape[0]:
        raise InvalidArgument("frames live in different ambient dimensions")
    if QF.shape[1] > QE.shape[1]:
        QE, QF = QF, QE
    cos = np.linalg.svd(QE.T @ QF, compute_uv=False)
    cmax = min(float(cos[0]), 1.0)
    if cmax < np.sqrt(0.5):
        return float(np.arccos(cmax))
    resid = QF - QE @ (QE.T @ QF)
    sin = np.linalg.svd(resid, compute_uv=False)
    smin = min(float(sin[-1]), 1.0)
    return float(np.arcsin(smin))


def quotient_frame(Gamma, X) -> np.ndarray:
    """``span(X) / span(Gamma)`` realized as the projection of ``span(X)`` onto
    the orthocomplement of ``span(Gamma)``."""
    G = _orth(Gamma, "Gamma")
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    Y = X - G @ (G.T @ X)
    if np.linalg.norm(Y) <= 1e-12 * max(1.0, np.linalg.norm(X)):
        raise InvalidArgument("subspace lies inside the quotiented subspace")
    return _orth(Y, "quotient")
