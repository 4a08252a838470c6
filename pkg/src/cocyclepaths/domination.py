"""N-domination of invariant splittings, restricted and quotient cocycles.

A splitting ``E + F`` is N-dominated when ``|A^N u| < c |A^N v|`` for all unit
``u in E_x``, ``v in F_x`` and every base point ``x``, with ``c = 1/2``.  The
supremum over unit vectors is exactly ``norm(A^N|E_x) / conorm(A^N|F_x)``, so
each base point costs two small SVDs.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import PeriodicCocycle
from .errors import InvalidArgument, NotInvariant
from .spectral import (
    INVARIANCE_TOL,
    SaddleSplitting,
    Subbundle,
    orthonormalize,
    require_invariant,
    transport_residual,
)

DOMINATION_CONSTANT = 0.5


@dataclass(frozen=True)
class DominationReport:
    """Outcome of one N-domination test.

    ``worst_base`` is 0-based; the window is ``A_{x}, ..., A_{x+N-1}`` acting
    from fiber ``x`` (indices mod ``p``).
    """

    N_tested: int
    dominated: bool
    worst_ratio: float
    worst_base: int
    worst_window: tuple
    constant: float = DOMINATION_CONSTANT
    ratios: np.ndarray = field(default=None, repr=False, compare=False)

    def to_dict(self):
        start, length = self.worst_window
        return {
            "N_tested": self.N_tested,
            "dominated": self.dominated,
            "worst_ratio": self.worst_ratio,
            "worst_base": self.worst_base + 1,
            "worst_window": {"first_map": start + 1, "length": length},
            "constant": self.constant,
        }


def _as_pair(split):
    if isinstance(split, SaddleSplitting):
        return split.stable, split.unstable
    E, F = split
    return E, F


def _frames_of(x, c: PeriodicCocycle) -> np.ndarray:
    if isinstance(x, Subbundle):
        return x.frames
    return Subbundle.from_frames(c, x).frames


def _ratio(ME: np.ndarray, MF: np.ndarray) -> np.ndarray:
    top = np.linalg.svd(ME, compute_uv=False)[:, 0]
    bottom = np.linalg.svd(MF, compute_uv=False)[:, -1]
    return top / bottom


def window_ratio_table(c: PeriodicCocycle, E: np.ndarray, F: np.ndarray, N_max: int) -> np.ndarray:
    """Row ``N - 1`` holds ``norm(A^N E_x) / conorm(A^N F_x)`` for every base ``x``.

    All base points are pushed together, one map at a time, which keeps the
    frames inside their invariant bundles instead of forming ``A^N``.
    """
    p = c.period
    out = np.empty((N_max, p))
    ME, MF = E.copy(), F.copy()
    for k in range(N_max):
        A = np.roll(c.maps, -k, axis=0)  # base x uses A_{x+k}
        ME = A @ ME
        MF = A @ MF
        # rescale both by the same factor per base so long windows stay finite
        s = np.linalg.norm(MF, axis=(1, 2))[:, None, None]
        ME, MF = ME / s, MF / s
        out[k] = _ratio(ME, MF)
    return out


def window_ratios(c: PeriodicCocycle, E: np.ndarray, F: np.ndarray, N: int) -> np.ndarray:
    """``norm(A^N E_x) / conorm(A^N F_x)`` for every base point ``x``."""
    return window_ratio_table(c, E, F, N)[-1]


def _checked_frames(c: PeriodicCocycle, E, F):
    Ef, Ff = _frames_of(E, c), _frames_of(F, c)
    if Ef.shape[2] + Ff.shape[2] != c.dim or Ef.shape[2] == 0 or Ff.shape[2] == 0:
        raise InvalidArgument("splitting bundles must have complementary positive dimensions")
    for name, fr in (("E", Ef), ("F", Ff)):
        resid = transport_residual(c.maps, fr)
        if not resid < INVARIANCE_TOL:
            raise NotInvariant(f"bundle {name} is not invariant (residual {resid:.3g})")
    return Ef, Ff


def is_N_dominated(c: PeriodicCocycle, split, N: int, constant: float = DOMINATION_CONSTANT) -> DominationReport:
    """Test whether an invariant splitting ``(E, F)`` is N-dominated.

    Parameters
    ----------
    c : PeriodicCocycle
    split : SaddleSplitting or pair of Subbundle
        ``E`` is the dominated bundle, ``F`` the dominating one.
    N : int
        Window length, at least 1.
    constant : float
        Domination constant; 1/2 unless experimenting.

    Returns
    -------
    DominationReport
    """
    if int(N) != N or N < 1:
        raise InvalidArgument("N must be a positive integer")
    N = int(N)
    E, F = _as_pair(split)
    Ef, Ff = _checked_frames(c, E, F)
    ratios = window_ratios(c, Ef, Ff, N)
    x = int(np.argmax(ratios))
    worst = float(ratios[x])
    return DominationReport(N, worst < constant, worst, x, (x, N), constant, ratios)


def minimal_domination_N(c: PeriodicCocycle, split, N_max: int, constant: float = DOMINATION_CONSTANT) -> Optional[int]:
    """Least ``N <= N_max`` for which the splitting is N-dominated, else None.

    Every ``N`` is tested on its own; no monotonicity in ``N`` is assumed.
    """
    if int(N_max) != N_max or N_max < 1:
        raise InvalidArgument("N_max must be a positive integer")
    E, F = _as_pair(split)
    Ef, Ff = _checked_frames(c, E, F)
    table = window_ratio_table(c, Ef, Ff, int(N_max))
    hits = np.flatnonzero(table.max(axis=1) < constant)
    return int(hits[0]) + 1 if hits.size else None


def complement_frames(frames: np.ndarray) -> np.ndarray:
    """Orthonormal frames of the orthocomplements, from a full QR per fiber."""
    p, d, k = frames.shape
    out = np.empty((p, d, d - k))
    for n in range(p):
        Q, _ = np.linalg.qr(frames[n], mode="complete")
        out[n] = Q[:, k:]
    return out


def _bundle_frames(c: PeriodicCocycle, H) -> np.ndarray:
    fr = _frames_of(H, c)
    resid = transport_residual(c.maps, fr)
    if not resid < INVARIANCE_TOL:
        raise NotInvariant(f"subbundle is not invariant (residual {resid:.3g})")
    return fr


def restrict_cocycle(c: PeriodicCocycle, H) -> PeriodicCocycle:
    """``A_n`` restricted to an invariant subbundle, in its orthonormal frames."""
    fr = _bundle_frames(c, H)
    if fr.shape[2] == 0:
        raise InvalidArgument("cannot restrict to a zero-dimensional bundle")
    nxt = np.roll(fr, -1, axis=0)
    return PeriodicCocycle(np.swapaxes(nxt, 1, 2) @ c.maps @ fr, cond_ceiling=np.inf)


def quotient_cocycle(c: PeriodicCocycle, F) -> PeriodicCocycle:
    """Quotient by an invariant subbundle, as the lower-right block of ``A_n``
    in the frames ``(F_n | F_n^perp)``."""
    fr = _bundle_frames(c, F)
    if fr.shape[2] == c.dim:
        raise InvalidArgument("quotient by the whole space is zero-dimensional")
    perp = complement_frames(fr)
    nxt = np.roll(perp, -1, axis=0)
    return PeriodicCocycle(np.swapaxes(nxt, 1, 2) @ c.maps @ perp, cond_ceiling=np.inf)


def _contained(inner: np.ndarray, outer: np.ndarray, tol: float = 1e-7) -> bool:
    for H, F in zip(inner, outer):
        if np.linalg.norm(H - F @ (F.T @ H), 2) > tol:
            return False
    return True


@dataclass(frozen=True)
class BranchDecision:
    """Which alternatives of the restriction/quotient branching hold at a given N.

    ``restriction_not_dominated``: the restriction to ``H + G`` (or ``F + H``)
    is not N-dominated.  ``quotient_not_dominated``: the quotient splitting
    ``F/H + G/H`` is not N-dominated.
    """

    N: int
    side: str
    restriction_not_dominated: bool
    quotient_not_dominated: bool
    restriction_report: DominationReport
    quotient_report: DominationReport

    def to_dict(self):
        return {
            "N": self.N,
            "side": self.side,
            "restriction_not_dominated": self.restriction_not_dominated,
            "quotient_not_dominated": self.quotient_not_dominated,
            "restriction": self.restriction_report.to_dict(),
            "quotient": self.quotient_report.to_dict(),
        }


def _in_frames(frames_basis: np.ndarray, frames: np.ndarray) -> np.ndarray:
    return np.stack([orthonormalize(K.T @ X) for K, X in zip(frames_basis, frames)])


def bdp_branch(c: PeriodicCocycle, split, H, N: int, constant: float = DOMINATION_CONSTANT) -> BranchDecision:
    """Evaluate both alternatives for an invariant ``H`` inside one side of ``F + G``.

    With ``H`` inside ``F`` the restriction is to ``H + G`` with splitting
    ``H + G``; with ``H`` inside ``G`` it is to ``F + H`` with splitting
    ``F + H``.  The quotient splitting is ``F/H + G/H`` in both cases (one of
    the two sides loses ``dim H`` dimensions).  The outer non-domination
    hypothesis is the caller's business.
    """
    F, G = _as_pair(split)
    Ff = _bundle_frames(c, F)
    Gf = _bundle_frames(c, G)
    Hf = _bundle_frames(c, H)
    kH = Hf.shape[2]
    if kH == 0:
        raise InvalidArgument("H must be nonzero")
    if _contained(Hf, Ff):
        side = "F"
        pair_frames = (Hf, Gf)
    elif _contained(Hf, Gf):
        side = "G"
        pair_frames = (Ff, Hf)
    else:
        raise NotInvariant("H is not contained in either side of the splitting")
    if kH >= (Ff if side == "F" else Gf).shape[2]:
        raise InvalidArgument("H must be a proper subbundle of its side")

    # restriction to the sum of the pair
    K = np.stack([orthonormalize(np.hstack([a, b])) for a, b in zip(*pair_frames)])
    Ksb = Subbundle(K, transport_residual(c.maps, K))
    rc = restrict_cocycle(c, Ksb)
    rE = _in_frames(K, pair_frames[0])
    rF = _in_frames(K, pair_frames[1])
    r_rep = is_N_dominated(rc, (Subbundle.from_frames(rc, rE), Subbundle.from_frames(rc, rF)), N, constant)

    # quotient by H
    perp = complement_frames(Hf)
    qc = quotient_cocycle(c, Subbundle(Hf, 0.0))
    qE = np.stack([P.T @ X for P, X in zip(perp, Ff)])
    qF = np.stack([P.T @ X for P, X in zip(perp, Gf)])
    qE = np.stack([_range(M, Ff.shape[2] - (kH if side == "F" else 0)) for M in qE])
    qF = np.stack([_range(M, Gf.shape[2] - (kH if side == "G" else 0)) for M in qF])
    q_rep = is_N_dominated(qc, (Subbundle.from_frames(qc, qE), Subbundle.from_frames(qc, qF)), N, constant)

    return BranchDecision(
        int(N), side, not r_rep.dominated, not q_rep.dominated, r_rep, q_rep
    )


def _range(M: np.ndarray, k: int) -> np.ndarray:
    U, _, _ = np.linalg.svd(M, full_matrices=False)
    return U[:, :k]
