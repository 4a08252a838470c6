"""Construction of small isotopy paths of cocycles.

* :func:`realify` turns complex eigenvalue pairs into real double eigenvalues
  by small rotations, one invariant 2-plane at a time, keeping all moduli.
* :func:`push_moduli` scales the stable and unstable blocks so that every
  modulus leaves ``[epsilon, 1/epsilon]``.
* :func:`small_angle` closes the angle between the stable and unstable
  bundles of a non-dominated saddle while keeping all eigenvalues.
* :func:`pipeline_small_angle` chains them.

Every function returns a :class:`SynthesisOutcome` whose path starts at the
input cocycle, together with the certificates for its claims.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.optimize

from .core import PeriodicCocycle, batch_first_return, bound_of, dist_cocycle, first_return
from .domination import (
    complement_frames,
    bdp_branch,
    is_N_dominated,
    quotient_cocycle,
    restrict_cocycle,
)
from .errors import (
    AlreadyRealizable,
    BranchExhausted,
    CocycleError,
    EigenvaluesNotReal,
    IllConditionedGap,
    InvalidArgument,
    InvalidDim,
    ModuliNotDistinct,
    NotSaddle,
    NumericalFailure,
    PeriodTooShort,
    StageFailed,
    StillDominated,
)
from .paths import (
    BlockScaleRamp,
    CocyclePath,
    Lifted,
    LinearBlend,
    PathRadiusReport,
    RotateToward,
    RotationRamp,
    concat_paths,
    path_radius,
    plane_rotation,
    rotation2,
    saddle_lines_2d,
)
from .spectral import (
    COMPLEX_TOL,
    Subbundle,
    band_bundle,
    high_bundle,
    is_saddle,
    low_bundle,
    orthonormalize,
    spectrum_of,
    stable_unstable_splitting,
    strong_stable_dims,
    strong_unstable_dims,
    transport_residual,
)
from .verification import Certificate, verify_outcome

RADIUS_SAMPLES = 257
SEPARATION_SCALE = 1e-4


@dataclass(frozen=True)
class SynthesisBudget:
    """Parameters shared by the constructions."""

    epsilon: float
    N_hint: int = 8
    max_rounds: int = 16
    tolerances: dict = field(default_factory=dict)
    seed: int = 0
    samples: int = 100

    def __post_init__(self):
        if not self.epsilon > 0:
            raise InvalidArgument("epsilon must be positive")
        if self.max_rounds < 1:
            raise InvalidArgument("max_rounds must be at least 1")
        if self.N_hint < 1:
            raise InvalidArgument("N must be at least 1")


@dataclass(frozen=True)
class SynthesisOutcome:
    kind: str
    path: CocyclePath
    radius_report: PathRadiusReport
    certificates: tuple = ()
    goals: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    @property
    def start(self) -> PeriodicCocycle:
        return self.path.start

    @property
    def end(self) -> PeriodicCocycle:
        return self.path.end

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.certificates if c.required)


def _outcome(kind, path, goals, diagnostics, certify=True, samples=100, extra_certs=()):
    report = path_radius(path, RADIUS_SAMPLES)
    out = SynthesisOutcome(kind, path, report, (), goals, diagnostics)
    certs = list(extra_certs)
    if certify:
        certs = verify_outcome(out, goals, samples) + certs
    return SynthesisOutcome(kind, path, report, tuple(certs), goals, diagnostics)


def _check_epsilon(epsilon):
    if not (np.isfinite(epsilon) and epsilon > 0):
        raise InvalidArgument("epsilon must be a positive number")


# ---------------------------------------------------------------------------
# realification


def normalize_to_det_one(c: PeriodicCocycle):
    """Rescale and reflect a 2-dimensional cocycle into ``SL(2, R)``.

    Returns ``(hat, lam, J)`` with ``hat_n = lam_n J_{n+1} A_n J_n^{-1}``,
    ``lam_n = |det A_n|^{-1/2}`` and ``J_n`` either the identity or
    ``diag(1, -1)``, ``J_0 = I``.  Since the product determinant is positive
    the signs close up (``J_p = J_0``), so ``hat`` is again periodic and its
    first return is a positive multiple of the original one.

    Raises
    ------
    AlreadyRealizable
        The first return has negative determinant, hence real eigenvalues.
    """
    if c.dim != 2:
        raise InvalidDim("normalization to determinant one is for d = 2")
    dets = np.linalg.det(c.maps)
    signs = np.sign(dets)
    if np.prod(signs) < 0:
        raise AlreadyRealizable("first return has negative determinant; eigenvalues are real")
    lam = np.abs(dets) ** -0.5
    refl = np.diag([1.0, -1.0])
    J = np.empty((c.period + 1, 2, 2))
    J[0] = np.eye(2)
    orient = 1.0
    for n in range(c.period):
        orient *= signs[n]
        J[n + 1] = np.eye(2) if orient > 0 else refl
    # J is its own inverse
    hat = lam[:, None, None] * (J[1:] @ c.maps @ J[:-1])
    return PeriodicCocycle(hat, cond_ceiling=np.inf), lam, J[:-1].copy()


def _rel_disc(B: np.ndarray) -> np.ndarray:
    """``(tr^2 - 4 det) / |det|`` for a stack of 2x2 matrices."""
    det = B[..., 0, 0] * B[..., 1, 1] - B[..., 0, 1] * B[..., 1, 0]
    tr = B[..., 0, 0] + B[..., 1, 1]
    return (tr * tr - 4.0 * det) / np.abs(det)


def _rotated_disc(maps: np.ndarray, angles: np.ndarray) -> np.ndarray:
    """Relative discriminant of ``prod R(angles[k, n]) A_n`` for each row ``k``."""
    eye, e2 = np.array([1.0, 0.0]), np.array([0.0, 1.0])
    rot = plane_rotation(eye, e2, angles)
    return _rel_disc(batch_first_return(rot @ maps[None]))


def _least_time(maps: np.ndarray, angles: np.ndarray, grid: int = 64) -> float:
    """Least ``s`` in ``(0, 1]`` with ``disc(s * angles) >= 0``: grid, then bisection.

    The discriminant oscillates roughly once per half turn of total rotation,
    so the grid gets ``grid`` points per half turn.
    """
    grid = int(grid * (1 + np.ceil(np.abs(angles).sum() / np.pi)))
    s = np.arange(1, grid + 1) / grid
    D = _rotated_disc(maps, s[:, None] * angles[None])
    hit = np.flatnonzero(D >= 0)
    if hit.size == 0:
        return 1.0
    k = int(hit[0])
    hi = float(s[k])
    lo = float(s[k - 1]) if k > 0 else 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if _rotated_disc(maps, (mid * angles)[None])[0] >= 0:
            hi = mid
        else:
            lo = mid
    return hi


def _realify_angles(c: PeriodicCocycle, cap: float, seed: int = 0, grid: int = 64, restarts: int = 512):
    """Per-step angles ``a_n`` with ``|a_n| <= cap`` making the eigenvalues of
    ``prod R(a_n) A_n`` real, stopped at the first time the discriminant
    vanishes.  Returns ``(angles, info)``."""
    maps = c.maps
    p = c.period
    mags = cap * np.arange(1, grid + 1) / grid
    cands = np.empty(2 * grid)
    cands[0::2], cands[1::2] = mags, -mags
    D = _rotated_disc(maps, np.repeat(cands[:, None], p, axis=1))
    info = {"angle_cap": cap}
    hit = np.flatnonzero(D >= 0)
    if hit.size:
        alpha = float(cands[hit[0]])
        direction = np.full(p, alpha)
        info.update(mode="uniform", alpha=alpha)
        s = _least_time(maps, direction)
        info["t0"] = s
        return s * direction, info

    # the discriminant may only touch zero (pure rotations): maximize it
    j = int(np.argmax(D))
    sign = np.sign(cands[j])
    a0 = abs(cands[j])
    lo, hi = max(a0 - cap / grid, 0.0), min(a0 + cap / grid, cap)
    res = scipy.optimize.minimize_scalar(
        lambda a: -_rotated_disc(maps, np.full((1, p), sign * a))[0],
        bounds=(lo, hi),
        method="bounded",
        options={"xatol": 1e-15},
    )
    touch = -float(res.fun)
    if touch >= -1e-12:
        alpha = float(sign * res.x)
        info.update(mode="uniform-touch", alpha=alpha, t0=1.0, touch=touch)
        return np.full(p, alpha), info

    rng = np.random.default_rng(seed)
    best = max(float(D.max()), touch)
    batch = 64
    for start in range(0, restarts, batch):
        A = rng.uniform(-cap, cap, size=(batch, p))
        bias = rng.choice([-1.0, 1.0], size=(batch, 1))
        A = np.where(rng.random((batch, p)) < 0.75, bias * np.abs(A), A)
        Dh = _rotated_disc(maps, A)
        best = max(best, float(Dh.max()))
        ok = np.flatnonzero(Dh >= 0)
        if ok.size:
            direction = A[ok[0]]
            s = _least_time(maps, direction)
            info.update(mode="heterogeneous", restart=start + int(ok[0]), t0=s)
            return s * direction, info
    raise PeriodTooShort(
        f"no rotations of size <= {cap:.3g} make the eigenvalues real (discriminant deficit {-best:.3g})",
        deficit=-best,
    )


def realify_2d(c: PeriodicCocycle, epsilon: float, angle_cap: float = None, seed: int = 0) -> CocyclePath:
    """Rotation path to a real double eigenvalue for a 2-dimensional cocycle.

    Post-composes ``A_n`` with rotations ``R(s a_n)``.  A uniform angle is
    searched first on a sign-symmetric grid in ``[-cap, cap]``; the path stops
    at the least parameter where the discriminant of the first return
    vanishes, so along the way the pair stays complex with constant modulus.
    With ``cap = epsilon / C`` the radius is below ``epsilon``.
    """
    _check_epsilon(epsilon)
    if c.dim != 2:
        raise InvalidDim("realify_2d needs d = 2")
    B = first_return(c)
    if np.linalg.det(B) < 0 or _rel_disc(B) >= 0:
        return CocyclePath.constant(c)
    cap = epsilon / bound_of(c) if angle_cap is None else float(angle_cap)
    angles, _ = _realify_angles(c, cap, seed)
    return CocyclePath.from_segments([RotationRamp.in_plane(c, angles)])


TOUCH_DISC = 1e-9


def _complex_position(ev) -> int:
    """Position of the first complex pair, ignoring pairs whose relative
    discriminant ``-4 (Im l / |l|)^2`` is already within ``TOUCH_DISC`` of 0
    (a rotation-type return can only touch the real axis)."""
    for k, z in enumerate(ev):
        if abs(z.imag) > COMPLEX_TOL * max(1.0, abs(z)) and 4.0 * (z.imag / abs(z)) ** 2 > TOUCH_DISC:
            return k
    return -1


def realify(c: PeriodicCocycle, epsilon: float, seed: int = 0, certify: bool = True, samples: int = 100) -> SynthesisOutcome:
    """Make every eigenvalue real with a path of radius below ``epsilon``.

    One complex pair is handled per round.  Its invariant 2-plane ``F`` puts
    every ``A_n`` in block form ``[[A_F, B], [0, A_perp]]``; rotating inside
    ``F_{n+1}`` changes ``A_F`` (and rotates ``B``) but leaves ``A_perp`` and
    the invariance of ``F`` intact, so eigenvalues outside the plane do not
    move.  At most ``d/2`` rounds.
    """
    _check_epsilon(epsilon)
    cap = epsilon / bound_of(c)
    cur = c
    segments = []
    rounds = []
    for _ in range(c.dim // 2 + 1):
        ev = spectrum_of(cur).eigenvalues
        k = _complex_position(ev)
        if k < 0:
            break
        if len(rounds) >= c.dim // 2:
            raise NumericalFailure("complex eigenvalues remain after d/2 rounds")
        if c.dim == 2:
            sub, planes = cur, None
        else:
            F = band_bundle(cur, k, k + 2)
            if not F.invariant:
                raise IllConditionedGap(f"complex pair at position {k + 1} cannot be isolated (residual {F.residual:.3g})")
            sub = restrict_cocycle(cur, F)
            planes = np.roll(F.frames, -1, axis=0)
        hat, lam, J = normalize_to_det_one(sub)
        try:
            alpha, info = _realify_angles(hat, cap, seed)
        except PeriodTooShort as exc:
            raise PeriodTooShort(f"2-plane at eigenvalue positions {k + 1},{k + 2}: {exc}", exc.deficit) from exc
        orient = np.linalg.det(np.roll(J, -1, axis=0))
        direction = orient * alpha
        s = _least_time(sub.maps, direction)
        beta = s * direction
        if planes is None:
            seg = RotationRamp.in_plane(cur, beta)
        else:
            seg = RotationRamp(cur, planes, beta)
        info["plane"] = [k + 1, k + 2]
        info["max_angle"] = float(np.abs(beta).max())
        rounds.append(info)
        segments.append(seg)
        cur = seg.end
    path = CocyclePath.from_segments(segments) if segments else CocyclePath.constant(c)
    m0 = spectrum_of(c).moduli
    goals = {
        "dim": c.dim,
        "I": sorted(strong_stable_dims(c)),
        "J": sorted(strong_unstable_dims(c)),
        "moduli_tol": 1e-7,
        "radius": epsilon,
        "real": True,
    }
    diagnostics = {"epsilon": epsilon, "rounds": rounds, "moduli": m0.tolist()}
    return _outcome("realify", path, goals, diagnostics, certify, samples)


# ---------------------------------------------------------------------------
# moduli push


def _check_distinct_saddle(c: PeriodicCocycle, rtol: float = 1e-6):
    if not is_saddle(c):
        raise NotSaddle("cocycle is not a saddle")
    m = spectrum_of(c).moduli
    gaps = 1.0 - m[:-1] / m[1:]
    if np.any(gaps <= rtol):
        raise ModuliNotDistinct(f"moduli are not pairwise distinct (min relative gap {gaps.min():.3g})")
    return m


def period_threshold(factor: float, C: float, epsilon: float) -> int:
    """Least period ``p`` with ``C |factor^(1/p) - 1| < epsilon`` and the same
    for the inverse factor, i.e. ``p > |log factor| / log(1 + epsilon / C)``."""
    need = abs(np.log(factor)) / np.log1p(epsilon / C)
    return int(np.floor(need)) + 1


def push_moduli(c: PeriodicCocycle, epsilon: float, certify: bool = True, samples: int = 100) -> SynthesisOutcome:
    """Push stable moduli below ``epsilon`` and unstable ones above ``1/epsilon``.

    Phase 1 multiplies the stable block by ``tau^s`` per step (``tau^p = t_end``,
    ``t_end = 0.99 epsilon / max stable modulus``), phase 2 does the same for
    the unstable block of the new cocycle.  Each block scaling leaves the other
    block, the coupling and the invariant bundles unchanged.
    """
    _check_epsilon(epsilon)
    m = _check_distinct_saddle(c)
    d, p = c.dim, c.period
    i_s = int(np.sum(m < 1.0))
    goals = {"dim": d, "moduli_distinct": True, "radius": epsilon, "terminal_moduli": epsilon}
    diagnostics = {"epsilon": epsilon, "index": i_s, "phases": []}
    if np.all((m < epsilon) | (m > 1.0 / epsilon)):
        return _outcome("push_moduli", CocyclePath.constant(c), goals, diagnostics, certify, samples)
    segments = []
    cur = c
    C = bound_of(c)
    lam_s = m[i_s - 1]
    if lam_s >= epsilon:
        t_end = 0.99 * epsilon / lam_s
        need = period_threshold(t_end, C, epsilon)
        if p < need:
            raise PeriodTooShort(f"stable push needs period >= {need}, have {p}", deficit=need - p)
        E = low_bundle(cur, i_s)
        if not E.invariant:
            raise IllConditionedGap(f"stable bundle residual {E.residual:.3g}")
        seg = BlockScaleRamp(cur, E.frames, np.log(t_end) / p)
        segments.append(seg)
        diagnostics["phases"].append({"side": "stable", "factor": t_end, "N_required": need})
        cur = seg.end
    m1 = spectrum_of(cur).moduli
    lam_u = m1[i_s]
    if lam_u <= 1.0 / epsilon:
        T = 1.0 / (0.99 * epsilon * lam_u)
        C1 = bound_of(cur)
        need = period_threshold(T, C1, epsilon)
        if p < need:
            raise PeriodTooShort(f"unstable push needs period >= {need}, have {p}", deficit=need - p)
        U = high_bundle(cur, d - i_s)
        if not U.invariant:
            raise IllConditionedGap(f"unstable bundle residual {U.residual:.3g}")
        seg = BlockScaleRamp(cur, U.frames, np.log(T) / p)
        segments.append(seg)
        diagnostics["phases"].append({"side": "unstable", "factor": T, "N_required": need})
    path = CocyclePath.from_segments(segments)
    return _outcome("push_moduli", path, goals, diagnostics, certify, samples)


# ---------------------------------------------------------------------------
# small angle


def _line_angles(lines: np.ndarray) -> np.ndarray:
    """Angle between the two lines at every fiber, lines of shape (..., p, 2, 2)."""
    a = lines[..., :, 0]
    b = lines[..., :, 1]
    cross = np.abs(a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0])
    return np.arcsin(np.minimum(cross, 1.0))


def _orientation_signs(maps: np.ndarray, start: int) -> np.ndarray:
    """``sigma`` for rotations at steps ``start, start+1, ...``: flips after every
    orientation-reversing map so the rotation sense is transported along."""
    p = maps.shape[0]
    det_sign = np.sign(np.linalg.det(maps))
    sig = np.empty(p)
    s = 1.0
    for k in range(p):
        n = (start + k) % p
        sig[n] = s
        s *= det_sign[(n + 1) % p]
    return sig


def _small_angle_2d_segment(c: PeriodicCocycle, epsilon: float, N: int, grid: int = 32):
    """Search for a RotateToward segment; returns ``(segment, info)``."""
    p = c.period
    mu0, lines0, ok0 = saddle_lines_2d(c.maps[None])
    if not ok0[0]:
        raise EigenvaluesNotReal("first return has no real distinct eigenvalues")
    mu0 = mu0[0]
    split = stable_unstable_splitting(c)
    base_angles = _line_angles(lines0[0])
    rep = is_N_dominated(c, split, N)
    if rep.dominated:
        raise StillDominated(
            f"stable/unstable splitting is {N}-dominated (worst ratio {rep.worst_ratio:.3g})",
            achieved_angle=float(base_angles.min()),
        )
    C = bound_of(c)
    theta = 0.5 * epsilon / C
    target = 0.9 * epsilon
    starts = [rep.worst_base] + [(rep.worst_base + k * max(1, p // 8)) % p for k in range(1, 8)]
    starts = list(dict.fromkeys(starts))
    lengths = []
    L = 2
    while L < p:
        lengths.append(L)
        L *= 2
    lengths.append(p)
    s_grid = np.arange(1, grid + 1) / grid
    best_angle = float(base_angles.min())
    fallback = None
    for L in lengths:
        for a in starts:
            sig = _orientation_signs(c.maps, a)
            idx = (a + np.arange(L)) % p
            for sgn in (1.0, -1.0):
                angles = np.zeros(p)
                angles[idx] = sgn * sig[idx] * theta
                rot = rotation2(s_grid[:, None] * angles[None]) @ c.maps[None]
                mu, lines, ok = saddle_lines_2d(rot, sweeps=1)
                ok &= np.all(np.sign(mu) == np.sign(mu0), axis=1)
                ang = _line_angles(lines).min(axis=1)
                ang = np.where(ok, ang, np.inf)
                best_angle = min(best_angle, float(ang.min()))
                bad = np.flatnonzero(~ok)
                reach = np.flatnonzero(ang < target)
                if reach.size == 0 or (bad.size and bad[0] < reach[0]):
                    continue
                k = int(reach[0])
                hi = float(s_grid[k])
                lo = float(s_grid[k - 1]) if k > 0 else 0.0
                # two batched refinements of the bracket; the target already
                # sits below epsilon, so the crossing needs no more precision
                for _ in range(2):
                    sub = lo + (hi - lo) * s_grid
                    _, l_, o_ = saddle_lines_2d(rotation2(sub[:, None] * angles[None]) @ c.maps[None], sweeps=1)
                    hit = np.flatnonzero(o_ & (_line_angles(l_).min(axis=1) < target))
                    if hit.size == 0:
                        break
                    j = int(hit[0])
                    lo, hi = (float(sub[j - 1]) if j > 0 else lo), float(sub[j])
                # correct where the fiber angle stays large along the whole segment
                probe = hi * np.linspace(0.0, 1.0, 9)
                _, l_, o_ = saddle_lines_2d(rotation2(probe[:, None] * angles[None]) @ c.maps[None])
                if not o_.all():
                    continue
                fiber_min = np.roll(_line_angles(l_).min(axis=0), -1)
                correct = fiber_min >= np.median(fiber_min)
                seg = RotateToward(c, hi * angles, correct, mu0)
                try:
                    rep_r = path_radius(CocyclePath.from_segments([seg]), 65)
                except NumericalFailure:
                    continue
                info = {
                    "window_start": a + 1,
                    "window_length": L,
                    "sign": sgn,
                    "theta_max": theta,
                    "t0": hi,
                    "corrections": int(correct.sum()),
                    "radius": rep_r.radius,
                    "initial_angle": float(base_angles.min()),
                    "not_dominated_ratio": rep.worst_ratio,
                }
                if rep_r.radius < epsilon:
                    return seg, info
                if fallback is None or rep_r.radius < fallback[2]:
                    fallback = (seg, info, rep_r.radius)
    if fallback is not None:
        return fallback[0], fallback[1]
    raise StillDominated(
        f"rotations of size <= {theta:.3g} did not bring the angle below {target:.3g}",
        achieved_angle=best_angle,
    )


def _small_angle_segments(c: PeriodicCocycle, epsilon: float, N: int, depth: int = 0):
    """Segments of a small-angle path for a saddle with real eigenvalues."""
    if c.dim == 2:
        seg, info = _small_angle_2d_segment(c, epsilon, N)
        return [seg], {"dim": 2, **info}
    split = stable_unstable_splitting(c)
    d = c.dim
    i_s = split.index
    rep = is_N_dominated(c, split, N)
    if rep.dominated:
        raise StillDominated(f"splitting is {N}-dominated in dimension {d}", achieved_angle=split.min_angle())
    options = []
    if i_s >= 2:
        options.append(("stable", band_bundle(c, 0, 1)))
    if d - i_s >= 2:
        options.append(("unstable", band_bundle(c, d - 1, d)))
    tried = []
    for side, H in options:
        if not H.invariant:
            tried.append({"side": side, "error": f"line residual {H.residual:.3g}"})
            continue
        dec = bdp_branch(c, split, H, N)
        entry = {"side": side, "decision": dec.to_dict(), "attempts": []}
        tried.append(entry)
        branches = []
        if dec.quotient_not_dominated:
            branches.append("quotient")
        if dec.restriction_not_dominated:
            branches.append("restriction")
        for branch in branches:
            if branch == "quotient":
                U = complement_frames(H.frames)
                sub = quotient_cocycle(c, H)
            else:
                other = split.unstable.frames if side == "stable" else split.stable.frames
                U = np.stack([orthonormalize(np.hstack([h, o])) for h, o in zip(H.frames, other)])
                sub = restrict_cocycle(c, Subbundle(U, transport_residual(c.maps, U)))
            budget = epsilon
            for _ in range(4):
                try:
                    inner, inner_info = _small_angle_segments(sub, budget, N, depth + 1)
                except (StillDominated, BranchExhausted, EigenvaluesNotReal) as exc:
                    entry["attempts"].append({"branch": branch, "budget": budget, "error": f"{type(exc).__name__}: {exc}"})
                    break
                lifted = []
                base = c
                for seg in inner:
                    ls = Lifted(base, U, seg)
                    lifted.append(ls)
                    base = ls.end
                radius = path_radius(CocyclePath.from_segments(lifted), 65).radius
                entry["attempts"].append({"branch": branch, "budget": budget, "radius": radius})
                if radius < epsilon:
                    info = {"dim": d, "side": side, "branch": branch, "inner_budget": budget, "inner": inner_info}
                    return lifted, info
                budget *= 0.5
    raise BranchExhausted(f"no branch produced a small-angle path in dimension {d}", diagnostics={"tried": tried})


def _angle_goals(c, epsilon):
    return {
        "dim": c.dim,
        "eigen_tol": 1e-8,
        "terminal_angle": epsilon,
        "radius": epsilon,
        "I": sorted(strong_stable_dims(c)),
        "J": sorted(strong_unstable_dims(c)),
        "persistence_required": False,
    }


def _check_small_angle_input(c: PeriodicCocycle):
    if not is_saddle(c):
        raise NotSaddle("cocycle is not a saddle")
    if not spectrum_of(c).all_real:
        raise EigenvaluesNotReal("small-angle construction needs real eigenvalues")


def small_angle_2d(c: PeriodicCocycle, epsilon: float, N: int, certify: bool = True, samples: int = 100) -> SynthesisOutcome:
    """Rotate-then-correct path bringing the stable/unstable angle below ``epsilon``.

    Rotations of size at most ``epsilon / (2C)`` on a window of the orbit turn
    the unstable line towards the stable one; the corrections keep both
    eigenvalues fixed.  Needs the splitting not to be N-dominated.
    """
    _check_epsilon(epsilon)
    if c.dim != 2:
        raise InvalidDim("small_angle_2d needs d = 2")
    _check_small_angle_input(c)
    goals = _angle_goals(c, epsilon)
    split = stable_unstable_splitting(c)
    angle0 = split.min_angle()
    if angle0 < epsilon:
        return _outcome("small_angle", CocyclePath.constant(c), goals, {"initial_angle": angle0}, certify, samples)
    seg, info = _small_angle_2d_segment(c, epsilon, N)
    return _outcome("small_angle", CocyclePath.from_segments([seg]), goals, info, certify, samples)


def small_angle(c: PeriodicCocycle, epsilon: float, N: int, certify: bool = True, samples: int = 100) -> SynthesisOutcome:
    """Small stable/unstable angle in any dimension.

    In dimension ``d > 2`` an invariant line ``H`` is taken inside the stable
    bundle (smallest modulus) or the unstable one (largest modulus), and the
    construction recurses on whichever of the quotient by ``H`` or the
    restriction to ``H + (other side)`` is not N-dominated.  The inner path is
    written back into the ambient cocycle with all other blocks held fixed; the
    ambient angle is at most the inner one.
    """
    _check_epsilon(epsilon)
    if c.dim == 2:
        return small_angle_2d(c, epsilon, N, certify, samples)
    _check_small_angle_input(c)
    goals = _angle_goals(c, epsilon)
    split = stable_unstable_splitting(c)
    angle0 = split.min_angle()
    if angle0 < epsilon:
        return _outcome("small_angle", CocyclePath.constant(c), goals, {"initial_angle": angle0}, certify, samples)
    segs, info = _small_angle_segments(c, epsilon, N)
    info["initial_angle"] = angle0
    return _outcome("small_angle", CocyclePath.from_segments(segs), goals, info, certify, samples)


# ---------------------------------------------------------------------------
# pipeline


def _clusters(moduli, rtol: float = 1e-6):
    out = []
    k = 0
    d = len(moduli)
    while k < d:
        j = k + 1
        while j < d and 1.0 - moduli[j - 1] / moduli[j] <= rtol:
            j += 1
        if j - k > 1:
            out.append((k, j))
        k = j
    return out


def _invariant_line(c: PeriodicCocycle, lo: int, hi: int) -> np.ndarray:
    """Frames of an invariant line inside the spectral band ``lo..hi-1``."""
    band = band_bundle(c, lo, hi)
    if band.dim_fiber == c.dim:
        sub_B = first_return(c)
        frame0 = np.eye(c.dim)
    else:
        sub = restrict_cocycle(c, band) if band.invariant else None
        if sub is None:
            raise IllConditionedGap("repeated-modulus cluster cannot be isolated")
        sub_B = first_return(sub)
        frame0 = band.frames[0]
    vals, vecs = np.linalg.eig(sub_B)
    k = int(np.argmin(np.abs(vals.imag)))
    v = frame0 @ np.real(vecs[:, k])
    v /= np.linalg.norm(v)
    frames = np.empty((c.period, c.dim, 1))
    frames[0, :, 0] = v
    for n in range(c.period - 1):
        w = c.maps[n] @ frames[n, :, 0]
        frames[n + 1, :, 0] = w / np.linalg.norm(w)
    return frames


def separate_moduli(c: PeriodicCocycle, epsilon: float, rtol: float = 1e-6):
    """Tiny LinearBlend segments splitting repeated moduli.

    For cluster number ``k`` an invariant line is scaled per step by
    ``1 -/+ k * 1e-4 * epsilon / d`` (away from modulus 1).  Returns
    ``(path, info)``.
    """
    m = spectrum_of(c).moduli
    clusters = _clusters(m, rtol)
    segments = []
    cur = c
    info = {"clusters": [], "max_factor": 0.0}
    for k, (lo, hi) in enumerate(clusters, 1):
        a = k * SEPARATION_SCALE * epsilon / c.dim
        if m[lo] < 1.0:
            a = -a
        frames = _invariant_line(cur, lo, hi)
        proj = frames @ np.swapaxes(frames, 1, 2)
        target = cur.maps @ (np.eye(c.dim)[None] + a * proj)
        seg = LinearBlend(cur, target)
        segments.append(seg)
        info["clusters"].append(
            {"positions": [lo + 1, hi], "factor": a, "line_residual": transport_residual(cur.maps, frames)}
        )
        info["max_factor"] = max(info["max_factor"], abs(a))
        cur = seg.end
    path = CocyclePath.from_segments(segments) if segments else CocyclePath.constant(c)
    info["distance"] = dist_cocycle(c, path.end)
    return path, info


def pipeline_small_angle(
    c: PeriodicCocycle, epsilon: float, N: int, seed: int = 0, certify: bool = True, samples: int = 100
) -> SynthesisOutcome:
    """realify, separate repeated moduli, push moduli, close the angle.

    On failure raises :class:`StageFailed` carrying the outcome of the stages
    that did succeed.
    """
    _check_epsilon(epsilon)
    path = CocyclePath.constant(c)
    stage_certs = []
    stages = []
    goals = {
        "dim": c.dim,
        "radius": 4 * epsilon,
        "real": True,
        "terminal_moduli": epsilon,
        "terminal_angle": epsilon,
    }

    def partial():
        return _outcome("pipeline", path, {"dim": c.dim}, {"stages": stages}, False, samples, stage_certs)

    def run(name, fn):
        nonlocal path
        try:
            sub = fn(path.end)
        except CocycleError as exc:
            raise StageFailed(name, exc, partial()) from exc
        sub_path, radius, certs, info = sub
        path = concat_paths(path, sub_path)
        stages.append({"stage": name, "radius": radius, "info": info})
        stage_certs.extend(
            Certificate(f"{name}/{ct.name}", ct.margin, ct.details, ct.samples, ct.required) for ct in certs
        )

    def do_realify(x):
        o = realify(x, epsilon, seed, certify, samples)
        return o.path, o.radius_report.radius, o.certificates, o.diagnostics

    def do_separate(x):
        p_, info = separate_moduli(x, epsilon)
        cert = Certificate(
            "magnitude",
            SEPARATION_SCALE * epsilon - info["max_factor"],
            {"max_factor": info["max_factor"], "distance": info["distance"]},
            1,
        )
        return p_, path_radius(p_, RADIUS_SAMPLES).radius, [cert], info

    def do_push(x):
        o = push_moduli(x, epsilon, certify, samples)
        return o.path, o.radius_report.radius, o.certificates, o.diagnostics

    def do_angle(x):
        o = small_angle(x, epsilon, N, certify, samples)
        return o.path, o.radius_report.radius, o.certificates, o.diagnostics

    run("realify", do_realify)
    run("separate", do_separate)
    run("push_moduli", do_push)
    run("small_angle", do_angle)
    diagnostics = {"stages": stages, "stage_radius_sum": float(sum(s["radius"] for s in stages))}
    return _outcome("pipeline", path, goals, diagnostics, certify, samples, stage_certs)
