"""Piecewise-analytic paths ``t -> (A_{1,t}, ..., A_{p,t})`` of cocycles.

A path is a list of segments tiling ``[0, 1]``.  Each segment carries its own
base cocycle (the value at its left end) and is evaluated on a local parameter
``s in [0, 1]``.  All segment kinds evaluate batches of parameters at once,
returning arrays of shape ``(m, p, d, d)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import PeriodicCocycle, batch_first_return, dist_cocycle, stack_norm2
from .errors import EndpointMismatch, InvalidArgument, NumericalFailure, OutOfRange

CONTINUITY_TOL = 1e-10


def plane_rotation(u: np.ndarray, v: np.ndarray, theta) -> np.ndarray:
    """Rotation by ``theta`` in the oriented plane ``(u, v)``, identity elsewhere.

    ``u`` and ``v`` are orthonormal; ``u`` is carried towards ``v``.  ``theta``
    may be an array, giving a stack of rotations.
    """
    theta = np.asarray(theta, dtype=float)
    P = np.outer(u, u) + np.outer(v, v)
    K = np.outer(v, u) - np.outer(u, v)
    eye = np.eye(u.shape[0])
    c = (np.cos(theta) - 1.0)[..., None, None]
    s = np.sin(theta)[..., None, None]
    return eye + c * P + s * K


def rotation2(theta) -> np.ndarray:
    return plane_rotation(np.array([1.0, 0.0]), np.array([0.0, 1.0]), theta)


class Segment:
    """Base class.  Subclasses implement :meth:`evaluate` and :meth:`params`."""

    kind = "Segment"

    def __init__(self, base: PeriodicCocycle):
        self.base = base

    def evaluate(self, s) -> np.ndarray:
        raise NotImplementedError

    def params(self) -> dict:
        raise NotImplementedError

    def at(self, s: float) -> PeriodicCocycle:
        return PeriodicCocycle(self.evaluate(np.array([s]))[0], cond_ceiling=np.inf)

    @property
    def end(self) -> PeriodicCocycle:
        return self.at(1.0)

    @property
    def is_trivial(self) -> bool:
        return False

    def _s(self, s):
        s = np.atleast_1d(np.asarray(s, dtype=float))
        if np.any(s < -1e-15) or np.any(s > 1 + 1e-15):
            raise OutOfRange("segment parameter outside [0, 1]")
        return np.clip(s, 0.0, 1.0)


class Constant(Segment):
    kind = "Constant"

    def evaluate(self, s):
        s = self._s(s)
        return np.broadcast_to(self.base.maps, (s.size,) + self.base.maps.shape).copy()

    def params(self):
        return {"base": self.base}

    @property
    def is_trivial(self):
        return True


class LinearBlend(Segment):
    """``A_n(s) = (1 - s) A_n + s T_n``."""

    kind = "LinearBlend"

    def __init__(self, base, target):
        super().__init__(base)
        target = np.asarray(target.maps if isinstance(target, PeriodicCocycle) else target, dtype=float)
        if target.shape != base.maps.shape:
            raise InvalidArgument(f"blend target shape {target.shape} != {base.maps.shape}")
        self.target = target

    def evaluate(self, s):
        s = self._s(s)[:, None, None, None]
        return (1.0 - s) * self.base.maps[None] + s * self.target[None]

    def params(self):
        return {"base": self.base, "target": self.target}


class RotationRamp(Segment):
    """Post-composition with plane rotations: ``A_n(s) = R(u_n, v_n; s*angle_n) A_n``.

    The plane ``(u_n, v_n)`` lives in the target fiber ``n + 1``.
    """

    kind = "RotationRamp"

    def __init__(self, base, planes, angles):
        super().__init__(base)
        planes = np.asarray(planes, dtype=float)
        angles = np.asarray(angles, dtype=float)
        p, d = base.period, base.dim
        if planes.shape != (p, d, 2) or angles.shape != (p,):
            raise InvalidArgument("RotationRamp needs planes (p, d, 2) and angles (p,)")
        self.planes = planes
        self.angles = angles

    @classmethod
    def in_plane(cls, base, angles):
        """2-dimensional case: the whole fiber is the plane."""
        planes = np.broadcast_to(np.eye(2), (base.period, 2, 2)).copy()
        return cls(base, planes, angles)

    def rotations(self, s) -> np.ndarray:
        s = self._s(s)
        out = np.empty((s.size, self.base.period, self.base.dim, self.base.dim))
        for n in range(self.base.period):
            u, v = self.planes[n, :, 0], self.planes[n, :, 1]
            out[:, n] = plane_rotation(u, v, s * self.angles[n])
        return out

    def evaluate(self, s):
        return self.rotations(s) @ self.base.maps[None]

    def params(self):
        return {"base": self.base, "planes": self.planes, "angles": self.angles}

    @property
    def is_trivial(self):
        return not np.any(self.angles)


class BlockScaleRamp(Segment):
    """Scale an invariant subbundle: ``A_n(s) = A_n (I + (exp(s*log_rate) - 1) P_n)``.

    ``P_n`` is the orthogonal projector onto ``span(frames[n])``.  When the
    subbundle is invariant this multiplies the restricted block by
    ``exp(s*log_rate)`` and leaves the coupling and quotient blocks alone, so
    the eigenvalues carried by the subbundle are multiplied by
    ``exp(s*p*log_rate)`` and the others do not move.
    """

    kind = "BlockScaleRamp"

    def __init__(self, base, frames, log_rate: float):
        super().__init__(base)
        frames = np.asarray(frames, dtype=float)
        if frames.ndim != 3 or frames.shape[:2] != (base.period, base.dim):
            raise InvalidArgument("BlockScaleRamp needs frames of shape (p, d, k)")
        self.frames = frames
        self.log_rate = float(log_rate)

    def evaluate(self, s):
        s = self._s(s)
        proj = self.frames @ np.swapaxes(self.frames, 1, 2)
        factor = np.expm1(s * self.log_rate)[:, None, None, None]
        right = np.eye(self.base.dim)[None, None] + factor * proj[None]
        return self.base.maps[None] @ right

    def params(self):
        return {"base": self.base, "frames": self.frames, "log_rate": self.log_rate}

    @property
    def is_trivial(self):
        return self.log_rate == 0.0


def saddle_lines_2d(maps: np.ndarray, sweeps: int = 2):
    """Real eigenvalues and invariant lines of a batch of 2-dimensional cocycles.

    Parameters
    ----------
    maps : ndarray, shape (m, p, 2, 2)

    Returns
    -------
    mu : ndarray (m, 2)
        Eigenvalues of the first return at fiber 0, sorted by modulus.
    lines : ndarray (m, p, 2, 2)
        ``lines[:, n, :, 0]`` spans the weak-modulus line at fiber ``n`` and
        ``lines[:, n, :, 1]`` the strong-modulus line.  The first is propagated
        backwards and the second forwards, both of which are numerically
        contracting directions.
    ok : ndarray of bool (m,)
        False where the eigenvalues are not real and distinct.
    """
    m, p = maps.shape[:2]
    B = batch_first_return(maps)
    tr = B[:, 0, 0] + B[:, 1, 1]
    det = B[:, 0, 0] * B[:, 1, 1] - B[:, 0, 1] * B[:, 1, 0]
    disc = tr * tr - 4.0 * det
    scale = np.maximum(tr * tr, np.abs(4.0 * det))
    ok = disc > 1e-14 * scale
    root = np.sqrt(np.where(ok, disc, 0.0))
    big = np.where(tr >= 0, tr + root, tr - root) / 2.0
    with np.errstate(divide="ignore", invalid="ignore"):
        small = np.where(big != 0, det / big, 0.0)
    mu = np.stack([small, big], axis=1)

    def eigvec(lam):
        # null vector of B - lam I, from whichever row is larger
        a = B[:, 0, 0] - lam
        b = B[:, 0, 1]
        c = B[:, 1, 0]
        d = B[:, 1, 1] - lam
        r1 = np.stack([-b, a], axis=1)
        r2 = np.stack([-d, c], axis=1)
        n1 = np.linalg.norm(r1, axis=1)
        n2 = np.linalg.norm(r2, axis=1)
        v = np.where((n1 >= n2)[:, None], r1, r2)
        nv = np.linalg.norm(v, axis=1)
        v = np.where((nv > 0)[:, None], v / np.where(nv > 0, nv, 1.0)[:, None], np.array([1.0, 0.0]))
        return v

    ws = eigvec(small)
    wu = eigvec(big)
    # per-step entries as (p, m) arrays keep the sequential loops cheap
    f = [np.ascontiguousarray(maps[:, :, i, j].T) for i in range(2) for j in range(2)]
    det = f[0] * f[3] - f[1] * f[2]
    g = [f[3] / det, -f[1] / det, -f[2] / det, f[0] / det]
    lines = np.empty((m, p, 2, 2))
    out_u = np.empty((p, 2, m))
    out_s = np.empty((p, 2, m))
    for _ in range(sweeps):
        x, y = wu[:, 0], wu[:, 1]
        for n in range(p):
            x, y = f[0][n] * x + f[1][n] * y, f[2][n] * x + f[3][n] * y
            r = np.hypot(x, y)
            x, y = x / r, y / r
            out_u[(n + 1) % p, 0], out_u[(n + 1) % p, 1] = x, y
        wu = np.stack([x, y], axis=1)
        x, y = ws[:, 0], ws[:, 1]
        for n in range(p - 1, -1, -1):
            x, y = g[0][n] * x + g[1][n] * y, g[2][n] * x + g[3][n] * y
            r = np.hypot(x, y)
            x, y = x / r, y / r
            out_s[n, 0], out_s[n, 1] = x, y
        ws = np.stack([x, y], axis=1)
    lines[:, :, :, 1] = out_u.transpose(2, 0, 1)
    lines[:, :, :, 0] = out_s.transpose(2, 0, 1)
    return mu, lines, ok


class RotateToward(Segment):
    """Rotate-then-correct family for 2-dimensional saddles.

    ``A_n(s) = L_n(s) R(s*angles[n]) A_n``.  The rotations tilt the unstable
    line towards the stable one; ``L_n(s)`` is diagonal in the eigenbasis of the
    rotated cocycle at fiber ``n + 1`` and is applied only at the steps flagged
    in ``correct``.  Its factors are the ``q``-th roots of ``target / mu(s)``
    (``q`` = number of flagged steps), so the first return keeps the
    eigenvalues ``targets`` for every ``s`` while both invariant lines stay
    those of the rotated cocycle.
    """

    kind = "RotateToward"

    def __init__(self, base, angles, correct, targets):
        super().__init__(base)
        if base.dim != 2:
            raise InvalidArgument("RotateToward acts on 2-dimensional cocycles")
        self.angles = np.asarray(angles, dtype=float)
        self.correct = np.asarray(correct, dtype=bool)
        self.targets = np.asarray(targets, dtype=float)
        p = base.period
        if self.angles.shape != (p,) or self.correct.shape != (p,) or self.targets.shape != (2,):
            raise InvalidArgument("RotateToward needs angles (p,), correct (p,), targets (2,)")
        if not self.correct.any():
            raise InvalidArgument("RotateToward needs at least one correction step")

    def rotated(self, s):
        s = self._s(s)
        R = rotation2(s[:, None] * self.angles[None, :])
        return R @ self.base.maps[None]

    def evaluate(self, s):
        s = self._s(s)
        rot = self.rotated(s)
        mu, lines, ok = saddle_lines_2d(rot)
        if not np.all(ok):
            raise NumericalFailure("rotated cocycle lost real distinct eigenvalues along RotateToward")
        ratio = self.targets[None, :] / mu
        if np.any(ratio <= 0):
            raise NumericalFailure("eigenvalue changed sign along RotateToward")
        q = int(self.correct.sum())
        fac = ratio ** (1.0 / q)
        out = rot.copy()
        p = self.base.period
        for n in np.flatnonzero(self.correct):
            S = lines[:, (n + 1) % p]
            D = fac[:, :, None] * np.linalg.inv(S)
            out[:, n] = S @ D @ rot[:, n]
        at0 = s == 0.0
        if np.any(at0):
            out[at0] = self.base.maps
        return out

    def params(self):
        return {"base": self.base, "angles": self.angles, "correct": self.correct, "targets": self.targets}

    @property
    def is_trivial(self):
        return not np.any(self.angles)


class Lifted(Segment):
    """A segment on a sub-cocycle written back into the ambient cocycle.

    ``A_n(s) = A_n + U_{n+1} (M_n(s) - M_n(0)) U_n^T`` where ``M`` is the
    inner segment, expressed in the orthonormal frames ``U`` (``frames``).
    With ``U`` spanning an invariant subbundle this replaces the restricted
    block; with ``U`` spanning the orthocomplement of one it replaces the
    quotient block.  All other blocks are held fixed.
    """

    def __init__(self, base, frames, inner: Segment):
        super().__init__(base)
        frames = np.asarray(frames, dtype=float)
        p, d = base.period, base.dim
        k = inner.base.dim
        if frames.shape != (p, d, k) or inner.base.period != p:
            raise InvalidArgument("Lifted frames must have shape (p, d, inner_dim)")
        self.frames = frames
        self.inner = inner

    @property
    def kind(self):
        return self.inner.kind

    def evaluate(self, s):
        s = self._s(s)
        delta = self.inner.evaluate(s) - self.inner.base.maps[None]
        target = np.roll(self.frames, -1, axis=0)
        lift = target[None] @ delta @ np.swapaxes(self.frames, 1, 2)[None]
        return self.base.maps[None] + lift

    def params(self):
        return {"base": self.base, "frames": self.frames, "inner": self.inner}

    @property
    def is_trivial(self):
        return self.inner.is_trivial


class Reversed(Segment):
    """The inner segment traversed backwards; its base is the inner end point."""

    def __init__(self, inner: Segment):
        super().__init__(inner.end)
        self.inner = inner

    @property
    def kind(self):
        return self.inner.kind

    def evaluate(self, s):
        s = self._s(s)
        out = self.inner.evaluate(1.0 - s)
        out[s == 0.0] = self.base.maps
        return out

    def params(self):
        return {"reverse_of": self.inner}

    @property
    def is_trivial(self):
        return self.inner.is_trivial


@dataclass(frozen=True)
class Piece:
    t0: float
    t1: float
    segment: Segment


@dataclass(frozen=True)
class PathRadiusReport:
    radius: float
    argmax_t: float
    argmax_n: int
    sample_count: int
    samples_per_segment: int = 0

    def to_dict(self):
        return {
            "radius": self.radius,
            "argmax_t": self.argmax_t,
            "argmax_n": self.argmax_n + 1,
            "sample_count": self.sample_count,
            "samples_per_segment": self.samples_per_segment,
        }


@dataclass(frozen=True)
class CocyclePath:
    """Segments tiling ``[0, 1]``, starting at ``start``."""

    start: PeriodicCocycle
    pieces: tuple = field(default=())

    def __post_init__(self):
        pieces = tuple(self.pieces)
        if not pieces:
            pieces = (Piece(0.0, 1.0, Constant(self.start)),)
        object.__setattr__(self, "pieces", pieces)
        if pieces[0].t0 != 0.0 or pieces[-1].t1 != 1.0:
            raise InvalidArgument("segments must tile [0, 1]")
        for a, b in zip(pieces, pieces[1:]):
            if a.t1 != b.t0:
                raise InvalidArgument("segments must be contiguous")
        for pc in pieces:
            if not pc.t0 < pc.t1:
                raise InvalidArgument("segment intervals must have positive length")
        if pieces[0].segment.base.maps.shape != self.start.maps.shape:
            raise InvalidArgument("first segment does not match the start cocycle shape")
        if self.start.max_entry_diff(pieces[0].segment.base) > 1e-12:
            raise InvalidArgument("first segment does not start at the declared start cocycle")

    @classmethod
    def constant(cls, c: PeriodicCocycle) -> "CocyclePath":
        return cls(c)

    @classmethod
    def from_segments(cls, segments) -> "CocyclePath":
        """Equal-length pieces, one per segment; checks continuity at the joins."""
        segments = list(segments)
        if not segments:
            raise InvalidArgument("need at least one segment")
        m = len(segments)
        for a, b in zip(segments, segments[1:]):
            gap = a.end.max_entry_diff(b.base)
            if gap > CONTINUITY_TOL:
                raise EndpointMismatch(f"segments do not join (gap {gap:.3g})")
        edges = [k / m for k in range(m)] + [1.0]
        pieces = tuple(Piece(edges[k], edges[k + 1], seg) for k, seg in enumerate(segments))
        return cls(segments[0].base, pieces)

    @property
    def segments(self):
        return [pc.segment for pc in self.pieces]

    @property
    def is_trivial(self) -> bool:
        return all(pc.segment.is_trivial for pc in self.pieces)

    @property
    def breakpoints(self) -> np.ndarray:
        return np.array([pc.t0 for pc in self.pieces] + [1.0])

    @property
    def end(self) -> PeriodicCocycle:
        return self.pieces[-1].segment.end

    def maps_at(self, ts) -> np.ndarray:
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        if np.any(ts < 0) or np.any(ts > 1):
            raise OutOfRange("t outside [0, 1]")
        out = np.empty((ts.size,) + self.start.maps.shape)
        idx = np.searchsorted([pc.t1 for pc in self.pieces], ts, side="left")
        idx = np.minimum(idx, len(self.pieces) - 1)
        for k in np.unique(idx):
            pc = self.pieces[k]
            sel = idx == k
            s = (ts[sel] - pc.t0) / (pc.t1 - pc.t0)
            out[sel] = pc.segment.evaluate(np.clip(s, 0.0, 1.0))
        return out


def sample_path(path: CocyclePath, t: float) -> PeriodicCocycle:
    """The cocycle at time ``t``."""
    if not (0.0 <= t <= 1.0):
        raise OutOfRange(f"t={t} outside [0, 1]")
    if t == 0.0:
        return path.start
    return PeriodicCocycle(path.maps_at([t])[0], cond_ceiling=np.inf)


def sample_times(path: CocyclePath, samples: int) -> np.ndarray:
    """Uniform grid ``k / samples`` (``samples + 1`` points) plus all breakpoints.

    Doubling ``samples`` refines the grid, so a sampled maximum can only grow.
    """
    if samples < 1:
        raise InvalidArgument("samples must be >= 1")
    grid = np.arange(samples + 1) / samples
    return np.unique(np.concatenate([grid, path.breakpoints]))


def _deviations(maps_t: np.ndarray, maps0: np.ndarray, inv0: np.ndarray):
    fwd = stack_norm2(maps_t - maps0[None])
    inv = stack_norm2(np.linalg.inv(maps_t) - inv0[None])
    return np.maximum(fwd, inv)


def path_radius(path: CocyclePath, samples: int = 257) -> PathRadiusReport:
    """Grid maximum of ``max(|A_{n,t} - A_{n,0}|, |A_{n,t}^-1 - A_{n,0}^-1|)``.

    Each segment is sampled at ``samples`` equispaced local parameters,
    endpoints included.  Refining from ``2^k + 1`` to ``2^(k+1) + 1`` samples
    only adds points.
    """
    if samples < 2:
        raise InvalidArgument("samples must be >= 2")
    maps0 = path.start.maps
    inv0 = path.start.inverse_maps
    best = (0.0, 0.0, 0)
    count = 0
    s = np.linspace(0.0, 1.0, samples)
    for pc in path.pieces:
        if pc.segment.is_trivial and pc.segment.base == path.start:
            count += samples
            continue
        dev = _deviations(pc.segment.evaluate(s), maps0, inv0)
        count += dev.size // path.start.period
        k, n = np.unravel_index(int(np.argmax(dev)), dev.shape)
        if dev[k, n] > best[0]:
            best = (float(dev[k, n]), float(pc.t0 + s[k] * (pc.t1 - pc.t0)), int(n))
    return PathRadiusReport(best[0], best[1], best[2], count, samples)


def concat_paths(a: CocyclePath, b: CocyclePath) -> CocyclePath:
    """Run ``a`` then ``b``; each segment gets an equal share of ``[0, 1]``."""
    gap = a.end.max_entry_diff(b.start)
    if gap > CONTINUITY_TOL:
        raise EndpointMismatch(f"end of first path differs from start of second by {gap:.3g}")
    if a.is_trivial:
        return b
    if b.is_trivial:
        return a
    return CocyclePath.from_segments(a.segments + b.segments)


def reverse_path(path: CocyclePath) -> CocyclePath:
    return CocyclePath.from_segments([Reversed(seg) for seg in reversed(path.segments)])


def path_endpoint_distance(path: CocyclePath) -> float:
    return dist_cocycle(path.start, path.end)
