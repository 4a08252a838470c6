"""Numerical certificates evaluated along a path.

Each certificate samples the path on the grid ``k / samples`` plus all segment
breakpoints, so doubling ``samples`` only adds points and a failure can never
turn into a pass by refining.  ``passed`` is always ``margin > 0``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import PeriodicCocycle, batch_first_return, stack_norm2
from .errors import InvalidArgument
from .paths import CocyclePath, sample_times
from .spectral import GAP_RTOL, sort_eigenvalues, stable_unstable_splitting

DEFAULT_SAMPLES = 100


@dataclass(frozen=True)
class Certificate:
    name: str
    margin: float
    details: dict = field(default_factory=dict)
    samples: int = 0
    required: bool = True

    @property
    def passed(self) -> bool:
        return bool(self.margin > 0)

    def to_dict(self):
        return {
            "name": self.name,
            "passed": self.passed,
            "margin": float(self.margin),
            "samples": self.samples,
            "required": self.required,
            "details": self.details,
        }


class PathSampler:
    """Caches maps, return maps and eigenvalues of a path on a sample grid."""

    def __init__(self, path: CocyclePath, samples: int = DEFAULT_SAMPLES):
        self.path = path
        self.samples = samples
        self.times = sample_times(path, samples)
        self._maps = None
        self._eig = None

    @property
    def maps(self) -> np.ndarray:
        if self._maps is None:
            self._maps = self.path.maps_at(self.times)
        return self._maps

    @property
    def returns(self) -> np.ndarray:
        return batch_first_return(self.maps)

    @property
    def eigenvalues(self) -> np.ndarray:
        if self._eig is None:
            ev = np.linalg.eigvals(self.returns)
            self._eig = np.stack([sort_eigenvalues(e) for e in ev])
        return self._eig

    @property
    def moduli(self) -> np.ndarray:
        return np.abs(self.eigenvalues)


def _sampler(path, samples):
    if isinstance(path, PathSampler):
        return path
    if samples < 1:
        raise InvalidArgument("samples must be positive")
    return PathSampler(path, samples)


def _gap_margins(moduli: np.ndarray, dims) -> np.ndarray:
    """Relative strong-gap margins ``1 - m_i / min(m_{i+1}, 1) - rtol`` per sample."""
    d = moduli.shape[1]
    out = []
    for i in sorted(dims):
        if not 1 <= i <= d:
            raise InvalidArgument(f"dimension {i} outside 1..{d}")
        nxt = moduli[:, i] if i < d else np.full(moduli.shape[0], np.inf)
        out.append(1.0 - moduli[:, i - 1] / np.minimum(nxt, 1.0) - GAP_RTOL)
    return np.array(out)


def check_flag_persistence(path, I, J, samples: int = DEFAULT_SAMPLES, required: bool = True) -> Certificate:
    """``I`` stays inside the strong stable dimensions and ``J`` inside the
    strong unstable ones at every sampled time."""
    S = _sampler(path, samples)
    mod = S.moduli
    inv_mod = np.sort(1.0 / mod, axis=1)
    gI = _gap_margins(mod, I) if I else np.empty((0, mod.shape[0]))
    gJ = _gap_margins(inv_mod, J) if J else np.empty((0, mod.shape[0]))
    allg = np.concatenate([gI, gJ])
    if allg.size == 0:
        return Certificate("flag_persistence", np.inf, {"I": [], "J": []}, S.samples, required)
    margin = float(allg.min())
    k = int(np.unravel_index(np.argmin(allg), allg.shape)[1])
    details = {"I": sorted(I), "J": sorted(J), "worst_t": float(S.times[k])}
    return Certificate("flag_persistence", margin, details, S.samples, required)


def check_moduli_invariance(path, tol: float = 1e-7, samples: int = DEFAULT_SAMPLES) -> Certificate:
    """Sorted moduli match those at ``t = 0`` within relative ``tol``."""
    S = _sampler(path, samples)
    mod = S.moduli
    dev = np.abs(mod / mod[0][None] - 1.0)
    k = int(np.argmax(dev.max(axis=1)))
    worst = float(dev.max())
    return Certificate(
        "moduli_invariance", tol - worst, {"max_rel_deviation": worst, "worst_t": float(S.times[k]), "tol": tol}, S.samples
    )


def check_eigen_invariance(path, tol: float = 1e-8, samples: int = DEFAULT_SAMPLES) -> Certificate:
    """Eigenvalues (complex, with multiplicity, canonically paired) match ``t = 0``
    within relative ``tol``."""
    S = _sampler(path, samples)
    ev = S.eigenvalues
    scale = np.maximum(np.abs(ev[0]), np.finfo(float).tiny)
    dev = np.abs(ev - ev[0][None]) / scale[None]
    k = int(np.argmax(dev.max(axis=1)))
    worst = float(dev.max())
    return Certificate(
        "eigen_invariance", tol - worst, {"max_rel_deviation": worst, "worst_t": float(S.times[k]), "tol": tol}, S.samples
    )


def path_deviation(S: PathSampler) -> tuple:
    maps0 = S.path.start.maps
    inv0 = S.path.start.inverse_maps
    maps = S.maps
    fwd = stack_norm2(maps - maps0[None])
    inv = stack_norm2(np.linalg.inv(maps) - inv0[None])
    dev = np.maximum(fwd, inv)
    k, n = np.unravel_index(int(np.argmax(dev)), dev.shape)
    return float(dev[k, n]), float(S.times[k]), int(n)


def check_radius_bound(path, delta: float, samples: int = DEFAULT_SAMPLES) -> Certificate:
    """Sampled radius strictly below ``delta``."""
    S = _sampler(path, samples)
    r, t, n = path_deviation(S)
    return Certificate("radius_bound", delta - r, {"radius": r, "argmax_t": t, "argmax_n": n + 1, "delta": delta}, S.samples)


def _terminal(path) -> PeriodicCocycle:
    return path.path.end if isinstance(path, PathSampler) else path.end


def check_terminal_real(path, tol: float = 1e-9) -> Certificate:
    """All terminal eigenvalues real up to a relative pair discriminant.

    A conjugate pair ``x +- iy`` has quadratic discriminant ``-4 y^2`` and
    determinant ``|l|^2``, so the margin is ``tol - max 4 (Im l / |l|)^2``.  For
    ``d = 2`` this is exactly ``tol + (tr^2 - 4 det) / |det|`` when negative,
    and that discriminant is reported too.  Working with the discriminant
    rather than ``Im l`` keeps the test well conditioned at double eigenvalues.
    """
    end = _terminal(path)
    B = batch_first_return(end.maps[None])[0]
    ev = sort_eigenvalues(np.linalg.eigvals(B))
    rel = 4.0 * (ev.imag / np.abs(ev)) ** 2
    details = {"max_imag": float(np.abs(ev.imag).max()), "max_pair_discriminant": float(rel.max()), "tol": tol}
    if end.dim == 2:
        det = B[0, 0] * B[1, 1] - B[0, 1] * B[1, 0]
        tr = B[0, 0] + B[1, 1]
        details["discriminant"] = float((tr * tr - 4.0 * det) / abs(det))
    return Certificate("terminal_real", float(tol - rel.max()), details, 1)


def check_terminal_angle(path, epsilon: float) -> Certificate:
    """Minimum stable/unstable angle of the terminal cocycle below ``epsilon``."""
    end = _terminal(path)
    try:
        split = stable_unstable_splitting(end)
    except Exception as exc:  # not a saddle, or no clean splitting
        return Certificate("terminal_angle", -np.inf, {"error": f"{type(exc).__name__}: {exc}"}, 1)
    angles = split.angles()
    n = int(np.argmin(angles))
    return Certificate("terminal_angle", epsilon - float(angles[n]), {"angle": float(angles[n]), "base": n + 1}, 1)


def check_terminal_moduli(path, epsilon: float) -> Certificate:
    """Every terminal modulus below ``epsilon`` or above ``1 / epsilon``
    (margin measured in log scale)."""
    end = _terminal(path)
    B = batch_first_return(end.maps[None])[0]
    with np.errstate(divide="ignore"):
        lm = np.log(np.abs(np.linalg.eigvals(B)))
    le = np.log(epsilon)
    slack = np.maximum(le - lm, lm + le)
    return Certificate("terminal_moduli", float(slack.min()), {"moduli": sorted(np.exp(lm).tolist())}, 1)


def check_moduli_distinct(path, samples: int = DEFAULT_SAMPLES, rtol: float = 1e-6, unit_tol: float = 1e-9) -> Certificate:
    """Moduli pairwise distinct (relative gap above ``rtol``) and away from 1
    at every sampled time."""
    S = _sampler(path, samples)
    mod = S.moduli
    gaps = 1.0 - mod[:, :-1] / mod[:, 1:] if mod.shape[1] > 1 else np.full((mod.shape[0], 1), np.inf)
    with np.errstate(divide="ignore"):
        unit = np.abs(np.log(mod))
    gmin = float(gaps.min())
    umin = float(unit.min())
    margin = min(gmin - rtol, umin - unit_tol)
    return Certificate("moduli_distinct", margin, {"min_rel_gap": gmin, "min_abs_log_modulus": umin}, S.samples)


def verify_outcome(outcome, goals: dict = None, samples: int = DEFAULT_SAMPLES) -> list:
    """Run the certificates that ``goals`` asks for.

    Recognized goals: ``dim``, ``radius`` (delta), ``I``, ``J``,
    ``persistence_required``, ``moduli_tol``, ``eigen_tol``, ``real``,
    ``moduli_distinct``, ``terminal_angle``, ``terminal_moduli``.
    """
    goals = dict(outcome.goals if goals is None else goals)
    path = outcome.path
    d = path.start.dim
    if "dim" in goals and goals["dim"] != d:
        raise InvalidArgument(f"goals are for dimension {goals['dim']}, path has dimension {d}")
    for key in ("I", "J"):
        for i in goals.get(key) or ():
            if not 1 <= i <= d:
                raise InvalidArgument(f"{key} contains {i}, outside 1..{d}")
    S = PathSampler(path, samples)
    out = []
    if "I" in goals or "J" in goals:
        out.append(
            check_flag_persistence(
                S, set(goals.get("I") or ()), set(goals.get("J") or ()), required=goals.get("persistence_required", True)
            )
        )
    if "moduli_tol" in goals:
        out.append(check_moduli_invariance(S, goals["moduli_tol"]))
    if "eigen_tol" in goals:
        out.append(check_eigen_invariance(S, goals["eigen_tol"]))
    if goals.get("moduli_distinct"):
        out.append(check_moduli_distinct(S))
    if "radius" in goals:
        out.append(check_radius_bound(S, goals["radius"]))
    if goals.get("real"):
        out.append(check_terminal_real(S))
    if "terminal_angle" in goals:
        out.append(check_terminal_angle(S, goals["terminal_angle"]))
    if "terminal_moduli" in goals:
        out.append(check_terminal_moduli(S, goals["terminal_moduli"]))
    return out


def all_passed(certs) -> bool:
    return all(c.passed for c in certs if c.required)
