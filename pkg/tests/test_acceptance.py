"""Exit-criteria suite.

Each test prints one ``criterion k: PASS/FAIL`` line with its headline numbers
and then asserts.  Outcomes built for one criterion are cached and reused by
the flag-persistence and serialization criteria.
"""
from functools import lru_cache

import numpy as np
import pytest
from scipy.linalg import block_diag
from scipy.stats import ortho_group

from cocyclepaths import (
    GeneratorSpec,
    PeriodicCocycle,
    build_glued,
    connection_size,
    dist_cocycle,
    generate,
    homothety_conjugate,
    is_N_dominated,
    min_angle,
    push_moduli,
    realify,
    realify_2d,
    size_inequality_check,
    small_angle_2d,
    spectrum_of,
    stable_unstable_splitting,
    strong_stable_membership,
)
from cocyclepaths.core import constant_cocycle, first_return, window_product
from cocyclepaths.errors import StillDominated
from cocyclepaths.paths import path_radius
from cocyclepaths.serialization import (
    cocycle_from_dict,
    cocycle_to_dict,
    dumps,
    glued_from_dict,
    glued_to_dict,
    loads,
    outcome_from_dict,
    outcome_to_dict,
)
from cocyclepaths.spectral import quotient_frame
from cocyclepaths.verification import PathSampler, check_flag_persistence, check_moduli_distinct, check_terminal_moduli

from conftest import nearby, random_linear, random_unit_vectors

pytestmark = pytest.mark.acceptance


def report(capsys, k, ok, detail):
    with capsys.disabled():
        print(f"\ncriterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")


def rel_disc(B):
    det = np.linalg.det(B)
    return float((np.trace(B) ** 2 - 4.0 * det) / abs(det))


# --- fixtures shared between criteria ---------------------------------------


def det_one(seed, p=200):
    return generate(GeneratorSpec(2, p, 2.0, "det_one_2d", seed=seed))


@lru_cache(maxsize=None)
def realify_2d_cases():
    out = []
    for seed in range(50):
        c = det_one(seed)
        out.append((c, realify_2d(c, 0.1)))
    return out


@lru_cache(maxsize=None)
def block_cases():
    """det-one elliptic block plus a real saddle block, interleaved for odd seeds."""
    out = []
    for seed in range(20):
        rot = det_one(1000 + seed, p=60)
        other = generate(GeneratorSpec(2, 60, 2.0, "saddle", seed=2000 + seed))
        maps = np.stack([block_diag(a, b) for a, b in zip(rot.maps, other.maps)])
        perm = np.array([0, 2, 1, 3]) if seed % 2 else np.arange(4)
        maps = maps[:, perm][:, :, perm]
        c = PeriodicCocycle(maps)
        out.append((c, other, realify(c, 0.1, seed=seed)))
    return out


@lru_cache(maxsize=None)
def push_cases():
    out = []
    for seed in range(50):
        c = generate(GeneratorSpec(2 + seed % 2, 500, 2.0, "saddle", seed=300 + seed))
        out.append((c, push_moduli(c, 0.1)))
    return out


@lru_cache(maxsize=None)
def small_angle_cases():
    p, delta = 400, 0.01
    cs = [constant_cocycle(np.diag([1 - delta, 1 + delta]), p)]
    for seed in range(30):
        spec = GeneratorSpec(2, p, 1.1, "prescribed_moduli", seed=500 + seed, moduli=[(1 - delta) ** p, (1 + delta) ** p])
        cs.append(generate(spec))
    return [(c, small_angle_2d(c, 0.1, 8)) for c in cs]


# --- 1. domination oracle -------------------------------------------------------


def test_criterion_1_domination_oracle(capsys):
    rng = np.random.default_rng(1)
    violations, dominated, worst_excess = 0, 0, -np.inf
    for k in range(200):
        d = int(rng.integers(2, 5))
        p = int(rng.integers(1, 9))
        N = int(rng.integers(1, 6))
        s = int(rng.integers(1, d))
        # per-step log moduli chosen so verdicts fall on both sides of 1/2
        logs = np.sort(np.concatenate([-rng.uniform(0.0, 0.4, s), rng.uniform(0.0, 0.4, d - s)])) * p
        c = generate(GeneratorSpec(d, p, 3.0, "prescribed_moduli", seed=k, moduli=list(np.exp(logs))))
        split = stable_unstable_splitting(c)
        rep = is_N_dominated(c, split, N)
        brute = 0.0
        for x in range(p):
            M = window_product(c, x, N)
            u = split.stable.frames[x] @ random_unit_vectors(rng, split.stable.dim_fiber, 10_000).T
            v = split.unstable.frames[x] @ random_unit_vectors(rng, split.unstable.dim_fiber, 10_000).T
            # every (u, v) combination of the two samples
            brute = max(brute, np.linalg.norm(M @ u, axis=0).max() / np.linalg.norm(M @ v, axis=0).min())
        excess = brute / rep.worst_ratio - 1.0
        worst_excess = max(worst_excess, excess)
        if excess > 1e-6 or (brute < 0.5) != rep.dominated:
            violations += 1
        dominated += rep.dominated
    ok = violations == 0
    report(capsys, 1, ok, f"violations {violations}/200, dominated {dominated}, max sampled excess {worst_excess:.2e}")
    assert ok


# --- 2. realification in dimension two -------------------------------------------


def test_criterion_2_realify_2d(capsys):
    worst_disc = worst_mod = worst_radius = 0.0
    for c, path in realify_2d_cases():
        worst_disc = max(worst_disc, abs(rel_disc(first_return(path.end))))
        S = PathSampler(path, 100)
        worst_mod = max(worst_mod, float(np.max(np.abs(S.moduli / S.moduli[0] - 1.0))))
        worst_radius = max(worst_radius, path_radius(path).radius)
    ok = worst_disc < 1e-9 and worst_mod < 1e-7 and worst_radius < 0.1
    report(capsys, 2, ok, f"|disc| {worst_disc:.2e}, moduli deviation {worst_mod:.2e}, radius {worst_radius:.4f}")
    assert ok


# --- 3. block isolation ---------------------------------------------------------


def test_criterion_3_block_isolation(capsys):
    worst, passed = 0.0, 0
    for c, other, out in block_cases():
        passed += out.passed
        target = spectrum_of(other).eigenvalues
        S = PathSampler(out.path, 100)
        for ev in S.eigenvalues:
            gap = np.abs(ev[None, :] - target[:, None]).min(axis=1) / np.abs(target)
            worst = max(worst, float(gap.max()))
    ok = worst < 1e-10 and passed == 20
    report(capsys, 3, ok, f"outcomes passed {passed}/20, other-block eigenvalue deviation {worst:.2e}")
    assert ok


# --- 4. moduli push -------------------------------------------------------------


def test_criterion_4_push_moduli(capsys):
    term = distinct = np.inf
    radius = 0.0
    for c, out in push_cases():
        term = min(term, check_terminal_moduli(out.path, 0.1).margin)
        distinct = min(distinct, check_moduli_distinct(out.path, 100).margin)
        radius = max(radius, out.radius_report.radius)
    ok = term > 0 and distinct > 0 and radius < 0.1
    report(capsys, 4, ok, f"terminal margin {term:.3g}, distinct margin {distinct:.3g}, radius {radius:.4f}")
    assert ok


# --- 5. small angle -------------------------------------------------------------


def test_criterion_5_small_angle(capsys):
    angle = ev_dev = radius = 0.0
    for c, out in small_angle_cases():
        angle = max(angle, stable_unstable_splitting(out.end).min_angle())
        e0, e1 = spectrum_of(c).eigenvalues, spectrum_of(out.end).eigenvalues
        ev_dev = max(ev_dev, float(np.max(np.abs(e1 - e0) / np.abs(e0))))
        radius = max(radius, out.radius_report.radius)
    try:
        small_angle_2d(constant_cocycle(np.diag([0.25, 4.0]), 10), 0.1, 8)
        control = False
    except StillDominated:
        control = True
    ok = angle < 0.1 and ev_dev < 1e-8 and control
    report(
        capsys, 5, ok,
        f"terminal angle {angle:.4f}, eigenvalue deviation {ev_dev:.2e}, radius {radius:.4f}, control raised {control}",
    )
    assert ok


# --- 6. flag persistence along realify outcomes ---------------------------------


def test_criterion_6_flag_persistence(capsys):
    from cocyclepaths import strong_stable_dims, strong_unstable_dims

    paths = [p for _, p in realify_2d_cases()] + [o.path for _, _, o in block_cases()]
    margin, nonvacuous = np.inf, 0
    for path in paths:
        I, J = strong_stable_dims(path.start), strong_unstable_dims(path.start)
        nonvacuous += bool(I or J)
        margin = min(margin, check_flag_persistence(path, I, J, 100).margin)
    ok = margin > 0
    report(capsys, 6, ok, f"{len(paths)} paths ({nonvacuous} with nonempty I or J), worst margin {margin:.3g}")
    assert ok


# --- 7. quotient-angle inequality -------------------------------------------------


def test_criterion_7_quotient_angle(capsys):
    rng = np.random.default_rng(7)
    worst = -np.inf
    for _ in range(100):
        d = int(rng.integers(3, 6))
        k_delta = int(rng.integers(2, d))
        k_gamma = int(rng.integers(1, k_delta))
        k_lambda = int(rng.integers(1, d - k_gamma + 1))
        Q = ortho_group.rvs(d, random_state=rng)
        Delta = Q[:, :k_delta] @ rng.normal(size=(k_delta, k_delta))
        Gamma = Q[:, :k_delta] @ rng.normal(size=(k_delta, k_gamma))
        Lam = rng.normal(size=(d, k_lambda))
        ambient = min_angle(Delta, Lam)
        quotient = min_angle(quotient_frame(Gamma, Delta), quotient_frame(Gamma, Lam))
        worst = max(worst, ambient - quotient)
    ok = worst <= 1e-9
    report(capsys, 7, ok, f"max of min_angle(D,L) - min_angle(D/G,L/G) = {worst:.3g}")
    assert ok


# --- 8. connection lab -----------------------------------------------------------


def test_criterion_8_connection_lab(capsys):
    rng = np.random.default_rng(8)

    # (a) Jacobian against central differences
    fd_err = 0.0
    for k in range(10):
        d = 2 + k % 3
        A = random_linear(rng, d)
        g = build_glued(A, nearby(rng, A, 0.02), 0.5, 1.0)
        X = random_unit_vectors(rng, d, 100) * rng.uniform(0.05, 1.5, 100)[:, None]
        J = g.jacobian(X)
        h = 1e-6
        FD = np.stack([(g(X + h * e) - g(X - h * e)) / (2 * h) for e in np.eye(d)], axis=2)
        fd_err = max(fd_err, float(np.max(np.linalg.norm(J - FD, axis=(1, 2)) / np.linalg.norm(J, axis=(1, 2)))))
    ok_a = fd_err < 1e-6

    # (b) homothety conjugation does not increase size
    growth = -np.inf
    for k in range(20):
        d = 2 + k % 3
        A = random_linear(rng, d)
        g = build_glued(A, nearby(rng, A, 0.02), 0.5, 1.0)
        s = connection_size(g).size
        for j in range(1, 7):
            growth = max(growth, connection_size(homothety_conjugate(g, 2.0**-j)).size - s)
    ok_b = growth <= 1e-9

    # (c) size inequalities for concatenations
    ineq = np.inf
    for k in range(20):
        d = 2 + k % 2
        A = random_linear(rng, d)
        B = nearby(rng, A, 0.02)
        C = nearby(rng, B, 0.02)
        cert = size_inequality_check(build_glued(A, B, 0.5, 1.0), build_glued(B, C, 0.5, 1.0), tol=1e-6)
        ineq = min(ineq, cert.margin)
    ok_c = ineq > 0

    # (d) points on the outer strong stable line stay strong stable when the
    # inner map keeps that line
    members = 0
    for k in range(100):
        d = 2 + k % 2
        P = random_linear(rng, d)
        mod = np.sort(rng.uniform(0.2, 0.45, 1))
        rest = rng.uniform(0.6, 2.5, d - 1) * rng.choice([-1, 1], d - 1)
        A = P @ np.diag(np.concatenate([mod, rest])) @ np.linalg.inv(P)
        E = rng.normal(size=(d, d))
        E[1:, 0] = 0.0  # in eigen-coordinates the stable axis is kept
        E = P @ E @ np.linalg.inv(P)
        B = A + 0.01 * E / np.linalg.norm(E, 2)
        g = build_glued(A, B, 0.5, 1.0)
        u = P[:, 0] / np.linalg.norm(P[:, 0])
        x = rng.choice([-1, 1]) * rng.uniform(2.0, 10.0) * u
        lo = mod[0] * 1.05
        hi = min(0.55, np.abs(rest).min() * 0.95)
        members += strong_stable_membership(g, x, 1, (lo, hi))
    ok_d = members == 100

    ok = ok_a and ok_b and ok_c and ok_d
    report(
        capsys, 8, ok,
        f"(a) FD rel err {fd_err:.2e}; (b) max growth {growth:.2e}; (c) margin {ineq:.3g}; (d) members {members}/100",
    )
    assert ok


# --- 9. metric and serialization -------------------------------------------------


def _round_trip_exact(doc, parse, dump):
    text = dumps(doc)
    return dumps(dump(parse(loads(text)))) == text


def test_criterion_9_metric_and_serialization(capsys):
    rng = np.random.default_rng(9)
    worst = -np.inf
    for _ in range(500):
        d, p = int(rng.integers(1, 5)), int(rng.integers(1, 6))
        a, b, c = (
            PeriodicCocycle(np.eye(d)[None] + 0.5 * rng.normal(size=(p, d, d)) / np.sqrt(d)) for _ in range(3)
        )
        worst = max(worst, dist_cocycle(a, c) - dist_cocycle(a, b) - dist_cocycle(b, c))
    ok_metric = worst < 1e-12

    fixtures, exact = 0, 0
    cocycles = [c for c, _ in realify_2d_cases()] + [c for c, _, _ in block_cases()]
    cocycles += [c for c, _ in push_cases()] + [c for c, _ in small_angle_cases()]
    for c in cocycles:
        fixtures += 1
        doc = cocycle_to_dict(c)
        back = cocycle_from_dict(loads(dumps(doc)))
        exact += _round_trip_exact(doc, cocycle_from_dict, cocycle_to_dict) and back.maps.tobytes() == c.maps.tobytes()
    outcomes = [o for _, _, o in block_cases()] + [o for _, o in push_cases()] + [o for _, o in small_angle_cases()]
    ts = np.linspace(0.0, 1.0, 17)
    for o in outcomes:
        fixtures += 1
        back = outcome_from_dict(loads(dumps(outcome_to_dict(o))))
        same_maps = back.path.maps_at(ts).tobytes() == o.path.maps_at(ts).tobytes()
        exact += _round_trip_exact(outcome_to_dict(o), outcome_from_dict, outcome_to_dict) and same_maps
    for k in range(20):
        A = random_linear(rng, 2 + k % 3)
        g = build_glued(A, nearby(rng, A, 0.02), 0.5, 1.0)
        fixtures += 1
        exact += _round_trip_exact(glued_to_dict(g), glued_from_dict, glued_to_dict) and glued_from_dict(
            loads(dumps(glued_to_dict(g)))
        ) == g
    ok = ok_metric and exact == fixtures
    report(capsys, 9, ok, f"triangle violation {worst:.2e}; bit-exact round trips {exact}/{fixtures}")
    assert ok
