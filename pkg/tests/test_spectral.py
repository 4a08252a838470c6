import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import ortho_group

from cocyclepaths import (
    GeneratorSpec,
    generate,
    is_saddle,
    min_angle,
    spectrum_of,
    stable_unstable_splitting,
    strong_stable_dims,
    strong_unstable_dims,
)
from cocyclepaths.core import constant_cocycle, first_return, inverse_cocycle, repeat_cocycle
from cocyclepaths.errors import InvalidArgument, NoStrongDirection, NotSaddle
from cocyclepaths.paths import rotation2
from cocyclepaths.spectral import (
    lyapunov_exponents,
    quotient_frame,
    sort_eigenvalues,
    strong_dims_from_moduli,
    strong_stable_bundle,
    strong_stable_space,
    strong_unstable_space,
)

from conftest import random_cocycle, random_unit_vectors

DIAG3 = constant_cocycle(np.diag([0.1, 0.5, 2.0]))


def same_span(E, F, tol=1e-10):
    return min_angle(E, F) < tol and np.linalg.matrix_rank(np.hstack([E, F]), tol=1e-8) == E.shape[1]


def test_spectrum_diagonal_and_rotation():
    assert np.allclose(spectrum_of(DIAG3).moduli, [0.1, 0.5, 2.0])
    sp = spectrum_of(constant_cocycle(rotation2(np.pi / 3)))
    assert np.allclose(sp.moduli, [1.0, 1.0])
    assert np.allclose(sp.eigenvalues, [np.exp(-1j * np.pi / 3), np.exp(1j * np.pi / 3)])
    assert not sp.all_real


def test_spectrum_is_base_point_invariant():
    c = random_cocycle(9, 4, 6)
    m0 = spectrum_of(c, 0).moduli
    m3 = spectrum_of(c, 3).moduli
    assert np.allclose(m0, m3, rtol=1e-8)


def test_sort_tie_break():
    ev = sort_eigenvalues([2.0, -1.0, 1.0, 1j])
    assert list(ev) == [-1.0, 1j, 1.0, 2.0]


def test_strong_stable_dims_examples():
    assert strong_stable_dims(DIAG3) == {1, 2}
    assert strong_stable_dims(constant_cocycle(np.diag([0.5, 0.5]))) == {2}
    assert strong_stable_dims(constant_cocycle(np.eye(3))) == set()


def test_strong_unstable_dims_examples():
    assert strong_unstable_dims(DIAG3) == {1}
    assert strong_unstable_dims(constant_cocycle(np.eye(2))) == set()


def test_unstable_dims_are_stable_dims_of_inverse():
    c = generate(GeneratorSpec(3, 6, 2.0, "saddle", seed=21))
    assert strong_unstable_dims(c) == strong_stable_dims(inverse_cocycle(c))


def test_strong_dims_relative_tolerance():
    assert strong_dims_from_moduli([0.5, 0.5 * (1 + 1e-12)]) == {2}
    assert strong_dims_from_moduli([0.5, 0.6]) == {1, 2}


def test_strong_stable_space_examples():
    F = strong_stable_space(DIAG3, 2)
    assert same_span(F, np.eye(3)[:, :2])
    c = constant_cocycle(np.array([[0.5, 1.0], [0.0, 2.0]]))
    assert same_span(strong_stable_space(c, 1), np.array([[1.0], [0.0]]))


def test_strong_stable_space_invariance_and_spectrum():
    c = generate(GeneratorSpec(4, 5, 2.0, "saddle", seed=13))
    B = first_return(c)
    ev = spectrum_of(c).eigenvalues
    for i in sorted(strong_stable_dims(c)):
        F = strong_stable_space(c, i)
        R = F.T @ B @ F
        assert np.linalg.norm(B @ F - F @ R, 2) < 1e-8 * np.linalg.norm(B, 2)
        sub = sort_eigenvalues(np.linalg.eigvals(R))
        assert np.allclose(sub, ev[:i], rtol=1e-8)


def test_strong_stable_frames_are_nested():
    c = generate(GeneratorSpec(4, 7, 2.0, "prescribed_moduli", seed=2, moduli=[0.1, 0.3, 0.6, 5.0]))
    I = sorted(strong_stable_dims(c))
    assert I == [1, 2, 3]
    for base in (0, 3):
        frames = {i: strong_stable_space(c, i, base) for i in I}
        for a, b in zip(I, I[1:]):
            resid = frames[a] - frames[b] @ (frames[b].T @ frames[a])
            assert np.linalg.norm(resid, 2) < 1e-8


def test_strong_stable_space_errors():
    with pytest.raises(NoStrongDirection):
        strong_stable_space(DIAG3, 3)
    with pytest.raises(NoStrongDirection):
        strong_unstable_space(DIAG3, 2)


def test_is_saddle_examples():
    assert is_saddle(constant_cocycle(np.diag([0.5, 2.0])))
    assert not is_saddle(constant_cocycle(rotation2(0.4)))
    assert not is_saddle(constant_cocycle(np.diag([0.5, 1.0 / 3.0])))


def test_splitting_examples():
    s = stable_unstable_splitting(constant_cocycle(np.diag([0.5, 2.0])))
    assert same_span(s.stable.frames[0], np.eye(2)[:, :1])
    assert same_span(s.unstable.frames[0], np.eye(2)[:, 1:])
    s = stable_unstable_splitting(constant_cocycle(np.array([[0.5, 1.0], [0.0, 2.0]])))
    assert same_span(s.stable.frames[0], np.array([[1.0], [0.0]]))
    # (B - 2I) v = 0 gives v = (1, 3/2)
    assert same_span(s.unstable.frames[0], np.array([[1.0], [1.5]]))


def test_splitting_of_random_saddle_is_invariant():
    c = generate(GeneratorSpec(3, 8, 2.0, "saddle", seed=33))
    s = stable_unstable_splitting(c)
    assert s.stable.residual < 1e-7 and s.unstable.residual < 1e-7
    assert s.index == int(np.sum(spectrum_of(c).moduli < 1))


def test_splitting_requires_saddle():
    with pytest.raises(NotSaddle):
        stable_unstable_splitting(constant_cocycle(rotation2(0.3)))


def test_saddle_index_matches_strong_dims():
    for seed in range(5):
        c = generate(GeneratorSpec(3, 5, 2.0, "saddle", seed=seed))
        i_s = int(np.sum(spectrum_of(c).moduli < 1))
        assert max(strong_stable_dims(c)) == i_s
        assert max(strong_unstable_dims(c)) == 3 - i_s


def test_min_angle_examples():
    e1, e2 = np.array([1.0, 0.0]), np.array([0.0, 1.0])
    assert min_angle(e1, e2) == pytest.approx(np.pi / 2, abs=1e-15)
    assert min_angle(e1, np.array([1.0, 1.0]) / np.sqrt(2)) == pytest.approx(np.pi / 4, abs=1e-15)


def test_min_angle_small_angles_are_accurate():
    for a in (1e-3, 1e-7, 1e-11):
        assert min_angle([1.0, 0.0], [np.cos(a), np.sin(a)]) == pytest.approx(a, rel=1e-6)


def test_min_angle_brute_force_sphere_sampling():
    rng = np.random.default_rng(0)
    E, F = rng.normal(size=(5, 2)), rng.normal(size=(5, 2))
    QE, _ = np.linalg.qr(E)
    QF, _ = np.linalg.qr(F)
    u = QE @ random_unit_vectors(rng, 2, 10_000).T
    v = QF @ random_unit_vectors(rng, 2, 10_000).T
    # best v for each sampled u, and best u for each sampled v
    cu = np.linalg.norm(QF.T @ u, axis=0)
    cv = np.linalg.norm(QE.T @ v, axis=0)
    brute = np.arccos(min(1.0, max(cu.max(), cv.max())))
    assert abs(min_angle(E, F) - brute) < 1e-2
    assert min_angle(E, F) <= brute + 1e-12


def test_min_angle_rejects_zero_space():
    with pytest.raises(InvalidArgument):
        min_angle(np.zeros(3), np.ones(3))


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 5), st.integers(0, 2**31 - 1))
def test_min_angle_symmetric_and_orthogonally_invariant(d, seed):
    rng = np.random.default_rng(seed)
    k1, k2 = rng.integers(1, d, size=2)
    E, F = rng.normal(size=(d, k1)), rng.normal(size=(d, k2))
    Q = ortho_group.rvs(d, random_state=rng)
    a = min_angle(E, F)
    assert abs(a - min_angle(F, E)) < 1e-10
    assert abs(a - min_angle(Q @ E, Q @ F)) < 1e-10


@settings(max_examples=100, deadline=None)
@given(st.integers(3, 5), st.integers(0, 2**31 - 1))
def test_quotient_angle_inequality(d, seed):
    rng = np.random.default_rng(seed)
    g = int(rng.integers(1, d - 1))
    Gamma = rng.normal(size=(d, g))
    Delta = np.hstack([Gamma, rng.normal(size=(d, int(rng.integers(1, d - g))))])
    Lam = rng.normal(size=(d, int(rng.integers(1, d - g + 1))))
    lhs = min_angle(Delta, Lam)
    rhs = min_angle(quotient_frame(Gamma, Delta), quotient_frame(Gamma, Lam))
    assert lhs <= rhs + 1e-9


def test_quotient_angle_inequality_can_be_strict():
    Gamma = np.array([[1.0], [0.0], [0.0]])
    Delta = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]])
    Lam = np.array([[1.0], [0.0], [1.0]])
    assert min_angle(Delta, Lam) == pytest.approx(np.pi / 4)
    assert min_angle(quotient_frame(Gamma, Delta), quotient_frame(Gamma, Lam)) == pytest.approx(np.pi / 2)


def test_lyapunov_examples():
    assert np.allclose(lyapunov_exponents(constant_cocycle(np.eye(3), 2)), 0.0)
    c = constant_cocycle(np.diag([0.5, 2.0]), 4)
    assert np.allclose(lyapunov_exponents(c), [-np.log(2), np.log(2)], atol=1e-14)


def test_lyapunov_power_consistency():
    c = random_cocycle(2, 3, 5)
    assert np.allclose(lyapunov_exponents(c), lyapunov_exponents(repeat_cocycle(c, 2)), atol=1e-9)


def test_strong_stable_bundle_is_invariant_along_orbit():
    c = generate(GeneratorSpec(3, 40, 2.0, "saddle", seed=4))
    sb = strong_stable_bundle(c, 1)
    assert sb.invariant
    for n in range(c.period):
        img = c.maps[n] @ sb.frames[n]
        assert min_angle(img, sb.frames[(n + 1) % c.period]) < 1e-8
