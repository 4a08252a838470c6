import numpy as np
import pytest

from cocyclepaths import (
    CocyclePath,
    GeneratorSpec,
    PeriodicCocycle,
    generate,
    push_moduli,
    realify,
    small_angle_2d,
    strong_stable_dims,
    strong_unstable_dims,
    verify_outcome,
)
from cocyclepaths.core import constant_cocycle
from cocyclepaths.errors import InvalidArgument
from cocyclepaths.paths import LinearBlend, RotationRamp, rotation2
from cocyclepaths.synthesis import SynthesisOutcome
from cocyclepaths.paths import path_radius
from cocyclepaths.verification import (
    Certificate,
    all_passed,
    check_eigen_invariance,
    check_flag_persistence,
    check_moduli_distinct,
    check_moduli_invariance,
    check_radius_bound,
    check_terminal_angle,
    check_terminal_moduli,
    check_terminal_real,
)

SADDLE = constant_cocycle(np.diag([0.5, 2.0]))


def crossing_path():
    return CocyclePath.from_segments([LinearBlend(SADDLE, np.diag([2.0, 0.5])[None])])


def outcome_for(path, goals):
    return SynthesisOutcome("manual", path, path_radius(path), (), goals, {})


def test_certificate_passed_iff_positive_margin():
    assert Certificate("x", 1e-300).passed
    assert not Certificate("x", 0.0).passed
    assert not Certificate("x", -1.0).passed
    assert not Certificate("x", float("nan")).passed


def test_persistence_constant_saddle():
    cert = check_flag_persistence(CocyclePath.constant(SADDLE), {1}, {1})
    assert cert.passed
    assert cert.margin == pytest.approx(0.5 - 1e-9, abs=1e-15)


def test_persistence_fails_on_crossing_path():
    cert = check_flag_persistence(crossing_path(), {1}, set())
    assert not cert.passed
    assert 0.0 < cert.details["worst_t"] < 1.0


def test_persistence_on_realify_output():
    c = generate(GeneratorSpec(2, 200, 2.0, "det_one_2d", seed=5))
    out = realify(c, 0.1)
    assert check_flag_persistence(out.path, strong_stable_dims(c), strong_unstable_dims(c)).passed


def test_persistence_empty_sets_pass():
    assert check_flag_persistence(crossing_path(), set(), set()).passed


def test_moduli_invariance_examples():
    assert check_moduli_invariance(CocyclePath.constant(SADDLE)).passed
    c = generate(GeneratorSpec(2, 200, 2.0, "det_one_2d", seed=5))
    assert check_moduli_invariance(realify(c, 0.1).path, 1e-7).passed
    pushed = push_moduli(constant_cocycle(np.diag([0.9 ** (1 / 300), 1.1 ** (1 / 300)]), 300), 0.1)
    assert not check_moduli_invariance(pushed.path).passed


def test_eigen_invariance_examples():
    assert check_eigen_invariance(CocyclePath.constant(SADDLE)).passed
    c = constant_cocycle(np.diag([0.99, 1.01]), 400)
    assert check_eigen_invariance(small_angle_2d(c, 0.1, 8).path, 1e-8).passed
    # rotating a complex pair moves the eigenvalues along the circle
    rot = constant_cocycle(rotation2(1.0), 3)
    path = CocyclePath.from_segments([RotationRamp.in_plane(rot, np.full(3, 0.05))])
    assert check_moduli_invariance(path).passed
    assert not check_eigen_invariance(path).passed


def test_radius_bound_examples():
    cert = check_radius_bound(CocyclePath.constant(SADDLE), 0.1)
    assert cert.passed and cert.margin == pytest.approx(0.1)
    c = PeriodicCocycle([[[1.0]]])
    ramp = CocyclePath.from_segments([LinearBlend(c, np.array([[[2.0]]]))])
    cert = check_radius_bound(ramp, 0.5)
    assert not cert.passed and cert.details["radius"] == pytest.approx(1.0)


def test_terminal_real_uses_discriminant():
    assert check_terminal_real(CocyclePath.constant(SADDLE)).passed
    cert = check_terminal_real(CocyclePath.constant(constant_cocycle(rotation2(0.3))))
    assert not cert.passed
    assert cert.details["discriminant"] == pytest.approx(4 * np.cos(0.3) ** 2 - 4)
    # a double eigenvalue perturbed at rounding level still counts as real
    J = np.array([[1.0, 1.0], [-1e-17, 1.0]])
    assert check_terminal_real(CocyclePath.constant(constant_cocycle(J))).passed


def test_terminal_angle_and_moduli():
    A = np.array([[0.01, 1000.0], [0.0, 100.0]])
    path = CocyclePath.constant(constant_cocycle(A))
    assert check_terminal_angle(path, 0.1).passed
    assert check_terminal_moduli(path, 0.1).passed
    assert not check_terminal_moduli(CocyclePath.constant(SADDLE), 0.1).passed
    bad = check_terminal_angle(CocyclePath.constant(constant_cocycle(rotation2(0.3))), 0.1)
    assert not bad.passed and "NotSaddle" in bad.details["error"]


def test_moduli_distinct():
    assert check_moduli_distinct(CocyclePath.constant(SADDLE)).passed
    assert not check_moduli_distinct(crossing_path()).passed


def test_certificates_monotone_in_sampling():
    path = crossing_path()
    for n in (3, 5, 7, 11):
        coarse = check_flag_persistence(path, {1}, set(), samples=n)
        fine = check_flag_persistence(path, {1}, set(), samples=2 * n)
        assert fine.margin <= coarse.margin
        if not coarse.passed:
            assert not fine.passed


def test_verify_outcome_empty_path():
    goals = {"dim": 2, "radius": 0.1, "I": [1], "J": [1], "moduli_tol": 1e-7, "eigen_tol": 1e-8}
    certs = verify_outcome(outcome_for(CocyclePath.constant(SADDLE), goals))
    assert len(certs) == 4 and all_passed(certs)


def test_verify_outcome_dim_mismatch():
    with pytest.raises(InvalidArgument):
        verify_outcome(outcome_for(CocyclePath.constant(SADDLE), {"dim": 3}))
    with pytest.raises(InvalidArgument):
        verify_outcome(outcome_for(CocyclePath.constant(SADDLE), {"I": [3]}))


def test_verify_outcome_is_idempotent():
    c = generate(GeneratorSpec(2, 200, 2.0, "det_one_2d", seed=7))
    out = realify(c, 0.1)
    a = [x.to_dict() for x in verify_outcome(out)]
    b = [x.to_dict() for x in verify_outcome(out)]
    assert a == b
    assert [x.to_dict() for x in out.certificates] == a


def test_optional_persistence_is_not_required():
    goals = {"I": [1], "persistence_required": False}
    certs = verify_outcome(outcome_for(crossing_path(), goals))
    assert not certs[0].passed and not certs[0].required
    assert all_passed(certs)
