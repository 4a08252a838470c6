import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cocyclepaths import (
    CocyclePath,
    GeneratorSpec,
    PeriodicCocycle,
    concat_paths,
    dist_cocycle,
    generate,
    path_radius,
    realify_2d,
    reverse_path,
    sample_path,
)
from cocyclepaths.core import constant_cocycle, first_return
from cocyclepaths.errors import EndpointMismatch, InvalidArgument, OutOfRange
from cocyclepaths.paths import (
    BlockScaleRamp,
    Constant,
    LinearBlend,
    Reversed,
    RotationRamp,
    plane_rotation,
    rotation2,
    saddle_lines_2d,
    sample_times,
)

from conftest import random_cocycle


def test_plane_rotation_matches_rotation2():
    R = plane_rotation(np.array([1.0, 0.0]), np.array([0.0, 1.0]), 0.3)
    assert np.allclose(R, rotation2(0.3), atol=1e-15)


def test_plane_rotation_fixes_complement():
    u, v = np.eye(4)[:, 1], np.eye(4)[:, 3]
    R = plane_rotation(u, v, 0.7)
    assert np.allclose(R @ np.eye(4)[:, 0], np.eye(4)[:, 0])
    assert np.allclose(R.T @ R, np.eye(4), atol=1e-15)


def test_start_and_constant_segment():
    c = random_cocycle(1, 2, 3)
    path = CocyclePath.constant(c)
    assert sample_path(path, 0.0) == c
    for t in (0.25, 0.5, 1.0):
        assert np.array_equal(sample_path(path, t).maps, c.maps)
    assert path.is_trivial


def test_rotation_ramp_half_time_matches_hand_construction():
    c = random_cocycle(2, 2, 4)
    angles = np.array([0.1, -0.2, 0.05, 0.3])
    path = CocyclePath.from_segments([RotationRamp.in_plane(c, angles)])
    half = sample_path(path, 0.5)
    by_hand = np.stack([rotation2(a / 2) @ A for a, A in zip(angles, c.maps)])
    assert np.allclose(half.maps, by_hand, atol=1e-15)


def test_sample_path_out_of_range():
    path = CocyclePath.constant(random_cocycle(1, 2, 2))
    with pytest.raises(OutOfRange):
        sample_path(path, 1.5)


def test_radius_constant_path_is_zero():
    assert path_radius(CocyclePath.constant(random_cocycle(3, 3, 2))).radius == 0.0


def test_radius_scalar_ramp():
    c = PeriodicCocycle([[[1.0]]])
    path = CocyclePath.from_segments([LinearBlend(c, np.array([[[2.0]]]))])
    rep = path_radius(path)
    # max(|t|, |1/(1+t) - 1|) is maximal at t = 1
    assert rep.radius == pytest.approx(1.0, abs=1e-15)
    assert rep.argmax_t == 1.0 and rep.argmax_n == 0


def test_radius_realify_path_is_grid_stable():
    c = generate(GeneratorSpec(2, 200, 2.0, "det_one_2d", seed=5))
    path = realify_2d(c, 0.1)
    coarse = path_radius(path, 257).radius
    fine = path_radius(path, 2561).radius
    assert coarse < 0.1
    assert fine >= coarse - 1e-15
    assert fine - coarse < 1e-3


def test_radius_refinement_never_decreases():
    c = random_cocycle(9, 2, 3)
    target = c.maps @ rotation2(0.4)
    path = CocyclePath.from_segments([LinearBlend(c, target)])
    r = [path_radius(path, 2**k + 1).radius for k in range(1, 7)]
    assert all(b >= a for a, b in zip(r, r[1:]))


def test_sample_times_nested_and_include_breaks():
    c = random_cocycle(1, 2, 2)
    seg1 = LinearBlend(c, c.maps * 1.1)
    seg2 = LinearBlend(seg1.end, seg1.end.maps * 1.1)
    seg3 = Constant(seg2.end)
    path = CocyclePath.from_segments([seg1, seg2, seg3])
    t10, t20 = sample_times(path, 10), sample_times(path, 20)
    assert set(path.breakpoints) <= set(t10)
    assert set(t10) <= set(t20)


def test_block_scale_multiplies_block_moduli():
    A = np.array([[0.5, 1.0], [0.0, 3.0]])
    c = constant_cocycle(A, 4)
    frames = np.broadcast_to(np.eye(2)[:, :1], (4, 2, 1))
    seg = BlockScaleRamp(c, frames, np.log(0.5) / 4)
    ev = np.sort(np.abs(np.linalg.eigvals(first_return(seg.end))))
    assert np.allclose(ev, [0.5**4 * 0.5, 3.0**4], rtol=1e-12)


def test_from_segments_rejects_gap():
    c = random_cocycle(1, 2, 2)
    other = random_cocycle(2, 2, 2)
    with pytest.raises(EndpointMismatch):
        CocyclePath.from_segments([Constant(c), Constant(other)])


def test_path_must_tile_unit_interval():
    c = random_cocycle(1, 2, 2)
    from cocyclepaths.paths import Piece

    with pytest.raises(InvalidArgument):
        CocyclePath(c, (Piece(0.0, 0.5, Constant(c)),))


def test_concat_with_trivial_path_is_identity():
    c = random_cocycle(4, 2, 3)
    p = CocyclePath.from_segments([LinearBlend(c, c.maps * 1.05)])
    assert concat_paths(CocyclePath.constant(c), p) is p
    assert concat_paths(p, CocyclePath.constant(p.end)) is p


def test_concat_with_reverse_returns_home():
    c = random_cocycle(4, 2, 3)
    p = CocyclePath.from_segments([RotationRamp.in_plane(c, np.full(3, 0.2))])
    loop = concat_paths(p, reverse_path(p))
    assert loop.end.max_entry_diff(c) < 1e-14
    mid = sample_path(loop, 0.5)
    assert mid.max_entry_diff(p.end) < 1e-14


def test_concat_mismatch_raises():
    a = CocyclePath.from_segments([LinearBlend(random_cocycle(1, 2, 2), random_cocycle(2, 2, 2).maps)])
    b = CocyclePath.constant(random_cocycle(3, 2, 2))
    with pytest.raises(EndpointMismatch):
        concat_paths(a, b)


def test_reversed_segment_swaps_ends():
    c = random_cocycle(5, 2, 2)
    seg = LinearBlend(c, c.maps * 1.2)
    rev = Reversed(seg)
    assert np.allclose(rev.evaluate([0.0])[0], seg.end.maps)
    assert np.allclose(rev.evaluate([1.0])[0], c.maps)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 3), st.integers(1, 4), st.integers(0, 2**31 - 1))
def test_concatenated_radius_is_subadditive(d, p, seed):
    a0 = random_cocycle(seed, d, p, spread=0.3)
    rng = np.random.default_rng(seed)
    a = CocyclePath.from_segments([LinearBlend(a0, a0.maps + 0.05 * rng.normal(size=a0.maps.shape))])
    b = CocyclePath.from_segments([LinearBlend(a.end, a.end.maps + 0.05 * rng.normal(size=a0.maps.shape))])
    total = path_radius(concat_paths(a, b), 65).radius
    bound = path_radius(a, 65).radius + path_radius(b, 65).radius + dist_cocycle(a.start, b.start)
    assert total <= bound + 1e-12


def test_saddle_lines_are_invariant():
    c = generate(GeneratorSpec(2, 30, 2.0, "saddle", seed=3))
    mu, lines, ok = saddle_lines_2d(c.maps[None])
    assert ok[0]
    assert np.allclose(np.abs(mu[0]), np.sort(np.abs(np.linalg.eigvals(first_return(c)))), rtol=1e-10)
    for n in range(c.period):
        for k in range(2):
            img = c.maps[n] @ lines[0, n, :, k]
            nxt = lines[0, (n + 1) % c.period, :, k]
            cross = img[0] * nxt[1] - img[1] * nxt[0]
            assert abs(cross) <= 1e-9 * np.linalg.norm(img)
