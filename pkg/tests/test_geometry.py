import math

import numpy as np
import pytest

import oracles
from tacpeg.geometry import (ClearanceSpec, PegShape, PoseError,
                             RejectionCapError, SHAPE_KINDS,
                             allowable_deviation, contact_state, hole_polygon,
                             is_insertable, peg_polygon, sample_pose_error)

SQ25 = PegShape("square", 25.0)
C2 = ClearanceSpec(2.0)


def test_square_peg_vertices():
    poly = peg_polygon(SQ25)
    assert len(poly) == 4
    assert sorted(map(tuple, np.abs(poly))) == [(12.5, 12.5)] * 4


def test_round_peg_is_64_gon_at_fixed_radius():
    poly = peg_polygon(PegShape("round", 20.0))
    assert len(poly) == 64
    radii = np.hypot(poly[:, 0], poly[:, 1])
    assert np.max(np.abs(radii - 10.0)) < 1e-12


def test_triangle_centroid_at_origin():
    poly = peg_polygon(PegShape("triangle", 30.0))
    assert len(poly) == 3
    assert np.max(np.abs(poly.mean(axis=0))) < 1e-9


def test_point_symmetric_shapes_negate_exactly():
    for kind in ("square", "round", "hexagon"):
        poly = peg_polygon(PegShape(kind, 25.0))
        n = len(poly)
        assert np.array_equal(poly[n // 2:], -poly[:n // 2])


def test_polygons_are_ccw_and_convex():
    for kind in SHAPE_KINDS:
        for poly in (peg_polygon(PegShape(kind, 25.0)),
                     hole_polygon(PegShape(kind, 25.0), C2)):
            nxt = np.roll(poly, -1, axis=0)
            nxt2 = np.roll(poly, -2, axis=0)
            cross = ((nxt[:, 0] - poly[:, 0]) * (nxt2[:, 1] - nxt[:, 1])
                     - (nxt[:, 1] - poly[:, 1]) * (nxt2[:, 0] - nxt[:, 0]))
            assert np.all(cross > 0)


def test_square_hole_side_is_peg_side_plus_clearance():
    hp = hole_polygon(SQ25, C2)
    assert hp[:, 0].max() - hp[:, 0].min() == pytest.approx(27.0, abs=1e-12)
    assert hp[:, 1].max() - hp[:, 1].min() == pytest.approx(27.0, abs=1e-12)


def test_hexagon_hole_across_flats_grows_by_clearance():
    hp = hole_polygon(PegShape("hexagon", 25.0), C2)
    assert hp[:, 1].max() - hp[:, 1].min() == pytest.approx(27.0, abs=1e-9)


def test_hole_approaches_peg_as_clearance_vanishes():
    for kind in SHAPE_KINDS:
        shape = PegShape(kind, 25.0)
        pp = peg_polygon(shape)
        hp = hole_polygon(shape, ClearanceSpec(1e-10))
        assert np.max(np.abs(hp - pp)) < 1e-9


def test_insertable_at_half_clearance_boundary():
    assert is_insertable(SQ25, C2, PoseError(0.0, 0.0, 0.0))
    assert is_insertable(SQ25, C2, PoseError(1.0, 0.0, 0.0))
    assert not is_insertable(SQ25, C2, PoseError(1.2, 0.0, 0.0))
    assert is_insertable(SQ25, C2, PoseError(1.0 + 1e-10, 0.0, 0.0))
    assert not is_insertable(SQ25, C2, PoseError(1.0 + 1e-6, 0.0, 0.0))


def test_contact_translation_case():
    ci = contact_state(SQ25, C2, PoseError(2.0, 0.0, 0.0))
    assert ci.in_contact
    assert ci.penetration_mm == pytest.approx(1.0, abs=0.05)
    assert ci.reaction_x == pytest.approx(-1.0, abs=1e-9)
    assert ci.reaction_y == pytest.approx(0.0, abs=1e-9)
    assert ci.reaction_rz == 0.0


def test_contact_rotation_overflow_sets_rotational_reaction():
    assert contact_state(SQ25, C2, PoseError(0.0, 0.0, 30.0)).reaction_rz == -1.0
    assert contact_state(SQ25, C2, PoseError(0.0, 0.0, -30.0)).reaction_rz == 1.0


def test_contact_insertable_pose_reports_no_contact():
    ci = contact_state(SQ25, C2, PoseError(0.5, 0.0, 0.0))
    assert not ci.in_contact
    assert (ci.penetration_mm, ci.reaction_x, ci.reaction_y, ci.reaction_rz) \
        == (0.0, 0.0, 0.0, 0.0)


def test_contact_reaction_points_to_nearly_feasible_pose():
    rng = np.random.default_rng(5)
    checked = 0
    for _ in range(300):
        kind = SHAPE_KINDS[int(rng.integers(len(SHAPE_KINDS)))]
        shape = PegShape(kind, 25.0)
        c = ClearanceSpec(float(rng.choice([1.0, 1.6, 2.0])))
        e = PoseError(float(rng.uniform(-3, 3)), float(rng.uniform(-3, 3)),
                      float(rng.uniform(-3, 3)))
        ci = contact_state(shape, c, e)
        if not ci.in_contact or ci.reaction_rz != 0.0:
            continue
        moved = PoseError(e.e_x + ci.reaction_x * ci.penetration_mm,
                          e.e_y + ci.reaction_y * ci.penetration_mm, e.e_rz)
        # landing point is a grid point of the feasible set computed at a
        # rotation quantized to 0.05 deg; the sweep of that quantization at
        # the polygon radius bounds the residual margin
        assert oracles.boundary_margin(shape, c, moved) <= 0.01
        checked += 1
    assert checked > 50


def test_insertability_agrees_with_boundary_sampling():
    rng = np.random.default_rng(11)
    band = 2e-3
    for _ in range(2000):
        kind = SHAPE_KINDS[int(rng.integers(len(SHAPE_KINDS)))]
        shape = PegShape(kind, 25.0)
        c = ClearanceSpec(float(rng.uniform(0.5, 3.0)))
        e = PoseError(float(rng.uniform(-3, 3)), float(rng.uniform(-3, 3)),
                      float(rng.uniform(-6, 6)))
        margin = oracles.boundary_margin(shape, c, e)
        if abs(margin) <= band:
            continue
        assert is_insertable(shape, c, e) == oracles.sampled_insertable(shape, c, e)


def test_feasible_x_slice_is_an_interval():
    rng = np.random.default_rng(13)
    xs = np.linspace(-3.0, 3.0, 121)
    for kind in SHAPE_KINDS:
        shape = PegShape(kind, 25.0)
        for _ in range(20):
            y = float(rng.uniform(-2, 2))
            rz = float(rng.uniform(-3, 3))
            flags = [is_insertable(shape, C2, PoseError(x, y, rz)) for x in xs]
            idx = [i for i, f in enumerate(flags) if f]
            if idx:
                assert idx == list(range(idx[0], idx[-1] + 1))


def test_shrinking_x_keeps_insertable_for_point_symmetric_shapes():
    rng = np.random.default_rng(17)
    for kind in ("square", "round", "hexagon"):
        shape = PegShape(kind, 25.0)
        for _ in range(200):
            e = PoseError(float(rng.uniform(-1.5, 1.5)),
                          float(rng.uniform(-1.5, 1.5)),
                          float(rng.uniform(-3, 3)))
            if not is_insertable(shape, C2, e):
                continue
            x2 = e.e_x * float(rng.uniform(0, 1))
            assert is_insertable(shape, C2, PoseError(x2, e.e_y, e.e_rz))


def test_triangle_feasible_slice_can_exclude_zero():
    # the triangular cross-section is not point-symmetric: at y=1.6 the
    # feasible x-interval sits entirely left of the axis
    tri = PegShape("triangle", 25.0)
    assert is_insertable(tri, C2, PoseError(-0.8, 1.6, 0.0))
    assert not is_insertable(tri, C2, PoseError(-0.2, 1.6, 0.0))


def test_insertability_symmetric_under_point_reflection():
    rng = np.random.default_rng(19)
    for kind in ("square", "hexagon"):
        shape = PegShape(kind, 25.0)
        for _ in range(300):
            e = PoseError(float(rng.uniform(-2, 2)), float(rng.uniform(-2, 2)),
                          float(rng.uniform(-5, 5)))
            assert is_insertable(shape, C2, e) == \
                is_insertable(shape, C2, PoseError(-e.e_x, -e.e_y, e.e_rz))


def test_square_allowances_equal_half_clearance():
    for c in (1.0, 1.6, 2.0):
        spec = ClearanceSpec(c)
        for axis in ("x+", "x-", "y+", "y-"):
            assert allowable_deviation(SQ25, spec, axis) == \
                pytest.approx(c / 2, abs=1e-3)


def test_triangle_allowances_reproduce_axis_asymmetry():
    tri = PegShape("triangle", 30.0)
    x_extent = (allowable_deviation(tri, C2, "x+")
                + allowable_deviation(tri, C2, "x-"))
    y_extent = (allowable_deviation(tri, C2, "y+")
                + allowable_deviation(tri, C2, "y-"))
    assert allowable_deviation(tri, C2, "x+") != \
        pytest.approx(allowable_deviation(tri, C2, "y+"), abs=1e-3)
    assert x_extent > y_extent
    # measured extents under the half-clearance offset convention
    assert x_extent == pytest.approx(3.0, abs=2e-3)
    assert y_extent == pytest.approx(4.0 / math.sqrt(3.0), abs=2e-3)


def test_allowance_zero_when_base_pose_infeasible():
    for kind in ("square", "triangle", "hexagon"):
        shape = PegShape(kind, 25.0)
        assert not is_insertable(shape, C2, PoseError(0.0, 0.0, 30.0))
        assert allowable_deviation(shape, C2, "x+",
                                   base=PoseError(0.0, 0.0, 30.0)) == 0.0
    # a round peg never jams rotationally; rotation barely shrinks its slack
    rnd = PegShape("round", 25.0)
    assert allowable_deviation(rnd, C2, "x+",
                               base=PoseError(0.0, 0.0, 30.0)) > 0.9


def test_rotational_allowance_between_action_scale_and_cap():
    rz = allowable_deviation(SQ25, C2, "rz")
    assert 4.0 < rz < 6.0


def test_sampling_is_deterministic_and_bounded():
    a = [sample_pose_error([42, i], 3.0, 3.0) for i in range(50)]
    b = [sample_pose_error([42, i], 3.0, 3.0) for i in range(50)]
    assert [t.as_tuple() for t in a] == [t.as_tuple() for t in b]
    arr = np.array([t.as_tuple() for t in a])
    assert np.all(np.abs(arr[:, :2]) <= 3.0)
    assert np.all(np.abs(arr[:, 2]) <= 3.0)


def test_sampling_with_rejection_never_returns_insertable():
    for i in range(100):
        e = sample_pose_error([7, i], 3.0, 3.0, reject_insertable=True,
                              shape=SQ25, clearance=C2)
        assert not is_insertable(SQ25, C2, e)


def test_rejection_cap_signals_fully_feasible_ranges():
    with pytest.raises(RejectionCapError):
        sample_pose_error(0, 0.1, 0.1, reject_insertable=True,
                          shape=SQ25, clearance=C2)


def test_pose_error_validation():
    with pytest.raises(ValueError):
        PoseError(float("nan"), 0.0, 0.0)
    with pytest.raises(ValueError):
        PoseError(0.0, 0.0, 95.0)
    with pytest.raises(ValueError):
        PegShape("oval", 25.0)
    with pytest.raises(ValueError):
        PegShape("square", -1.0)
    with pytest.raises(ValueError):
        ClearanceSpec(0.0)
