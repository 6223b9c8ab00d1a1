"""Polygon representation, generators, predicates and snapshot files."""

import io
import math

import numpy as np
import pytest

from curveflow.geometry import (
    PolygonalCurve,
    edge_data,
    edge_lengths,
    edge_vectors,
    generate_ellipse,
    generate_mikula,
    generate_rectangle,
    is_simple,
    mesh_ratio,
    outward_normals,
    perimeter,
    read_snapshot,
    signed_area,
    write_snapshot,
)

import oracles

rng = np.random.default_rng(20260819)


def wiggly_test_curve(n: int = 17) -> PolygonalCurve:
    # star-convex, so simple by construction, but with uneven edges
    theta = 2.0 * np.pi * np.arange(n) / n
    r = 1.0 + 0.35 * np.sin(3 * theta) + 0.1 * np.cos(7 * theta)
    return PolygonalCurve(np.column_stack((r * np.cos(theta), r * np.sin(theta))))


# ---------------------------------------------------------------------------
# generators


def test_ellipse_four_vertices_hits_axes():
    curve = generate_ellipse(2.0, 1.0, 4)
    expected = np.array([[2.0, 0.0], [0.0, 1.0], [-2.0, 0.0], [0.0, -1.0]])
    assert np.allclose(curve.vertices, expected, atol=1e-15)
    assert np.allclose(edge_lengths(curve), math.sqrt(5.0), rtol=1e-14)


def test_unit_circle_hexagon_has_unit_edges():
    curve = generate_ellipse(1.0, 1.0, 6)
    assert np.allclose(edge_lengths(curve), 1.0, rtol=1e-12)
    assert signed_area(curve) == pytest.approx(6 * math.sqrt(3.0) / 4.0, rel=1e-12)


def test_ellipse_matches_loop_functionals():
    curve = generate_ellipse(2.0, 1.0, 31)
    assert perimeter(curve) == pytest.approx(oracles.loop_perimeter(curve.vertices), rel=1e-13)
    assert signed_area(curve) == pytest.approx(oracles.loop_shoelace(curve.vertices), rel=1e-13)


def test_rectangle_four_by_one_ten_vertices():
    curve = generate_rectangle(4.0, 1.0, 10)
    assert len(curve) == 10
    assert perimeter(curve) == pytest.approx(10.0, rel=1e-14)
    assert signed_area(curve) == pytest.approx(4.0, rel=1e-14)
    assert mesh_ratio(curve) == pytest.approx(1.0, rel=1e-14)


def test_rectangle_corners_are_vertices_exactly():
    curve = generate_rectangle(4.0, 1.0, 26)
    for corner in [(-2.0, -0.5), (2.0, -0.5), (2.0, 0.5), (-2.0, 0.5)]:
        assert any(np.array_equal(v, corner) for v in curve.vertices)


def test_unit_square_eight_vertices_equidistributed():
    curve = generate_rectangle(1.0, 1.0, 8)
    assert np.allclose(edge_lengths(curve), 0.5, rtol=1e-15)
    assert mesh_ratio(curve) == 1.0


def test_rectangle_160_vertices_equidistributed():
    curve = generate_rectangle(4.0, 1.0, 160)
    assert mesh_ratio(curve) == pytest.approx(1.0, abs=1e-12)


def test_rectangle_uneven_split_mesh_ratio():
    # 9 vertices on a unit square: one side gets 3 segments, the rest 2
    curve = generate_rectangle(1.0, 1.0, 9)
    lengths = edge_lengths(curve)
    assert len(curve) == 9
    assert mesh_ratio(curve) == pytest.approx(1.5, rel=1e-12)
    assert lengths.sum() == pytest.approx(4.0, rel=1e-14)


def test_oscillatory_curve_hand_values():
    # parametrized points at rho = 0 and rho = 1/4, evaluated by hand
    curve = generate_mikula(8)
    v = curve.vertices
    assert v[0] == pytest.approx((1.0, math.sin(1.0)), abs=1e-15)
    assert v[2, 0] == pytest.approx(0.0, abs=1e-15)
    # y(1/4) = sin(0) + 1 * (0.7 + 1 * sin(3*pi/2)^2) = 1.7
    assert v[2, 1] == pytest.approx(1.7, abs=1e-14)


def test_oscillatory_curve_is_simple_and_ccw():
    curve = generate_mikula(200)
    assert signed_area(curve) > 0
    assert is_simple(curve)
    # natural orientation is already counterclockwise, so vertex order is kept
    assert curve.vertices[0] == pytest.approx((1.0, math.sin(1.0)), abs=1e-15)


def test_generator_validation():
    with pytest.raises(ValueError):
        generate_ellipse(0.0, 1.0, 8)
    with pytest.raises(ValueError):
        generate_ellipse(2.0, 1.0, 2)
    with pytest.raises(ValueError):
        generate_mikula(2)
    with pytest.raises(ValueError):
        generate_rectangle(4.0, 1.0, 7)
    with pytest.raises(ValueError):
        generate_rectangle(-1.0, 1.0, 12)


# ---------------------------------------------------------------------------
# curve construction and basic functionals


def test_clockwise_input_is_reversed_keeping_vertex0():
    square_cw = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 1.0], [1.0, 0.0]])
    curve = PolygonalCurve(square_cw)
    assert signed_area(curve) > 0
    expected = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    assert np.array_equal(curve.vertices, expected)


def test_vertices_are_read_only():
    curve = generate_ellipse(1.0, 1.0, 5)
    with pytest.raises(ValueError):
        curve.vertices[0, 0] = 99.0


def test_constructor_validation():
    with pytest.raises(ValueError):
        PolygonalCurve([[0.0, 0.0], [1.0, 0.0]])
    with pytest.raises(ValueError):
        PolygonalCurve(np.zeros((4, 3)))
    with pytest.raises(ValueError):
        PolygonalCurve([[0.0, 0.0], [1.0, np.nan], [0.0, 1.0]])
    with pytest.raises(ValueError):
        PolygonalCurve([[0.0, 0.0], [0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    with pytest.raises(ValueError):
        # collinear: zero enclosed area
        PolygonalCurve([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]])


def test_edge_quantities_against_loops():
    curve = wiggly_test_curve()
    v = curve.vertices
    n = len(v)
    for j, rec in enumerate(edge_data(curve)):
        vec = v[(j + 1) % n] - v[j]
        assert np.array_equal(rec.vector, vec)
        assert rec.length == pytest.approx(math.hypot(*vec), rel=1e-15)
        outward = np.array([vec[1], -vec[0]]) / math.hypot(*vec)
        assert rec.normal == pytest.approx(outward, rel=1e-15)
    assert np.array_equal(edge_vectors(curve), np.roll(v, -1, axis=0) - v)


def test_outward_normals_point_outward_on_square():
    curve = generate_rectangle(2.0, 2.0, 8)
    normals = outward_normals(curve)
    mids = 0.5 * (curve.vertices + np.roll(curve.vertices, -1, axis=0))
    # moving from an edge midpoint along its normal must increase the radius
    assert ((mids * normals).sum(axis=1) > 0).all()


def test_length_weighted_normals_telescope_to_zero():
    curve = wiggly_test_curve()
    weighted = edge_lengths(curve)[:, None] * outward_normals(curve)
    assert np.abs(weighted.sum(axis=0)).max() < 1e-12


def test_raw_array_input_accepted():
    v = generate_ellipse(1.0, 2.0, 9).vertices
    assert perimeter(v) == perimeter(PolygonalCurve(v))
    assert signed_area(v) == pytest.approx(oracles.loop_shoelace(v), rel=1e-14)


# ---------------------------------------------------------------------------
# simplicity predicate


def test_is_simple_accepts_square_and_ellipse():
    assert is_simple(generate_rectangle(1.0, 1.0, 12))
    assert is_simple(generate_ellipse(2.0, 1.0, 40))


def test_is_simple_rejects_bowtie():
    bowtie = np.array([[0.0, 0.0], [1.0, 1.0], [1.0, 0.0], [0.0, 1.0]])
    assert not is_simple(bowtie)


def test_is_simple_rejects_vertex_on_far_edge():
    # fifth vertex sits exactly on the bottom edge
    poly = np.array([[0.0, 0.0], [2.0, 0.0], [2.0, 1.0], [1.0, 0.0], [0.0, 1.0]])
    assert not is_simple(poly)


def test_is_simple_rejects_fold_back():
    # consecutive edges anti-parallel: the boundary retraces itself
    poly = np.array([[0.0, 0.0], [2.0, 0.0], [1.0, 0.0], [1.0, 1.0]])
    assert not is_simple(poly)


# ---------------------------------------------------------------------------
# snapshot files


def test_snapshot_round_trip_is_bitwise():
    curve = generate_mikula(23)
    kappa = rng.standard_normal(23)
    buf = io.StringIO()
    write_snapshot(buf, curve, t=1.0 / 3.0, kappa=kappa)
    t, back, kappa_back = read_snapshot(io.StringIO(buf.getvalue()))
    assert t == 1.0 / 3.0
    assert np.array_equal(back.vertices, curve.vertices)
    assert np.array_equal(kappa_back, kappa)


def test_snapshot_file_round_trip(tmp_path):
    path = tmp_path / "snap.txt"
    curve = generate_ellipse(2.0, 1.0, 11)
    write_snapshot(path, curve, t=0.25)
    t, back, kappa = read_snapshot(path)
    assert t == 0.25
    assert kappa is None
    assert np.array_equal(back.vertices, curve.vertices)


def test_snapshot_header_format():
    buf = io.StringIO()
    write_snapshot(buf, generate_ellipse(1.0, 1.0, 4), t=0.125)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "t=0.125 N=4"
    assert len(lines) == 5


def test_snapshot_clockwise_file_normalized_with_kappa():
    square_cw = [[0.0, 0.0], [0.0, 1.0], [1.0, 1.0], [1.0, 0.0]]
    kappa = [10.0, 11.0, 12.0, 13.0]
    text = "t=0 N=4\n" + "\n".join(f"{x} {y} {k}" for (x, y), k in zip(square_cw, kappa)) + "\n"
    t, curve, kappa_back = read_snapshot(io.StringIO(text))
    assert signed_area(curve) > 0
    assert np.array_equal(curve.vertices, [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    # curvature follows the same reindexing as the vertices
    assert np.array_equal(kappa_back, [10.0, 13.0, 12.0, 11.0])


def test_snapshot_malformed_inputs():
    with pytest.raises(ValueError):
        read_snapshot(io.StringIO(""))
    with pytest.raises(ValueError):
        read_snapshot(io.StringIO("time=0 N=3\n0 0\n1 0\n0 1\n"))
    with pytest.raises(ValueError):
        read_snapshot(io.StringIO("t=0 N=4\n0 0\n1 0\n0 1\n"))
    with pytest.raises(ValueError):
        read_snapshot(io.StringIO("t=0 N=3\n0 0\n1 0 5.0\n0 1\n"))
    with pytest.raises(ValueError):
        write_snapshot(io.StringIO(), generate_ellipse(1.0, 1.0, 5), t=0.0, kappa=np.zeros(4))
