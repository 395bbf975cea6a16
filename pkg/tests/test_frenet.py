import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from riskplan.errors import (
    DegenerateWaypoints, OffsetExceedsRadius, OutOfRange, PointTooFar, TooFewWaypoints,
)
from riskplan.frenet import (
    FrenetPoint, build_reference, cartesian_motion, cartesian_to_frenet, curvature_at,
    frenet_to_cartesian, heading_at, load_waypoints, state_to_frenet,
)

from conftest import circle_points, s_curve_points


def fd_curvature(path, l, h=1e-4):
    """Curvature from central differences of the position (oracle)."""
    xm, ym = path.position(l - h)
    x0, y0 = path.position(l)
    xp, yp = path.position(l + h)
    dx, dy = (xp - xm) / (2 * h), (yp - ym) / (2 * h)
    ddx, ddy = (xp - 2 * x0 + xm) / h**2, (yp - 2 * y0 + ym) / h**2
    return (dx * ddy - dy * ddx) / (dx * dx + dy * dy) ** 1.5


def polyline_length(f, a, b, n=200001):
    s = np.linspace(a, b, n)
    x, y = f(s)
    return float(np.sum(np.hypot(np.diff(x), np.diff(y))))


# -- construction ------------------------------------------------------------


def test_straight_line_length_and_offset(straight_path):
    assert straight_path.total_length == pytest.approx(40.0, abs=1e-6)
    l = np.linspace(0, 40, 401)
    _, y = straight_path.position(l)
    assert np.max(np.abs(y)) < 1e-12


def test_duplicate_waypoints_rejected():
    with pytest.raises(DegenerateWaypoints):
        build_reference([(0, 0), (1, 0), (1, 0)])


def test_too_few_waypoints():
    with pytest.raises(TooFewWaypoints):
        build_reference([(0, 0), (1, 0)])


def test_quarter_circle_length_matches_polyline_oracle(circle_path):
    # oracle: dense polyline on the exact circle
    exact = polyline_length(lambda a: (50 * np.cos(a), 50 * np.sin(a)), 0.0, math.pi / 2)
    assert exact == pytest.approx(25 * math.pi, abs=1e-6)
    assert circle_path.total_length == pytest.approx(exact, abs=0.05)


@pytest.mark.parametrize("pts", [circle_points(), s_curve_points(), [(0, 0), (10, 3), (25, -2), (40, 8), (55, 0)]])
def test_passes_through_every_waypoint(pts):
    p = build_reference(pts)
    # waypoint arc lengths are knots; nearest projection recovers each waypoint
    for x, y in pts:
        fp = cartesian_to_frenet(p, x, y)
        px, py = p.position(fp.l)
        assert math.hypot(px - x, py - y) < 1e-6


@pytest.mark.parametrize("name", ["straight_path", "circle_path", "s_path"])
def test_unit_speed_parameterization(name, request):
    p = request.getfixturevalue(name)
    l = np.linspace(0, p.total_length, 20001)
    dx, dy = p.derivatives(l, 1)
    assert np.max(np.abs(np.hypot(dx, dy) - 1.0)) < 1e-3


def test_knots_strictly_increasing(s_path):
    k = s_path.knots
    assert k[0] == 0.0 and k[-1] == pytest.approx(s_path.total_length)
    assert np.all(np.diff(k) > 0)


def test_second_derivative_continuous_across_knots(s_path):
    k = s_path.knots[1:-1]
    for order in (0, 1, 2):
        lo = np.array(s_path.sx(k - 1e-9, order)), np.array(s_path.sy(k - 1e-9, order))
        hi = np.array(s_path.sx(k + 1e-9, order)), np.array(s_path.sy(k + 1e-9, order))
        assert np.max(np.abs(lo[0] - hi[0])) < 1e-5
        assert np.max(np.abs(lo[1] - hi[1])) < 1e-5


# -- curvature / heading -----------------------------------------------------


def test_straight_curvature_zero(straight_path):
    for l in np.linspace(0, 40, 17):
        assert abs(curvature_at(straight_path, l)) < 1e-9


def test_circle_curvature_mid_arc(circle_path):
    assert curvature_at(circle_path, circle_path.total_length / 2) == pytest.approx(0.02, abs=1e-3)


def test_s_curve_curvature_flips_sign(s_path):
    L = s_path.total_length
    assert fd_curvature(s_path, 0.25 * L) > 0
    assert fd_curvature(s_path, 0.75 * L) < 0
    assert curvature_at(s_path, 0.25 * L) > 0 > curvature_at(s_path, 0.75 * L)


@pytest.mark.parametrize("name", ["straight_path", "circle_path", "s_path"])
def test_curvature_matches_finite_differences(name, request):
    p = request.getfixturevalue(name)
    for l in np.linspace(0.01, p.total_length - 0.01, 300):
        k = curvature_at(p, l)
        assert abs(k - fd_curvature(p, l)) <= max(1e-4, 1e-2 * abs(k))


def test_out_of_range_queries(straight_path):
    with pytest.raises(OutOfRange):
        curvature_at(straight_path, 40.5)
    with pytest.raises(OutOfRange):
        heading_at(straight_path, -1.0)


def test_heading_conventions():
    east = build_reference([(0, 0), (5, 0), (10, 0)])
    north = build_reference([(0, 0), (0, 5), (0, 10)])
    assert heading_at(east, 3.0) == pytest.approx(0.0, abs=1e-9)
    assert heading_at(north, 3.0) == pytest.approx(math.pi / 2, abs=1e-9)
    west = build_reference([(0, 0), (-5, 0), (-10, 0)])
    assert heading_at(west, 3.0) == pytest.approx(math.pi, abs=1e-9)


def test_quarter_circle_end_heading(circle_path):
    start = heading_at(circle_path, 0.0)
    end = heading_at(circle_path, circle_path.total_length)
    assert start == pytest.approx(math.pi / 2, abs=1e-3)
    turn = (end - start + math.pi) % (2 * math.pi) - math.pi
    assert turn == pytest.approx(math.pi / 2, abs=1e-3)


def test_heading_has_no_jumps(s_path):
    phi = s_path.heading(np.arange(0, s_path.total_length, 0.01))
    assert np.max(np.abs(np.diff(phi))) < math.pi / 2


# -- transforms --------------------------------------------------------------


def test_on_path_identity(s_path):
    for l in np.linspace(0, s_path.total_length, 11):
        x, y = frenet_to_cartesian(s_path, FrenetPoint(l, 0.0))
        px, py = s_path.position(l)
        assert math.hypot(x - px, y - py) < 1e-9


def test_straight_normal_is_left(straight_path):
    assert frenet_to_cartesian(straight_path, FrenetPoint(10.0, 2.0)) == pytest.approx((10.0, 2.0), abs=1e-9)
    fp = cartesian_to_frenet(straight_path, 10.0, -3.0)
    assert fp.l == pytest.approx(10.0, abs=1e-6)
    assert fp.d == pytest.approx(-3.0, abs=1e-6)


def test_circle_offset_distance(circle_path):
    # left normal points to the centre for a counter-clockwise arc
    x, y = frenet_to_cartesian(circle_path, FrenetPoint(20.0, -5.0))
    assert math.hypot(x, y) == pytest.approx(55.0, abs=1e-3)


def test_offset_beyond_radius(circle_path):
    with pytest.raises(OffsetExceedsRadius):
        frenet_to_cartesian(circle_path, FrenetPoint(20.0, 51.0))


def test_point_too_far(straight_path):
    with pytest.raises(PointTooFar):
        cartesian_to_frenet(straight_path, 20.0, 80.0)


@pytest.mark.parametrize("name", ["straight_path", "circle_path", "s_path"])
@given(u=st.floats(0.02, 0.98), v=st.floats(-0.8, 0.8))
def test_round_trip(name, request, u, v):
    p = request.getfixturevalue(name)
    l = u * p.total_length
    k = abs(curvature_at(p, l))
    d = v * min(8.0, 0.8 / k if k > 1e-9 else 8.0)
    x, y = frenet_to_cartesian(p, FrenetPoint(l, d))
    back = cartesian_to_frenet(p, x, y)
    assert back.l == pytest.approx(l, abs=1e-6)
    assert back.d == pytest.approx(d, abs=1e-6)
    x2, y2 = frenet_to_cartesian(p, back)
    assert math.hypot(x2 - x, y2 - y) < 1e-6


def test_equidistant_projection_prefers_smaller_l():
    # a U-turn: the centre of the turn is equidistant to many points; take a
    # point between the two parallel legs instead
    pts = [(0, 0), (20, 0), (30, 5), (20, 10), (0, 10)]
    p = build_reference(pts)
    fp = cartesian_to_frenet(p, 0.0, 5.0)
    assert fp.l < p.total_length / 2


def test_state_to_frenet_straight(straight_path):
    l, d, l_dot, d_dot, l_dd, d_dd = state_to_frenet(straight_path, 12.0, 1.0, 0.1, 10.0, 1.0)
    assert (l, d) == pytest.approx((12.0, 1.0), abs=1e-9)
    assert l_dot == pytest.approx(10 * math.cos(0.1))
    assert d_dot == pytest.approx(10 * math.sin(0.1))
    assert (l_dd, d_dd) == pytest.approx((math.cos(0.1), math.sin(0.1)))


def test_cartesian_motion_matches_finite_differences(s_path):
    # oracle: differentiate the Cartesian image of a Frenet motion numerically
    t = np.linspace(0.0, 4.0, 4001)
    l = 5.0 + 8.0 * t + 0.3 * t**2
    d = 0.5 * np.sin(0.8 * t)
    ld, ldd = 8.0 + 0.6 * t, np.full_like(t, 0.6)
    dd, ddd = 0.4 * np.cos(0.8 * t), -0.32 * np.sin(0.8 * t)
    x, y, heading, speed, kappa = cartesian_motion(s_path, l, ld, ldd, d, dd, ddd)
    h = t[1] - t[0]
    vx, vy = np.gradient(x, h), np.gradient(y, h)
    ax, ay = np.gradient(vx, h), np.gradient(vy, h)
    sl = slice(5, -5)
    assert np.max(np.abs(speed - np.hypot(vx, vy))[sl]) < 1e-4
    assert np.max(np.abs(np.angle(np.exp(1j * (heading - np.arctan2(vy, vx)))))[sl]) < 1e-5
    k_fd = (vx * ay - vy * ax) / np.hypot(vx, vy) ** 3
    assert np.max(np.abs(kappa - k_fd)[sl]) < 1e-4


def test_load_waypoints(tmp_path):
    f = tmp_path / "wp.txt"
    f.write_text("# road\n0 0\n10, 0\n\n20 1  # bend\n")
    wp = load_waypoints(f)
    assert [tuple(w) for w in wp] == [(0.0, 0.0), (10.0, 0.0), (20.0, 1.0)]
