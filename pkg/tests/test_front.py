import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from planfrac.front import (
    FrontPolyline,
    advance_markers,
    envelope_tangent,
    reconstruct_envelope,
    tip_geometry,
)
from planfrac.mesh import Grid, classify


def dist_point_line(p, on_line, normal):
    return abs((p[0] - on_line[0]) * normal[0] + (p[1] - on_line[1]) * normal[1])


class TestEnvelopeTangent:
    def test_worked_stencil_instance(self):
        # dx = dy = 1, r1 = 1, r2 = 1.2: c = sqrt(2)/0.2, sqrt(c^2-1) = 7
        alpha, t1, t2 = envelope_tangent((0.0, 0.0), 1.0, (-1.0, 1.0), 1.2)
        assert np.tan(alpha) == pytest.approx(0.75, abs=1e-10)
        assert np.cos(alpha) == pytest.approx(0.8, abs=1e-10)
        assert np.sin(alpha) == pytest.approx(0.6, abs=1e-10)
        # tip-center distance r3 = r2 - dx*cos(alpha) = 0.4 for center (0, 1)
        n = (np.cos(alpha), np.sin(alpha))
        r3 = 1.2 - dist_point_line((0.0, 1.0), t2, n)
        # distance from tangent line: r2 minus it gives 0.4... direct check:
        d_tip = dist_point_line((0.0, 1.0), t1, n)
        assert d_tip == pytest.approx(0.4, abs=1e-10)

    def test_tangency_defines_the_line(self):
        alpha, t1, t2 = envelope_tangent((0.2, -0.4), 0.8, (1.7, 0.9), 1.1)
        n = (np.cos(alpha), np.sin(alpha))
        assert dist_point_line((0.2, -0.4), t1, n) == pytest.approx(0.8, abs=1e-12)
        assert dist_point_line((1.7, 0.9), t1, n) == pytest.approx(1.1, abs=1e-12)
        # both tangent points on the same line
        assert dist_point_line(t2, t1, n) == pytest.approx(0.0, abs=1e-12)

    def test_equal_radii_parallel_to_center_line(self):
        alpha, t1, t2 = envelope_tangent((0.0, 0.0), 1.0, (2.0, 0.0), 1.0)
        # horizontal center line, outward normal perpendicular: (0, -1) for ccw
        assert np.cos(alpha) == pytest.approx(0.0, abs=1e-12)
        assert abs(np.sin(alpha)) == pytest.approx(1.0, abs=1e-12)

    def test_contained_circle_rejected(self):
        with pytest.raises(ValueError, match="tangent"):
            envelope_tangent((0.0, 0.0), 2.0, (0.1, 0.0), 0.5)

    @given(
        x2=st.floats(-2.0, 2.0), y2=st.floats(0.5, 2.5),
        r1=st.floats(0.3, 1.5), r2=st.floats(0.3, 1.5),
    )
    @settings(max_examples=200, deadline=None)
    def test_matches_printed_sign_branches(self, x2, y2, r1, r2):
        """The single arccos form agrees with the branched tan expression."""
        c1 = np.array([0.0, 0.0])
        c2 = np.array([x2, y2])
        d = np.hypot(*(c2 - c1))
        if d <= abs(r1 - r2) + 1e-3 or abs(r1 - r2) < 1e-6:
            return
        alpha, _, _ = envelope_tangent(c1, r1, c2, r2)
        gd = np.arctan2(y2, x2)
        tg = np.tan(gd)
        if abs(np.cos(gd)) < 1e-3:
            return  # tan(gamma_d) blows up; branch formula unusable
        c = d / abs(r1 - r2)
        s = np.sqrt(c * c - 1.0)
        if r1 >= r2:  # upper signs
            tan_branch = (-s + tg) / (1.0 + tg * s)
        else:  # lower signs
            tan_branch = (s + tg) / (1.0 - tg * s)
        if abs(1.0 + tg * s) < 1e-6 or abs(1.0 - tg * s) < 1e-6:
            return
        assert np.tan(alpha) == pytest.approx(tan_branch, rel=1e-8, abs=1e-8)
        # inequality set: gamma_d - pi <= alpha <= gamma_d
        assert gd - np.pi - 1e-12 <= alpha <= gd + 1e-12


class TestReconstructEnvelope:
    def test_circle_of_circles(self):
        # centers on radius R0, constant r: envelope approximates R0 + r
        for m in (16, 32, 64):
            th = np.linspace(0, 2 * np.pi, m, endpoint=False)
            centers = np.stack([3.0 * np.cos(th), 3.0 * np.sin(th)], axis=1)
            poly = reconstruct_envelope(centers, np.full(m, 1.0))
            rad = np.hypot(poly.points[:, 0], poly.points[:, 1])
            sagitta = 4.0 * (1.0 / np.cos(np.pi / m) - 1.0)
            assert np.max(np.abs(rad - 4.0)) <= sagitta + 1e-9
        # max radial error shrinks with the ring count
        errs = []
        for m in (16, 64):
            th = np.linspace(0, 2 * np.pi, m, endpoint=False)
            centers = np.stack([3.0 * np.cos(th), 3.0 * np.sin(th)], axis=1)
            poly = reconstruct_envelope(centers, np.full(m, 1.0))
            errs.append(np.max(np.abs(np.hypot(*poly.points.T) - 4.0)))
        assert errs[1] < errs[0] / 10.0

    def test_orientation_counter_clockwise(self):
        th = np.linspace(0, 2 * np.pi, 24, endpoint=False)
        centers = np.stack([2.0 * np.cos(th), 2.0 * np.sin(th)], axis=1)
        poly = reconstruct_envelope(centers, np.full(24, 0.7))
        assert poly.signed_area() > 0.0

    def test_unordered_input_is_ring_sorted(self):
        th = np.linspace(0, 2 * np.pi, 20, endpoint=False)
        centers = np.stack([2.5 * np.cos(th), 2.5 * np.sin(th)], axis=1)
        rng = np.random.default_rng(3)
        perm = rng.permutation(20)
        poly = reconstruct_envelope(centers[perm], np.full(20, 0.9)[perm])
        rad = np.hypot(poly.points[:, 0], poly.points[:, 1])
        assert np.max(np.abs(rad - 3.4)) < 0.1

    def test_nonpositive_radius_rejected(self):
        th = np.linspace(0, 2 * np.pi, 8, endpoint=False)
        centers = np.stack([np.cos(th), np.sin(th)], axis=1)
        with pytest.raises(ValueError, match="positive"):
            reconstruct_envelope(centers, np.array([1, 1, 1, 0, 1, 1, 1, 1.0]))

    def test_inconsistent_radii_rejected(self):
        th = np.linspace(0, 2 * np.pi, 12, endpoint=False)
        centers = np.stack([2.0 * np.cos(th), 2.0 * np.sin(th)], axis=1)
        radii = np.full(12, 0.5)
        radii[4] = 6.0  # circle swallowing its neighbours
        with pytest.raises(ValueError):
            reconstruct_envelope(centers, radii)


class TestAdvanceMarkers:
    def test_uniform_circular_expansion(self):
        m = 64
        th = np.linspace(0, 2 * np.pi, m, endpoint=False)
        poly = FrontPolyline(np.stack([2 * np.cos(th), 2 * np.sin(th)], axis=1))
        out = advance_markers(poly, np.full(m, 0.5), 0.2)
        rad = np.hypot(out.points[:, 0], out.points[:, 1])
        # O(dtheta^2) accuracy of the central-difference normals
        assert np.max(np.abs(rad - 2.1)) < 0.1 * (2 * np.pi / m) ** 2 * 2.1 + 1e-12

    def test_straight_run_normals(self):
        pts = np.array([
            [-1.0, 0.0], [0.0, 0.0], [1.0, 0.0],  # horizontal run (bottom)
            [1.5, 1.0], [0.0, 1.8], [-1.5, 1.0],
        ])
        poly = FrontPolyline(pts)
        n = poly.vertex_normals()
        assert n[1] == pytest.approx([0.0, -1.0], abs=1e-12)

    def test_zero_speed_identity(self):
        pts = np.array([[0, 0], [1, 0], [1, 1], [0, 1.0]])
        poly = FrontPolyline(pts)
        out = advance_markers(poly, np.zeros(4), 0.7)
        assert np.array_equal(out.points, poly.points)

    def test_folding_rejected(self):
        # concave notches fold over when advanced beyond their curvature radius
        th = np.linspace(0, 2 * np.pi, 60, endpoint=False)
        r = 2.0 + 1.5 * np.cos(5 * th)
        pts = np.stack([r * np.cos(th), r * np.sin(th)], axis=1)
        poly = FrontPolyline(pts)
        with pytest.raises(ValueError, match="fold"):
            advance_markers(poly, np.full(60, 1.0), 1.5)

    def test_negative_speed_rejected(self):
        pts = np.array([[0, 0], [1, 0], [1, 1], [0, 1.0]])
        with pytest.raises(ValueError):
            advance_markers(FrontPolyline(pts), np.array([0.1, -0.1, 0.1, 0.1]), 1.0)

    def test_expansion_monotonicity(self):
        m = 32
        th = np.linspace(0, 2 * np.pi, m, endpoint=False)
        pts = np.stack([(2 + 0.3 * np.cos(3 * th)) * np.cos(th),
                        (2 + 0.3 * np.cos(3 * th)) * np.sin(th)], axis=1)
        poly = FrontPolyline(pts)
        rng = np.random.default_rng(11)
        speeds = rng.uniform(0.05, 0.3, m)
        out = advance_markers(poly, speeds, 0.3)
        c = poly.points.mean(axis=0)
        r0 = np.hypot(*(poly.points - c).T)
        r1 = np.hypot(*(out.points - c).T)
        assert np.all(r1 >= r0 - 0.05)


class TestTipGeometry:
    def test_circle_normals_radial_and_activation(self):
        grid = Grid(18, 18, 1.0, 1.0, origin=(-8.5, -8.5))
        th = np.linspace(0, 2 * np.pi, 128, endpoint=False)
        R = 4.3
        poly = FrontPolyline(np.stack([R * np.cos(th), R * np.sin(th)], axis=1))
        cls = classify(grid, poly.points)
        normals, anchors, activated = tip_geometry(grid, cls, poly)
        for k in cls.tip:
            cx, cy = grid.center_of(k)
            rr = np.hypot(cx, cy)
            radial = np.array([cx / rr, cy / rr])
            dot = normals[k] @ radial
            assert dot > 0.9  # outward, close to radial
            assert activated[k] == (rr < R)
