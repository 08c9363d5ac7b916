import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import conetilt as ct
from conetilt.contours import ContourGeometry, _edge_segments, _nearest_on_segments


def brute_force_nearest(mask, pitch, q, include_border):
    p0, p1 = _edge_segments(np.asarray(mask, bool), pitch, include_border=include_border)
    proj, d2 = _nearest_on_segments(np.asarray(q, float), p0, p1)
    j = int(np.argmin(d2))
    return proj[j], float(np.sqrt(d2[j]))


class TestNearestContourPoint:
    def test_half_plane_query_maps_onto_edge(self):
        # cells of pitch 1 mm; columns 12.. occupied, so the region boundary
        # sits at x = 4.0 mm on a 16-wide grid centered at zero
        mask = np.zeros((16, 16), dtype=bool)
        mask[:, 12:] = True
        pitch = 1e-3
        p = ct.nearest_contour_point(mask, np.array([4.31e-3, 0.0]), pitch)
        assert p[0] == pytest.approx(4.0e-3, abs=1e-12)
        assert p[1] == pytest.approx(0.0, abs=1e-12)

    def test_single_pixel_contour_is_its_cell_boundary(self):
        mask = np.zeros((9, 9), dtype=bool)
        mask[4, 4] = True  # cell centered at the origin, side 1
        q = np.array([3.0, 0.2])
        p = ct.nearest_contour_point(mask, q, 1.0)
        assert p == pytest.approx([0.5, 0.2])  # right edge of the cell
        q = np.array([2.0, 2.0])
        p = ct.nearest_contour_point(mask, q, 1.0)
        assert p == pytest.approx([0.5, 0.5])  # cell corner

    def test_query_on_contour_returns_itself(self):
        mask = np.zeros((9, 9), dtype=bool)
        mask[:, 5:] = True
        geom = ContourGeometry(mask, 1.0)
        q = np.array([0.5, 0.3])  # on the boundary edge between cols 4 and 5
        pts, dist = geom.nearest_points(q[None, :])
        assert dist[0] == pytest.approx(0.0, abs=1e-15)
        assert pts[0] == pytest.approx(q)

    def test_empty_and_full_masks_raise_distinct_errors(self):
        with pytest.raises(ct.NoOccluderError):
            ct.nearest_contour_point(np.zeros((4, 4), bool), [0.0, 0.0], 1.0)
        with pytest.raises(ct.NoContourError):
            ct.nearest_contour_point(np.ones((4, 4), bool), [0.0, 0.0], 1.0)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(min_value=0, max_value=2**16), st.integers(min_value=1, max_value=30))
    def test_matches_brute_force_on_random_masks(self, seed, fill):
        rng = np.random.default_rng(seed)
        mask = rng.random((12, 12)) < fill / 31.0
        if not mask.any() or mask.all():
            return
        geom = ContourGeometry(mask, 1.0)
        if not geom.has_contour:
            return
        queries = rng.uniform(-8.0, 8.0, size=(8, 2))
        pts, dists = geom.nearest_points(queries)
        for q, p, d in zip(queries, pts, dists):
            bp, bd = brute_force_nearest(mask, 1.0, q, include_border=False)
            assert d == pytest.approx(bd, abs=1e-9)
            assert np.hypot(*(p - q)) == pytest.approx(bd, abs=1e-9)


class TestRegionDistances:
    @settings(max_examples=30, deadline=None)
    @given(st.integers(min_value=0, max_value=2**16))
    def test_boundary_distance_matches_brute_force(self, seed):
        rng = np.random.default_rng(seed)
        mask = rng.random((10, 10)) < 0.4
        if not mask.any():
            return
        geom = ContourGeometry(mask, 1.0)
        queries = rng.uniform(-7.0, 7.0, size=(6, 2))
        d = geom.boundary_distance(queries)
        for q, dv in zip(queries, d):
            _, bd = brute_force_nearest(mask, 1.0, q, include_border=True)
            assert dv == pytest.approx(bd, abs=1e-9)

    def test_region_distance_zero_inside(self):
        mask = np.zeros((8, 8), dtype=bool)
        mask[3:6, 3:6] = True
        geom = ContourGeometry(mask, 1.0)
        inside = np.array([[0.0, 0.0]])
        assert geom.region_distance(inside)[0] == 0.0
        assert geom.clearance_distance(inside)[0] > 0.0

    def test_clearance_accounts_for_grid_border(self):
        # occupied column block touching the right border: clearance from a
        # deep pixel is capped by the escape past the display edge
        mask = np.zeros((8, 8), dtype=bool)
        mask[:, 5:] = True
        geom = ContourGeometry(mask, 1.0)
        q = np.array([[3.0, 0.0]])  # column 6 center: 1.5 from contour, 1 from border
        assert geom.clearance_distance(q)[0] == pytest.approx(1.0)

    def test_off_grid_points_are_unoccupied(self):
        mask = np.ones((4, 4), dtype=bool)
        geom = ContourGeometry(mask, 1.0)
        assert not geom.occupied_at(np.array([[10.0, 0.0]]))[0]
        assert geom.region_distance(np.array([[10.0, 0.0]]))[0] == pytest.approx(8.0)

    def test_bracket_bounds_hold(self):
        rng = np.random.default_rng(5)
        mask = rng.random((12, 12)) < 0.35
        geom = ContourGeometry(mask, 1.0)
        queries = rng.uniform(-8.0, 8.0, size=(32, 2))
        low, high = geom.boundary_distance_bracket(queries)
        exact = geom.boundary_distance(queries)
        assert np.all(exact >= low - 1e-12)
        assert np.all(exact <= high + 1e-12)

    def test_refined_signed_distance_is_exact_near_radius(self):
        rng = np.random.default_rng(11)
        mask = rng.random((16, 16)) < 0.3
        geom = ContourGeometry(mask, 1.0)
        radius = 2.0
        sd = geom.refine_signed_distance(geom.signed_distance_at_pixels(), radius)
        ny, nx = mask.shape
        xs = np.arange(nx) - (nx - 1) / 2.0
        ys = np.arange(ny) - (ny - 1) / 2.0
        for r in range(ny):
            for c in range(nx):
                if abs(abs(sd[r, c]) - radius) <= 0.75:
                    exact = geom.boundary_distance(np.array([[xs[c], ys[r]]]))[0]
                    expected = -exact if mask[r, c] else exact
                    assert sd[r, c] == pytest.approx(expected, abs=1e-9)
