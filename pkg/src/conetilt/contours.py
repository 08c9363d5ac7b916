"""Exact geometry of occupancy contours on a focal plane.

An occupancy mask is treated as a union of square pixel cells of side
``pitch`` centered on the plane's pixel grid. Two boundaries matter:

* the *occluding contour*: cell edges shared by an occupied and an
  unoccupied cell inside the grid. This is where a tilted cone is aimed.
  Edges on the grid border are not occluding contours (there is no display
  content beyond them to escape past).
* the *region boundary*: the occluding contour plus the border edges of
  occupied cells, i.e. the full topological boundary of the occupied
  region. Distances to it decide disc/occluder overlap and clearance.

Both are represented as axis-aligned segments; nearest-point queries are
exact (brute-force equivalent), using a KD-tree over segment midpoints to
prune and a pixel-center Euclidean distance transform for cheap bounds.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree


class ContourError(ValueError):
    """Base class for contour extraction failures."""


class NoOccluderError(ContourError):
    """The occupancy mask is empty: there is nothing to occlude against."""


class NoContourError(ContourError):
    """The occupancy mask is full: the region has no interior contour."""


def _cell_centers(shape: tuple[int, int], pitch: float):
    ny, nx = shape
    xs = (np.arange(nx) - (nx - 1) / 2.0) * pitch
    ys = (np.arange(ny) - (ny - 1) / 2.0) * pitch
    return xs, ys


def _edge_segments(mask: np.ndarray, pitch: float, include_border: bool):
    """Return (p0, p1) arrays of boundary edges of the occupied region."""
    ny, nx = mask.shape
    xs, ys = _cell_centers(mask.shape, pitch)
    half = pitch / 2.0
    p0, p1 = [], []

    def add_vertical(rows, edge_x):
        # vertical edge at x = edge_x spanning the cell's y extent
        y0 = ys[rows] - half
        y1 = ys[rows] + half
        p0.append(np.stack([edge_x, y0], axis=-1))
        p1.append(np.stack([edge_x, y1], axis=-1))

    def add_horizontal(cols, edge_y):
        x0 = xs[cols] - half
        x1 = xs[cols] + half
        p0.append(np.stack([x0, edge_y], axis=-1))
        p1.append(np.stack([x1, edge_y], axis=-1))

    occ = mask
    # interior edges: occupied next to unoccupied
    left = occ[:, 1:] & ~occ[:, :-1]
    rows, cols = np.nonzero(left)
    if rows.size:
        add_vertical(rows, xs[cols + 1] - half)
    right = occ[:, :-1] & ~occ[:, 1:]
    rows, cols = np.nonzero(right)
    if rows.size:
        add_vertical(rows, xs[cols] + half)
    top = occ[1:, :] & ~occ[:-1, :]
    rows, cols = np.nonzero(top)
    if rows.size:
        add_horizontal(cols, ys[rows + 1] - half)
    bottom = occ[:-1, :] & ~occ[1:, :]
    rows, cols = np.nonzero(bottom)
    if rows.size:
        add_horizontal(cols, ys[rows] + half)

    if include_border:
        rows = np.nonzero(occ[:, 0])[0]
        if rows.size:
            add_vertical(rows, np.full(rows.size, xs[0] - half))
        rows = np.nonzero(occ[:, nx - 1])[0]
        if rows.size:
            add_vertical(rows, np.full(rows.size, xs[nx - 1] + half))
        cols = np.nonzero(occ[0, :])[0]
        if cols.size:
            add_horizontal(cols, np.full(cols.size, ys[0] - half))
        cols = np.nonzero(occ[ny - 1, :])[0]
        if cols.size:
            add_horizontal(cols, np.full(cols.size, ys[ny - 1] + half))

    if not p0:
        return np.zeros((0, 2)), np.zeros((0, 2))
    return np.concatenate(p0, axis=0), np.concatenate(p1, axis=0)


def _nearest_on_segments(q: np.ndarray, p0: np.ndarray, p1: np.ndarray):
    """Exact nearest points on each segment to query q; returns (points, d2)."""
    seg = p1 - p0
    length2 = np.einsum("ij,ij->i", seg, seg)
    t = np.einsum("ij,ij->i", q[None, :] - p0, seg) / np.where(length2 > 0, length2, 1.0)
    t = np.clip(t, 0.0, 1.0)
    proj = p0 + t[:, None] * seg
    diff = proj - q[None, :]
    d2 = np.einsum("ij,ij->i", diff, diff)
    return proj, d2


class ContourGeometry:
    """Nearest-point and signed-distance queries against an occupancy mask."""

    def __init__(self, mask: np.ndarray, pitch: float):
        mask = np.asarray(mask, dtype=bool)
        if mask.ndim != 2:
            raise ContourError(f"occupancy mask must be 2-D, got shape {mask.shape}")
        if not mask.any():
            raise NoOccluderError("occupancy mask is empty; no occluder present")
        self.mask = mask
        self.pitch = float(pitch)
        self.shape = mask.shape
        self._c0, self._c1 = _edge_segments(mask, self.pitch, include_border=False)
        self._b0, self._b1 = _edge_segments(mask, self.pitch, include_border=True)
        self._contour_tree = self._build_tree(self._c0, self._c1)
        self._boundary_tree = self._build_tree(self._b0, self._b1)
        # pixel-center distances to the nearest opposite-class pixel, in meters
        if mask.all():
            edt_in = np.full(mask.shape, np.inf)
        else:
            edt_in = ndimage.distance_transform_edt(mask) * self.pitch
        self._edt_out = ndimage.distance_transform_edt(~mask) * self.pitch
        # escape through the display border counts as clearance: clamp the
        # inside estimate by the exact distance to the grid rectangle edge
        ny, nx = mask.shape
        xs, ys = _cell_centers(mask.shape, self.pitch)
        half = self.pitch / 2.0
        dx = np.minimum(xs - (xs[0] - half), (xs[-1] + half) - xs)
        dy = np.minimum(ys - (ys[0] - half), (ys[-1] + half) - ys)
        border = np.minimum(dx[None, :], dy[:, None])
        self._edt = np.minimum(edt_in, border)

    @staticmethod
    def _build_tree(p0, p1):
        if len(p0) == 0:
            return None
        return cKDTree((p0 + p1) / 2.0)

    @property
    def has_contour(self) -> bool:
        return self._contour_tree is not None

    def _segments_for(self, boundary: bool):
        if boundary:
            return self._b0, self._b1, self._boundary_tree
        if self._contour_tree is None:
            raise NoContourError(
                "occupancy mask is full; the region has no occluding contour"
            )
        return self._c0, self._c1, self._contour_tree

    def occupied_at(self, points: np.ndarray) -> np.ndarray:
        """Occupancy of the cells containing each point; off-grid is empty."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        ny, nx = self.shape
        cols = np.rint(points[:, 0] / self.pitch + (nx - 1) / 2.0).astype(np.int64)
        rows = np.rint(points[:, 1] / self.pitch + (ny - 1) / 2.0).astype(np.int64)
        inside = (cols >= 0) & (cols < nx) & (rows >= 0) & (rows < ny)
        out = np.zeros(len(points), dtype=bool)
        ok = inside
        out[ok] = self.mask[rows[ok], cols[ok]]
        return out

    def _nearest_batch(self, queries: np.ndarray, boundary: bool, tie_tol: float = 1e-12):
        """Exact nearest boundary points for a batch of queries.

        Returns (points (Q,2), distances (Q,), ties (Q,) bool) where ``ties``
        marks queries with several distinct nearest points within tie_tol.
        """
        queries = np.atleast_2d(np.asarray(queries, dtype=float))
        p0, p1, tree = self._segments_for(boundary)
        d_mid, _ = tree.query(queries)
        radii = d_mid + self.pitch * 0.5 + 1e-12 * np.maximum(1.0, d_mid)
        candidates = tree.query_ball_point(queries, radii)
        pts = np.empty_like(queries)
        dists = np.empty(len(queries))
        ties = np.zeros(len(queries), dtype=bool)
        for i, (q, cand) in enumerate(zip(queries, candidates)):
            idx = np.asarray(cand, dtype=np.int64)
            proj, d2 = _nearest_on_segments(q, p0[idx], p1[idx])
            j = int(np.argmin(d2))
            pts[i] = proj[j]
            dists[i] = np.sqrt(d2[j])
            close = np.sqrt(d2) <= dists[i] + tie_tol
            if np.count_nonzero(close) > 1:
                near = proj[close]
                spread = np.abs(near - pts[i]).max()
                ties[i] = spread > tie_tol
        return pts, dists, ties

    def nearest_points(self, queries: np.ndarray, boundary: bool = False):
        """Exact nearest boundary points and distances for each query.

        With ``boundary=False`` the occluding contour is searched (raises
        :class:`NoContourError` for a full mask); with ``boundary=True`` the
        full region boundary is used. Returns (points (Q,2), distances (Q,)).
        """
        pts, dists, _ = self._nearest_batch(queries, boundary)
        return pts, dists

    def nearest_candidates(self, q: np.ndarray, boundary: bool = False, tol: float = 1e-12):
        """All distinct nearest points within ``tol`` of the minimum distance."""
        q = np.asarray(q, dtype=float)
        p0, p1, tree = self._segments_for(boundary)
        d_mid, _ = tree.query(q)
        radius = d_mid + self.pitch * 0.5 + 1e-12 * max(1.0, float(d_mid))
        idx = np.asarray(tree.query_ball_point(q, radius), dtype=np.int64)
        proj, d2 = _nearest_on_segments(q, p0[idx], p1[idx])
        d = np.sqrt(d2)
        dmin = d.min()
        keep = proj[d <= dmin + tol]
        uniq = np.unique(np.round(keep / max(tol, 1e-300)).astype(np.int64), axis=0, return_index=True)[1]
        return keep[np.sort(uniq)], dmin

    def boundary_distance(self, queries: np.ndarray) -> np.ndarray:
        """Exact distance from each query to the region boundary (always >= 0)."""
        _, d = self.nearest_points(queries, boundary=True)
        return d

    def boundary_distance_bracket(self, queries: np.ndarray):
        """Cheap vectorized bounds (low, high) on the boundary distance.

        Uses nearest segment midpoints: the true distance lies within
        [d_mid - pitch/2, d_mid]. Queries whose bracket straddles a decision
        threshold need :meth:`boundary_distance` for an exact answer.
        """
        queries = np.atleast_2d(np.asarray(queries, dtype=float))
        d_mid, _ = self._boundary_tree.query(queries)
        return np.maximum(d_mid - self.pitch / 2.0, 0.0), d_mid

    def region_distance(self, queries: np.ndarray) -> np.ndarray:
        """Distance to the occupied region: zero inside, boundary distance outside."""
        queries = np.atleast_2d(np.asarray(queries, dtype=float))
        inside = self.occupied_at(queries)
        out = np.zeros(len(queries))
        if np.any(~inside):
            out[~inside] = self.boundary_distance(queries[~inside])
        return out

    def clearance_distance(self, queries: np.ndarray) -> np.ndarray:
        """Distance to the unoccupied complement (including off-grid): zero outside."""
        queries = np.atleast_2d(np.asarray(queries, dtype=float))
        inside = self.occupied_at(queries)
        out = np.zeros(len(queries))
        if np.any(inside):
            out[inside] = self.boundary_distance(queries[inside])
        return out

    def signed_distance_at_pixels(self) -> np.ndarray:
        """Signed region distance estimated at every pixel center of this grid.

        Positive outside the occupied region, negative inside. Magnitudes are
        pixel-center EDT values, which bracket the true boundary distance
        within [edt - pitch/sqrt(2), edt]; pass the result through
        :meth:`refine_signed_distance` to make the band that matters exact.
        """
        return np.where(self.mask, -self._edt, self._edt_out)

    def refine_signed_distance(self, coarse: np.ndarray, radius: float, slack: float = 0.0) -> np.ndarray:
        """Exact signed distances wherever ``|coarse|`` is within radius + pitch.

        ``coarse`` comes from :meth:`signed_distance_at_pixels`. Pixels whose
        bracketed distance cannot cross the classification thresholds
        (0, +-radius) keep the pixel-center estimate.
        """
        ny, nx = self.shape
        xs, ys = _cell_centers(self.shape, self.pitch)
        need = np.abs(np.abs(coarse) - radius) <= self.pitch + slack
        need |= np.abs(coarse) <= self.pitch + slack
        rows, cols = np.nonzero(need)
        if rows.size == 0:
            return coarse
        pts = np.stack([xs[cols], ys[rows]], axis=-1)
        d = self.boundary_distance(pts)
        refined = coarse.copy()
        refined[rows, cols] = np.where(self.mask[rows, cols], -d, d)
        return refined


def nearest_contour_point(occupancy: np.ndarray, query, pitch: float) -> np.ndarray:
    """Exact nearest point to ``query`` on the occluding contour of a mask.

    ``query`` is a 2-vector (x, y) in the plane's physical coordinates and
    ``pitch`` the plane's pixel pitch. Raises :class:`NoOccluderError` for an
    all-empty mask and :class:`NoContourError` for an all-occupied one.
    """
    geom = ContourGeometry(occupancy, pitch)
    pts, _ = geom.nearest_points(np.asarray(query, dtype=float)[None, :], boundary=False)
    return pts[0]
