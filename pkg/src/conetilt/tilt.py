"""Per-pixel occlusion analysis and light-cone tilt synthesis.

The geometry is paraxial. A display pixel at position x (meters, on the
panel) forms a virtual pixel x' = (z_i/d) x on its focal plane; its light
cone of half-angle u_m intersects a nearer plane at depth z_o in a disc of
center (z_o/d) x and diameter w = 2 d u_m z_o (1/z_o - 1/z_i). Tilting the
cone by du shifts that disc center by s * du with s = d z_o (1/z_o - 1/z_i).

For every occupied pixel whose footprint disc overlaps occupied content on
a nearer plane, the tilt is the smallest shift that makes the disc tangent
to the occluding contour from the unoccluded side. With several nearer
planes, the candidate is taken against the contour demanding the largest
tilt and then verified against all of them; pixels whose candidate fails
verification or exceeds the 2*u_m budget are flagged infeasible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .contours import ContourGeometry, nearest_contour_point  # noqa: F401  (re-export)
from .model import DisplayConfig, FocalPlane, FocalStack, ValidationError

FLAG_UNTILTED = 0
FLAG_TILTED = 1
FLAG_INFEASIBLE = 2
FLAG_REMOVED = 3

FLAG_NAMES = {
    FLAG_UNTILTED: "untilted",
    FLAG_TILTED: "tilted",
    FLAG_INFEASIBLE: "infeasible",
    FLAG_REMOVED: "removed",
}

# verification slack in meters on the tangency condition; constructed tilts
# are tangent up to floating-point roundoff, far below this
_CLEAR_TOL = 1e-9


def _check_plane_pair(z_o: float, z_i: float) -> None:
    if z_o <= 0 or z_i <= 0:
        raise ValidationError(f"plane depths must be positive, got z_o={z_o}, z_i={z_i}")
    if z_o > z_i:
        raise ValidationError(f"occluder plane z_o={z_o} must not be behind emitter z_i={z_i}")


def virtual_pixel_position(x, z_i: float, config: DisplayConfig):
    """Virtual image position x' = (z_i/d) x of display position x at depth z_i."""
    return np.asarray(x, dtype=float) * (z_i / config.d)


def ray_after_lens(x, u, z_i: float, config: DisplayConfig):
    """Direction after the tunable lens: u' = -x/d + (d/z_i) u.

    ``x`` is the display position of the pixel and ``u`` the ray direction
    within the cone (|u| <= u_m), both including the field-lens default tilt
    folded into the coordinates.
    """
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    return -x / config.d + (config.d / z_i) * u


def ray_plane_intersection(x, u, z_i: float, z_o: float, config: DisplayConfig):
    """Where the ray (x, u) of the plane-z_i cone crosses the plane at z_o.

    x'' = (z_o/d) x + d z_o (1/z_o - 1/z_i) u; affine in u, so the whole cone
    maps to a disc.
    """
    _check_plane_pair(z_o, z_i)
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    return (z_o / config.d) * x + footprint_shift_per_tilt(z_o, z_i, config) * u


@dataclass(frozen=True)
class ConeFootprint:
    """Disc where a pixel's cone intersects a nearer focal plane."""

    center: np.ndarray  # (2,) meters on the front plane
    diameter: float  # meters
    plane_pair: tuple[float, float]  # (z_i emitter, z_o occluder)

    @property
    def radius(self) -> float:
        return self.diameter / 2.0


def cone_footprint(x, z_i: float, z_o: float, config: DisplayConfig) -> ConeFootprint:
    """Footprint disc of the cone from display position x on the plane at z_o."""
    _check_plane_pair(z_o, z_i)
    center = np.asarray(x, dtype=float) * (z_o / config.d)
    w = 2.0 * config.d * config.u_m * z_o * (1.0 / z_o - 1.0 / z_i)
    return ConeFootprint(center=center, diameter=w, plane_pair=(z_i, z_o))


def footprint_shift_per_tilt(z_o: float, z_i: float, config: DisplayConfig) -> float:
    """Meters of footprint-center shift on plane z_o per radian of tilt."""
    _check_plane_pair(z_o, z_i)
    return config.d * z_o * (1.0 / z_o - 1.0 / z_i)


def min_occluder_separation(z_o: float, z_i: float, config: DisplayConfig) -> float:
    """Smallest distance (display pixels) between occluding contours a tilt can handle.

    Equals the cone footprint diameter on the front plane expressed in display
    pixels: (2 d^2 u_m / display_pitch) * |1/z_o - 1/z_i|.
    """
    _check_plane_pair(z_o, z_i)
    return (2.0 * config.d**2 * config.u_m / config.display_pitch) * abs(1.0 / z_o - 1.0 / z_i)


@dataclass(frozen=True)
class TiltField:
    """Per-plane tilt vectors with feasibility flags.

    ``tilts`` has shape (P, H, W, 2) in radians; ``flags`` has shape
    (P, H, W) with values FLAG_UNTILTED/TILTED/INFEASIBLE/REMOVED.
    """

    tilts: np.ndarray
    flags: np.ndarray
    depths: tuple[float, ...]

    def __post_init__(self):
        tilts = np.asarray(self.tilts, dtype=np.float64)
        flags = np.asarray(self.flags, dtype=np.uint8)
        object.__setattr__(self, "tilts", tilts)
        object.__setattr__(self, "flags", flags)
        object.__setattr__(self, "depths", tuple(float(z) for z in self.depths))
        if tilts.ndim != 4 or tilts.shape[-1] != 2:
            raise ValidationError(f"tilts must be (P, H, W, 2), got {tilts.shape}")
        if flags.shape != tilts.shape[:3]:
            raise ValidationError("flags shape does not match tilts")
        if len(self.depths) != tilts.shape[0]:
            raise ValidationError("one depth per tilt plane required")

    @property
    def plane_count(self) -> int:
        return self.tilts.shape[0]

    def magnitude(self, plane: int) -> np.ndarray:
        return np.hypot(self.tilts[plane, :, :, 0], self.tilts[plane, :, :, 1])

    def count(self, flag: int) -> int:
        return int(np.sum(self.flags == flag))

    def with_removed(self, removed_masks: np.ndarray) -> "TiltField":
        """Mark pixels removed by full-occlusion culling; their tilt is zeroed."""
        removed = np.asarray(removed_masks, dtype=bool)
        flags = self.flags.copy()
        tilts = self.tilts.copy()
        flags[removed] = FLAG_REMOVED
        tilts[removed] = 0.0
        return TiltField(tilts=tilts, flags=flags, depths=self.depths)

    def merged(self) -> tuple[np.ndarray, np.ndarray]:
        """Collapse planes to one display-resolution (tilt, flag) pair.

        Each display pixel takes the tilt of the frontmost plane that tilts
        it (flag tilted or infeasible); untilted everywhere else. This is the
        tilt grid realized by the background sweep's single phase pattern.
        """
        P, H, W, _ = self.tilts.shape
        tilt = np.zeros((H, W, 2))
        flag = np.zeros((H, W), dtype=np.uint8)
        taken = np.zeros((H, W), dtype=bool)
        for p in range(P):
            sel = ~taken & np.isin(self.flags[p], (FLAG_TILTED, FLAG_INFEASIBLE))
            tilt[sel] = self.tilts[p][sel]
            flag[sel] = self.flags[p][sel]
            taken |= sel
        # a removed pixel displays nothing, so it only shows up in the merged
        # flags where no other plane claims the display pixel
        for p in range(P):
            removed = ~taken & (self.flags[p] == FLAG_REMOVED)
            flag[removed] = FLAG_REMOVED
            taken |= removed
        return tilt, flag


def _plane_geometries(stack: FocalStack, config: DisplayConfig) -> list[ContourGeometry | None]:
    geoms: list[ContourGeometry | None] = []
    for plane in stack.planes:
        if plane.occupancy.any():
            geoms.append(ContourGeometry(plane.occupancy, config.plane_pitch(plane.depth)))
        else:
            geoms.append(None)
    return geoms


def _pixel_grid(shape: tuple[int, int], pitch: float):
    ny, nx = shape
    xs = (np.arange(nx) - (nx - 1) / 2.0) * pitch
    ys = (np.arange(ny) - (ny - 1) / 2.0) * pitch
    return xs, ys


def _candidate_tilt(geom: ContourGeometry, q: np.ndarray, inside: bool, s: float, r: float):
    """Tangency tilt for one pixel, breaking nearest-contour-point ties.

    Among equidistant contour points the candidate with the smallest
    magnitude wins, then the smallest polar angle in [0, 2*pi).
    """
    points, _ = geom.nearest_candidates(q, boundary=False)
    best = None
    for x_o in points:
        delta = q - x_o if not inside else x_o - q
        norm = np.hypot(delta[0], delta[1])
        if norm == 0.0:
            # query exactly on the contour: pixel-center queries never land
            # here (edges sit at half-pitch offsets), skip the degenerate point
            continue
        e_hat = delta / norm
        target = x_o + r * e_hat
        du = (target - q) / s
        mag = float(np.hypot(du[0], du[1]))
        ang = math.atan2(du[1], du[0]) % (2.0 * math.pi)
        if best is None or (mag < best[0] - 1e-15) or (abs(mag - best[0]) <= 1e-15 and ang < best[1]):
            best = (mag, ang, du)
    if best is None:
        raise ValidationError("degenerate contour query; cannot orient tilt")
    return np.asarray(best[2])


def _tangency_candidates(geom: ContourGeometry, q: np.ndarray, inside: np.ndarray, s: float, r: float):
    """Vectorized tangency tilts: aim at the nearest contour point and place
    the disc center at distance r beyond it on the unoccluded side."""
    x_o, dist, ties = geom._nearest_batch(q, boundary=False)
    sign = np.where(inside, -1.0, 1.0)[:, None]
    e_hat = sign * (q - x_o) / dist[:, None]
    du = (x_o + r * e_hat - q) / s
    for i in np.nonzero(ties)[0]:
        du[i] = _candidate_tilt(geom, q[i], bool(inside[i]), s, r)
    return du


def _escalate_clearance(
    geom: ContourGeometry,
    q: np.ndarray,
    du: np.ndarray,
    s: float,
    r: float,
    budget: float,
    tol: float = 1e-12,
    max_steps: int = 60,
):
    """Grow each tilt along its own direction until the disc clears exactly.

    On pixelated curved contours the tangency construction can leave the disc
    overlapping a neighboring contour step by a sub-pixel sliver; the cone
    must instead make the *smallest* shift with no overlap at all. Distance
    to the region is 1-Lipschitz along the path, so stepping by the remaining
    deficit converges monotonically to the first clearance point and can
    never overshoot it. Pixels that blow past ``budget`` are left for the
    verifier to flag infeasible.
    """
    du = du.copy()
    mag = np.hypot(du[:, 0], du[:, 1])
    e_hat = du / mag[:, None]
    active = np.ones(len(du), dtype=bool)
    for _ in range(max_steps):
        idx = np.nonzero(active)[0]
        if idx.size == 0:
            break
        centers = q[idx] + s * du[idx]
        deficit = r - geom.region_distance(centers)
        grow = deficit > tol
        done = ~grow
        active[idx[done]] = False
        if grow.any():
            gi = idx[grow]
            du[gi] += (deficit[grow] / s)[:, None] * e_hat[gi]
            over = np.hypot(du[gi, 0], du[gi, 1]) > budget * 1.2
            active[gi[over]] = False
    return du


def compute_tilt_field(stack: FocalStack, config: DisplayConfig) -> TiltField:
    """Tilt every occupied pixel clear of occluders on nearer planes.

    Returns a field with one (tilt, flag) grid per plane. Pixels whose
    footprint discs never touch occupied content stay untilted; pixels whose
    verified candidate clears every nearer plane within the 2*u_m budget are
    tilted; the rest are flagged infeasible and carry the clamped candidate
    so they can still be displayed (leakage accepted) or blanked downstream.
    """
    planes = stack.planes
    P = len(planes)
    H, W = stack.shape
    tilts = np.zeros((P, H, W, 2))
    flags = np.zeros((P, H, W), dtype=np.uint8)
    geoms = _plane_geometries(stack, config)
    max_tilt = 2.0 * config.u_m

    for i in range(1, P):
        emitter = planes[i]
        if not emitter.occupancy.any():
            continue
        nearer = [o for o in range(i) if geoms[o] is not None]
        if not nearer:
            continue
        z_i = emitter.depth
        pair_data = []
        overlap_any = np.zeros((H, W), dtype=bool)
        cand_mag = np.full((H, W), -1.0)
        cand_vec = np.zeros((H, W, 2))
        for o in nearer:
            geom = geoms[o]
            z_o = planes[o].depth
            s = footprint_shift_per_tilt(z_o, z_i, config)
            r = config.u_m * s
            h_o = config.plane_pitch(z_o)
            sd = geom.refine_signed_distance(geom.signed_distance_at_pixels(), r)
            overlap = emitter.occupancy & (sd < r)
            pair_data.append((o, geom, s, r, h_o))
            if not overlap.any():
                continue
            rows, cols = np.nonzero(overlap)
            if not geom.has_contour:
                # the occluder fills the grid: no contour to escape past, so
                # the best effort is to not tilt at all
                hopeless = cand_mag[rows, cols] < np.inf
                cand_mag[rows[hopeless], cols[hopeless]] = np.inf
                cand_vec[rows[hopeless], cols[hopeless]] = 0.0
                overlap_any |= overlap
                continue
            xs, ys = _pixel_grid((H, W), h_o)
            q = np.stack([xs[cols], ys[rows]], axis=-1)
            du = _tangency_candidates(geom, q, geom.mask[rows, cols], s, r)
            du = _escalate_clearance(geom, q, du, s, r, budget=max_tilt)
            mag = np.hypot(du[:, 0], du[:, 1])
            better = mag > cand_mag[rows, cols]
            cand_mag[rows[better], cols[better]] = mag[better]
            cand_vec[rows[better], cols[better]] = du[better]
            overlap_any |= overlap

        if not overlap_any.any():
            continue
        rows, cols = np.nonzero(overlap_any)
        du_all = cand_vec[rows, cols]
        mag_all = cand_mag[rows, cols]
        ok = mag_all <= max_tilt * (1.0 + 1e-12)
        clear = ok.copy()
        for o, geom, s, r, h_o in pair_data:
            xs, ys = _pixel_grid((H, W), h_o)
            shifted = np.stack([xs[cols], ys[rows]], axis=-1) + s * du_all
            clear &= _disc_clear(geom, shifted, r)
        tilted = clear
        plane_tilt = tilts[i]
        plane_flag = flags[i]
        plane_tilt[rows[tilted], cols[tilted]] = du_all[tilted]
        plane_flag[rows[tilted], cols[tilted]] = FLAG_TILTED
        bad = ~tilted
        if bad.any():
            du_bad = du_all[bad]
            mags = np.maximum(np.hypot(du_bad[:, 0], du_bad[:, 1]), 1e-300)
            scale = np.minimum(1.0, max_tilt / mags)
            plane_tilt[rows[bad], cols[bad]] = du_bad * scale[:, None]
            plane_flag[rows[bad], cols[bad]] = FLAG_INFEASIBLE
    return TiltField(tilts=tilts, flags=flags, depths=stack.depths)


def _disc_clear(geom: ContourGeometry, centers: np.ndarray, r: float) -> np.ndarray:
    """True where the disc of radius r around each center misses the occupied region."""
    centers = np.atleast_2d(centers)
    inside = geom.occupied_at(centers)
    clear = ~inside
    if clear.any():
        low, high = geom.boundary_distance_bracket(centers[clear])
        decided_clear = low >= r - _CLEAR_TOL
        decided_hit = high < r - _CLEAR_TOL
        unsure = ~(decided_clear | decided_hit)
        result = decided_clear.copy()
        if unsure.any():
            exact = geom.boundary_distance(centers[clear][unsure])
            result[unsure] = exact >= r - _CLEAR_TOL
        clear_idx = np.nonzero(clear)[0]
        clear[clear_idx] = result
    return clear


def remove_fully_occluded(stack: FocalStack, config: DisplayConfig) -> FocalStack:
    """Blank every pixel whose whole untilted cone is blocked by nearer planes.

    A pixel is culled when each ray of its cone meets occupied content on
    some nearer plane. Coverage by a single plane is decided exactly via the
    clearance distance; joint coverage by several planes is decided on a
    dense deterministic grid of cone directions.
    """
    planes = stack.planes
    P = len(planes)
    H, W = stack.shape
    geoms = _plane_geometries(stack, config)
    new_planes = [planes[0]]
    for i in range(1, P):
        emitter = planes[i]
        nearer = [o for o in range(i) if geoms[o] is not None]
        if not emitter.occupancy.any() or not nearer:
            new_planes.append(emitter)
            continue
        z_i = emitter.depth
        blocked = np.zeros((H, W), dtype=bool)
        center_hit = np.zeros((H, W), dtype=bool)
        radii_px = []
        for o in nearer:
            geom = geoms[o]
            z_o = planes[o].depth
            s = footprint_shift_per_tilt(z_o, z_i, config)
            r = config.u_m * s
            h_o = config.plane_pitch(z_o)
            sd = geom.refine_signed_distance(geom.signed_distance_at_pixels(), r)
            blocked |= sd <= -(r - _CLEAR_TOL)
            center_hit |= geom.mask
            radii_px.append((o, r / h_o))
        if len(nearer) >= 2:
            joint = emitter.occupancy & center_hit & ~blocked
            if joint.any():
                blocked |= _joint_coverage(joint, planes, radii_px, config)
        removed = emitter.occupancy & blocked
        if removed.any():
            occ = emitter.occupancy & ~removed
            inten = np.where(occ[:, :, None], emitter.intensity, 0.0)
            new_planes.append(FocalPlane(depth=z_i, intensity=inten, occupancy=occ))
        else:
            new_planes.append(emitter)
    return FocalStack(planes=tuple(new_planes))


def _unit_disc_samples(n: int) -> np.ndarray:
    ax = (np.arange(n) + 0.5) / n * 2.0 - 1.0
    ux, uy = np.meshgrid(ax, ax)
    keep = ux**2 + uy**2 <= 1.0
    return np.stack([ux[keep], uy[keep]], axis=-1)


_COARSE_SAMPLES = _unit_disc_samples(9)
_FINE_SAMPLES = _unit_disc_samples(112)  # ~1e4 rays over the cone


def _joint_coverage(candidates: np.ndarray, planes, radii_px, config) -> np.ndarray:
    """Sampled test for cones jointly covered by several nearer planes."""
    H, W = candidates.shape
    out = np.zeros((H, W), dtype=bool)
    rows, cols = np.nonzero(candidates)
    if rows.size == 0:
        return out
    survivors = np.ones(rows.size, dtype=bool)
    for samples in (_COARSE_SAMPLES, _FINE_SAMPLES):
        idx = np.nonzero(survivors)[0]
        if idx.size == 0:
            break
        r_sel = rows[idx]
        c_sel = cols[idx]
        any_block = np.zeros((idx.size, len(samples)), dtype=bool)
        for o, r_px in radii_px:
            occ = planes[o].occupancy
            cc = np.rint(c_sel[:, None] + r_px * samples[None, :, 0]).astype(np.int64)
            rr = np.rint(r_sel[:, None] + r_px * samples[None, :, 1]).astype(np.int64)
            valid = (cc >= 0) & (cc < W) & (rr >= 0) & (rr < H)
            hit = np.zeros_like(valid)
            hit[valid] = occ[rr[valid], cc[valid]]
            any_block |= hit
        covered = any_block.all(axis=1)
        survivors[idx] = covered
    out[rows[survivors], cols[survivors]] = True
    return out


def decompose_fg_bg(stack: FocalStack, field: TiltField) -> tuple[FocalStack, FocalStack]:
    """Split content into the foreground (untilted) and background (tilted) sweeps."""
    fg_planes, bg_planes = [], []
    for p, plane in enumerate(stack.planes):
        fg_occ = plane.occupancy & (field.flags[p] == FLAG_UNTILTED)
        bg_occ = plane.occupancy & np.isin(field.flags[p], (FLAG_TILTED, FLAG_INFEASIBLE))
        fg_planes.append(
            FocalPlane(
                depth=plane.depth,
                intensity=np.where(fg_occ[:, :, None], plane.intensity, 0.0),
                occupancy=fg_occ,
            )
        )
        bg_planes.append(
            FocalPlane(
                depth=plane.depth,
                intensity=np.where(bg_occ[:, :, None], plane.intensity, 0.0),
                occupancy=bg_occ,
            )
        )
    return FocalStack(planes=tuple(fg_planes)), FocalStack(planes=tuple(bg_planes))


def apply_infeasible_policy(stack: FocalStack, field: TiltField, config: DisplayConfig) -> FocalStack:
    """Blank infeasible pixels when the config asks for removal instead of leakage."""
    if not config.remove_infeasible:
        return stack
    planes = []
    for p, plane in enumerate(stack.planes):
        drop = field.flags[p] == FLAG_INFEASIBLE
        occ = plane.occupancy & ~drop
        planes.append(
            FocalPlane(
                depth=plane.depth,
                intensity=np.where(occ[:, :, None], plane.intensity, 0.0),
                occupancy=occ,
            )
        )
    return FocalStack(planes=tuple(planes))
