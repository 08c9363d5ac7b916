"""Deterministic procedural test scenes.

Four families, each exercising a different occlusion regime:

* ``disc_text``: an opaque disc on the front plane over a fully textured
  back plane carrying bright glyphs tucked just inside the disc's shadow.
  The glyphs sit in the band where tilts are feasible, so they hide and
  reveal under small pupil shifts.
* ``silhouette``: a dim, textured blob occluding a bright textured back
  plane; the workhorse for leakage/contrast measurements.
* ``depth_ramp``: a continuous diopter ramp with upright constant-depth
  slabs, discretized onto the configured focal planes.
* ``bars``: full-height vertical bars on the front plane whose clear gaps
  are a configurable multiple of the minimum contour separation the tilt
  budget supports; sub-minimum gaps force infeasible pixels.

Generators return both the single-surface RGB-D view (ground truth for
reality rendering) and the layered focal stack actually displayed, which
may contain content hidden behind occluders.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import DisplayConfig, FocalPlane, FocalStack, SceneRGBD, ValidationError
from .render import INFINITE_DEPTH
from .tilt import min_occluder_separation

def ramp_plane_depths(n_planes: int = 40, max_diopters: float = 4.0) -> tuple[float, ...]:
    """Focal plane depths uniform in diopters on [0, max]; 0 maps to the
    far-depth stand-in used for content at infinity."""
    diopt = np.linspace(0.0, max_diopters, n_planes)
    depths = [INFINITE_DEPTH if d == 0 else 1.0 / d for d in diopt]
    return tuple(sorted(depths))


_GLYPHS = {
    "C": ["0111", "1000", "1000", "1000", "1000", "1000", "0111"],
    "E": ["1111", "1000", "1000", "1110", "1000", "1000", "1111"],
    "H": ["1001", "1001", "1001", "1111", "1001", "1001", "1001"],
    "I": ["111", "010", "010", "010", "010", "010", "111"],
    "L": ["100", "100", "100", "100", "100", "100", "111"],
    "N": ["1001", "1101", "1101", "1011", "1011", "1001", "1001"],
    "O": ["0110", "1001", "1001", "1001", "1001", "1001", "0110"],
    "T": ["111", "010", "010", "010", "010", "010", "010"],
}


@dataclass(frozen=True)
class GeneratedScene:
    """A procedural scene plus every mask downstream measurements need."""

    name: str
    rgbd: SceneRGBD
    stack: FocalStack
    regions: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)


def _texture(shape: tuple[int, int], lo: float = 0.2, hi: float = 0.8, phase: float = 0.0) -> np.ndarray:
    ny, nx = shape
    yy, xx = np.meshgrid(np.arange(ny) / ny, np.arange(nx) / nx, indexing="ij")
    t = 0.5 + 0.3 * np.sin(2 * np.pi * (3 * xx + phase)) * np.cos(2 * np.pi * 2 * yy)
    t += 0.2 * np.sin(2 * np.pi * 7 * (xx + yy))
    t = (t - t.min()) / (t.max() - t.min())
    return lo + (hi - lo) * t


def _glyph_mask(shape: tuple[int, int], text: str, top: int, left: int) -> np.ndarray:
    """Stack the glyphs of ``text`` vertically starting at (top, left)."""
    mask = np.zeros(shape, dtype=bool)
    row = top
    for ch in text.upper():
        if ch not in _GLYPHS:
            raise ValidationError(f"no glyph for character {ch!r}")
        rows = _GLYPHS[ch]
        for r, bits in enumerate(rows):
            for c, b in enumerate(bits):
                if b == "1" and 0 <= row + r < shape[0] and 0 <= left + c < shape[1]:
                    mask[row + r, left + c] = True
        row += len(rows) + 2
    return mask


def _two_plane_depths(config: DisplayConfig) -> tuple[float, float]:
    if len(config.plane_depths) < 2:
        raise ValidationError("two-plane scenes need at least two focal planes")
    return config.plane_depths[0], config.plane_depths[-1]


def _disc_mask(shape, center_rc, radius_px) -> np.ndarray:
    ny, nx = shape
    yy, xx = np.meshgrid(np.arange(ny), np.arange(nx), indexing="ij")
    return (yy - center_rc[0]) ** 2 + (xx - center_rc[1]) ** 2 <= radius_px**2


def _layered_two_plane(
    config: DisplayConfig,
    front_mask: np.ndarray,
    front_intensity: np.ndarray,
    back_intensity: np.ndarray,
) -> tuple[SceneRGBD, FocalStack]:
    z_front, z_back = _two_plane_depths(config)
    front = FocalPlane(
        depth=z_front,
        intensity=np.where(front_mask[:, :, None], front_intensity[:, :, None], 0.0),
        occupancy=front_mask,
    )
    back = FocalPlane(
        depth=z_back,
        intensity=back_intensity[:, :, None].copy(),
        occupancy=np.ones_like(front_mask),
    )
    stack = FocalStack(planes=(front, back))
    rgbd = SceneRGBD(
        intensity=np.where(front_mask[:, :, None], front_intensity[:, :, None], back_intensity[:, :, None]),
        depth_diopters=np.where(front_mask, 1.0 / z_front, 1.0 / z_back),
    )
    return rgbd, stack


def generate_scene(name: str, config: DisplayConfig, **params) -> GeneratedScene:
    """Build a named procedural scene on the configured display geometry."""
    generators = {
        "disc_text": _gen_disc_text,
        "silhouette": _gen_silhouette,
        "depth_ramp": _gen_depth_ramp,
        "bars": _gen_bars,
    }
    if name not in generators:
        raise ValidationError(f"unknown scene generator {name!r}; choose from {sorted(generators)}")
    return generators[name](config, **params)


def _gen_disc_text(
    config: DisplayConfig,
    disc_radius_px: int = 60,
    disc_center_offset_px: tuple[int, int] = (0, -20),
    text: str = "HI",
    text_depth_px: float = 4.0,
) -> GeneratedScene:
    """Opaque dark disc hiding bright glyphs tucked just inside its shadow.

    The back plane is dark except for the glyph band and a texture strip far
    to the left, so the glyph region isolates the hide/reveal effect: the
    glyphs sit a few pixels inside the occluding edge, within the band where
    a feasible tilt swings their cones entirely to one side of the eyebox.
    """
    ny, nx = config.n_y, config.n_x
    center = (ny / 2.0 - 0.5 + disc_center_offset_px[0], nx / 2.0 - 0.5 + disc_center_offset_px[1])
    silhouette = _disc_mask((ny, nx), center, disc_radius_px)
    # glyph strip sits text_depth_px inside the silhouette's right edge
    glyph_h = 16  # two stacked 7-row glyphs with spacing
    glyph_left = int(round(center[1] + disc_radius_px - text_depth_px - 4))
    glyph_top = int(round(center[0] - glyph_h / 2))
    glyphs = _glyph_mask((ny, nx), text, glyph_top, glyph_left)
    glyphs &= silhouette
    back = np.where(glyphs, 1.0, 0.0)
    strip = np.zeros((ny, nx), dtype=bool)
    strip_end = max(0, int(center[1] - disc_radius_px - 24))
    strip[:, :strip_end] = True
    back = np.where(strip, _texture((ny, nx), 0.15, 0.55), back)
    z_front, z_back = _two_plane_depths(config)
    front = FocalPlane(
        depth=z_front,
        intensity=np.zeros((ny, nx, 1)),
        occupancy=silhouette,
    )
    back_occ = glyphs | strip
    back_plane = FocalPlane(
        depth=z_back,
        intensity=np.where(back_occ[:, :, None], back[:, :, None], 0.0),
        occupancy=back_occ,
    )
    stack = FocalStack(planes=(front, back_plane))
    rgbd = SceneRGBD(
        intensity=np.where(silhouette[:, :, None], 0.0, back[:, :, None]),
        depth_diopters=np.where(silhouette, 1.0 / z_front, 1.0 / z_back),
    )
    text_region = np.zeros((ny, nx), dtype=bool)
    r0 = max(0, glyph_top - 12)
    r1 = min(ny, glyph_top + glyph_h + 12)
    c0 = max(0, glyph_left - 12)
    c1 = min(nx, glyph_left + 8 + 12)
    text_region[r0:r1, c0:c1] = True
    return GeneratedScene(
        name="disc_text",
        rgbd=rgbd,
        stack=stack,
        regions={"silhouette": silhouette, "glyphs": glyphs, "text_region": text_region},
        params={
            "disc_radius_px": disc_radius_px,
            "disc_center_offset_px": tuple(disc_center_offset_px),
            "text": text,
            "text_depth_px": text_depth_px,
        },
    )


def _gen_silhouette(
    config: DisplayConfig,
    radius_px: int = 56,
    aspect: float = 0.65,
    angle_deg: float = 30.0,
) -> GeneratedScene:
    """Dim textured elliptical blob occluding a bright textured back plane."""
    ny, nx = config.n_y, config.n_x
    yy, xx = np.meshgrid(np.arange(ny) - (ny - 1) / 2.0, np.arange(nx) - (nx - 1) / 2.0, indexing="ij")
    th = np.deg2rad(angle_deg)
    xr = xx * np.cos(th) + yy * np.sin(th)
    yr = -xx * np.sin(th) + yy * np.cos(th)
    silhouette = (xr / radius_px) ** 2 + (yr / (radius_px * aspect)) ** 2 <= 1.0
    front_intensity = _texture((ny, nx), 0.05, 0.3, phase=0.25)
    back = _texture((ny, nx), 0.35, 0.9)
    rgbd, stack = _layered_two_plane(config, silhouette, front_intensity, back)
    return GeneratedScene(
        name="silhouette",
        rgbd=rgbd,
        stack=stack,
        regions={"silhouette": silhouette},
        params={"radius_px": radius_px, "aspect": aspect, "angle_deg": angle_deg},
    )


def _gen_depth_ramp(config: DisplayConfig, n_slabs: int = 3) -> GeneratedScene:
    """Continuous diopter ramp (far at the top) with upright slabs standing on it."""
    from .model import discretize_scene

    ny, nx = config.n_y, config.n_x
    max_diopt = 1.0 / config.plane_depths[0]
    ramp = np.linspace(0.0, max_diopt, ny)[:, None] * np.ones((1, nx))
    depth = ramp.copy()
    intensity = _texture((ny, nx), 0.2, 0.75)
    slab_mask = np.zeros((ny, nx), dtype=bool)
    for k in range(n_slabs):
        base_row = int(ny * (0.35 + 0.2 * k))
        col = int(nx * (0.2 + 0.3 * k))
        w = max(6, nx // 16)
        h = max(12, ny // 6)
        sl = np.s_[max(0, base_row - h) : base_row, col : min(nx, col + w)]
        slab_mask[sl] = True
        depth[sl] = ramp[base_row - 1, 0] if base_row >= 1 else ramp[0, 0]
        intensity[sl] = 0.9 if k % 2 == 0 else 0.12
    rgbd = SceneRGBD(intensity=intensity[:, :, None], depth_diopters=depth)
    stack = discretize_scene(rgbd, config)
    return GeneratedScene(
        name="depth_ramp",
        rgbd=rgbd,
        stack=stack,
        regions={"slabs": slab_mask},
        params={"n_slabs": n_slabs},
    )


def _gen_bars(config: DisplayConfig, gap_factor: float = 0.5, bar_factor: float = 0.6) -> GeneratedScene:
    """Full-height vertical bars; the clear gap is gap_factor times the
    minimum contour separation the tilt budget can handle."""
    ny, nx = config.n_y, config.n_x
    z_front, z_back = _two_plane_depths(config)
    w_px = min_occluder_separation(z_front, z_back, config)
    gap = max(2, int(round(gap_factor * w_px)))
    bar = max(2, int(round(bar_factor * w_px)))
    period = gap + bar
    mask = np.zeros((ny, nx), dtype=bool)
    start = (nx % period) // 2 + gap // 2
    gaps = np.zeros((ny, nx), dtype=bool)
    for c0 in range(start, nx - bar, period):
        mask[:, c0 : c0 + bar] = True
        g0 = c0 + bar
        gaps[:, g0 : min(nx, g0 + gap)] = True
    gaps &= ~mask
    front_intensity = np.full((ny, nx), 0.1)
    back = _texture((ny, nx), 0.35, 0.9)
    rgbd, stack = _layered_two_plane(config, mask, front_intensity, back)
    return GeneratedScene(
        name="bars",
        rgbd=rgbd,
        stack=stack,
        regions={"silhouette": mask, "gaps": gaps},
        params={
            "gap_factor": gap_factor,
            "bar_factor": bar_factor,
            "gap_px": gap,
            "bar_px": bar,
            "min_separation_px": w_px,
        },
    )
