"""Finite-pupil simulation of what a camera sees in front of the display.

Backward ray model: the camera pupil is a disc on the aperture plane of the
tunable lens; the sensor samples the focus plane 1:1 with display pixels.
For each sensor pixel, rays from stratified pupil points through the pixel's
focus point are intersected with every focal plane, and the crossing is
quantized to the nearest display pixel of that plane.

Four composition modes:

* ``reality``: opaque planes, front to back; the first occupied pixel
  terminates the ray.
* ``multifocal``: transparent additive planes (what a plain time-multiplexed
  stack shows).
* ``multifocal_no_occluded``: additive, after culling fully occluded pixels.
* ``conetilt``: additive, but each emitter's radiance reaches the ray only
  if the ray's aperture-plane point lies inside both the aperture disc
  (radius d * u_m, the crop) and the emitter's tilted cone disc (radius
  d * u_m centered at d * du). No opaque occlusion is applied; the tilts
  themselves produce it.

Thanks to the field-lens default tilt, an untilted cone covers exactly the
aperture disc for every pixel, so reality/multifocal modes need no gating.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .model import CameraView, DisplayConfig, FocalStack, SceneRGBD, ValidationError
from .tilt import TiltField, remove_fully_occluded

# farthest representable depth; stands in for content at infinity (0 diopters)
INFINITE_DEPTH = 1.0e9


class RenderMode(str, Enum):
    REALITY = "reality"
    MULTIFOCAL = "multifocal"
    MULTIFOCAL_NO_OCCLUDED = "multifocal_no_occluded"
    CONETILT = "conetilt"

    def __str__(self) -> str:  # pragma: no cover - cosmetic
        return self.value


@dataclass(frozen=True)
class ImageBuffer:
    """Linear-radiance image, shape (height, width, channels)."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim == 2:
            data = data[:, :, None]
        object.__setattr__(self, "data", data)
        if data.ndim != 3 or data.shape[2] not in (1, 3):
            raise ValidationError(f"image must be (H, W, C) with C in {{1,3}}, got {data.shape}")
        if not np.all(np.isfinite(data)) or np.any(data < 0):
            raise ValidationError("image values must be finite and non-negative")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    def gray(self) -> np.ndarray:
        return self.data.mean(axis=2)


def _stratification_shape(n: int) -> tuple[int, int]:
    best = 1
    for k in range(1, int(math.isqrt(n)) + 1):
        if n % k == 0:
            best = k
    return best, n // best


def _stratified_disc(jitter: np.ndarray, n_samples: int) -> np.ndarray:
    """Map stratified-jittered unit squares to the unit disc, (..., N, 2)."""
    n1, n2 = _stratification_shape(n_samples)
    idx = np.arange(n_samples)
    u1 = (idx // n2 + jitter[..., 0]) / n1
    u2 = (idx % n2 + jitter[..., 1]) / n2
    r = np.sqrt(u1)
    theta = 2.0 * math.pi * u2
    return np.stack([r * np.cos(theta), r * np.sin(theta)], axis=-1)


class StratifiedPupilSampler:
    """Seeded stratified pupil positions, streamed per sensor row.

    Each row's jitter comes from a counter-based generator keyed on
    (seed, row), so the output is identical no matter how rendering is
    chunked or scheduled.
    """

    kind = "stratified"

    def __init__(self, camera: CameraView, seed: int):
        self.camera = camera
        self.seed = int(seed)
        self.n = camera.samples_per_pixel

    def row_positions(self, row: int, width: int) -> np.ndarray:
        rng = np.random.Generator(np.random.Philox(key=[self.seed, row]))
        jitter = rng.random((width, self.n, 2))
        disc = _stratified_disc(jitter, self.n)
        cx, cy = self.camera.pupil_center
        return np.stack(
            [cx + self.camera.pupil_radius * disc[..., 0], cy + self.camera.pupil_radius * disc[..., 1]],
            axis=-1,
        )


class GridPupilSampler:
    """Deterministic dense quadrature over the pupil disc (the analytic
    effective-pupil reference for Monte Carlo renders)."""

    kind = "grid"

    def __init__(self, camera: CameraView, grid: int = 96):
        self.camera = camera
        if camera.pupil_radius == 0.0:
            pts = np.zeros((1, 2))
        else:
            ax = (np.arange(grid) + 0.5) / grid * 2.0 - 1.0
            gx, gy = np.meshgrid(ax, ax)
            keep = gx**2 + gy**2 <= 1.0
            pts = np.stack([gx[keep], gy[keep]], axis=-1) * camera.pupil_radius
        cx, cy = camera.pupil_center
        self._positions = pts + np.array([cx, cy])
        self.n = len(self._positions)

    def row_positions(self, row: int, width: int) -> np.ndarray:
        return np.broadcast_to(self._positions, (width, self.n, 2))


def _sensor_focus_points(camera: CameraView, config: DisplayConfig):
    """Focus-plane positions sampled by each sensor pixel (xs, ys arrays)."""
    if camera.sensor_resolution is None:
        ws, hs = config.resolution
    else:
        ws, hs = camera.sensor_resolution
    scale_x = config.n_x / ws
    scale_y = config.n_y / hs
    mag = camera.focus_depth / config.d
    xs = (np.arange(ws) - (ws - 1) / 2.0) * config.display_pitch * scale_x * mag
    ys = (np.arange(hs) - (hs - 1) / 2.0) * config.display_pitch * scale_y * mag
    return xs, ys


def _quantize(p: np.ndarray, pitch: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    idx = np.rint(p / pitch + (n - 1) / 2.0)
    valid = (idx >= 0) & (idx < n)
    return idx.astype(np.int64), valid


def render(
    stack: FocalStack,
    field: TiltField | None,
    camera: CameraView,
    mode: RenderMode,
    config: DisplayConfig,
    seed: int = 0,
    sampler=None,
) -> ImageBuffer:
    """Simulate the camera's view of the displayed stack in the given mode.

    Deterministic for identical (inputs, seed). ``sampler`` defaults to
    stratified Monte Carlo with ``camera.samples_per_pixel`` rays; pass a
    :class:`GridPupilSampler` for dense deterministic quadrature.
    """
    mode = RenderMode(mode)
    camera.validate_against(config)
    if mode is RenderMode.CONETILT and field is None:
        raise ValidationError("conetilt mode requires a tilt field")
    if mode is RenderMode.MULTIFOCAL_NO_OCCLUDED:
        stack = remove_fully_occluded(stack, config)
        mode = RenderMode.MULTIFOCAL
    if sampler is None:
        sampler = StratifiedPupilSampler(camera, seed)

    xs_f, ys_f = _sensor_focus_points(camera, config)
    H, W = len(ys_f), len(xs_f)
    C = stack.channel_count
    out = np.zeros((H, W, C))
    z_f = camera.focus_depth
    cone_r2 = (config.d * config.u_m) ** 2
    aperture_r2 = config.aperture_radius**2

    planes = stack.planes  # front to back by construction
    rows_per_chunk = max(1, 4_000_000 // max(1, W * sampler.n))
    for row0 in range(0, H, rows_per_chunk):
        rows = range(row0, min(row0 + rows_per_chunk, H))
        a = np.stack([sampler.row_positions(r, W) for r in rows])  # (R, W, N, 2)
        qf = np.zeros((len(rows), W, 1, 2))
        qf[..., 0, 0] = xs_f[None, :]
        qf[..., 0, 1] = np.asarray(ys_f[list(rows)])[:, None]
        acc = np.zeros((len(rows), W, C))
        alive = None
        in_aperture = None
        if mode is RenderMode.REALITY:
            alive = np.ones(a.shape[:3], dtype=bool)
        elif mode is RenderMode.CONETILT:
            in_aperture = a[..., 0] ** 2 + a[..., 1] ** 2 < aperture_r2
        for p_idx, plane in enumerate(planes):
            z = plane.depth
            t = z / z_f
            pitch = config.plane_pitch(z)
            px = a[..., 0] * (1.0 - t) + qf[..., 0] * t
            py = a[..., 1] * (1.0 - t) + qf[..., 1] * t
            cc, vx = _quantize(px, pitch, config.n_x)
            rr, vy = _quantize(py, pitch, config.n_y)
            valid = vx & vy
            cc = np.clip(cc, 0, config.n_x - 1)
            rr = np.clip(rr, 0, config.n_y - 1)
            occ = plane.occupancy[rr, cc] & valid
            if mode is RenderMode.REALITY:
                hit = occ & alive
                if hit.any():
                    acc += np.einsum("rwnc,rwn->rwc", plane.intensity[rr, cc], hit.astype(np.float64))
                alive &= ~occ
            elif mode is RenderMode.MULTIFOCAL:
                if occ.any():
                    acc += np.einsum("rwnc,rwn->rwc", plane.intensity[rr, cc], occ.astype(np.float64))
            else:  # conetilt
                du = field.tilts[p_idx][rr, cc]  # (R, W, N, 2)
                dx = a[..., 0] - config.d * du[..., 0]
                dy = a[..., 1] - config.d * du[..., 1]
                in_cone = dx**2 + dy**2 < cone_r2
                gate = occ & in_aperture & in_cone
                if gate.any():
                    acc += np.einsum("rwnc,rwn->rwc", plane.intensity[rr, cc], gate.astype(np.float64))
        out[row0 : row0 + len(rows)] = acc / sampler.n
    return ImageBuffer(data=out)


def render_two_sweep(
    stack: FocalStack,
    field: TiltField,
    camera: CameraView,
    config: DisplayConfig,
    seed: int = 0,
    sampler=None,
) -> ImageBuffer:
    """Sum of the foreground sweep (zero phase) and background sweep (tilted).

    Models the time-multiplexed display process where foreground pixels show
    with a flat phase pattern and background pixels with the tilt pattern;
    equals the single conetilt render of the full stack by linearity.
    """
    from .tilt import decompose_fg_bg

    fg, bg = decompose_fg_bg(stack, field)
    img_fg = render(fg, None, camera, RenderMode.MULTIFOCAL, config, seed=seed, sampler=sampler)
    img_bg = render(bg, field, camera, RenderMode.CONETILT, config, seed=seed, sampler=sampler)
    return ImageBuffer(data=img_fg.data + img_bg.data)


def effective_pupil_weight(
    tilt,
    camera: CameraView,
    config: DisplayConfig,
    grid: int = 512,
) -> float:
    """Fraction of the pupil disc seeing a cone tilted by ``tilt``.

    Area fraction of pupil ∩ aperture ∩ tilted-cone disc (center d * tilt,
    radius d * u_m), by dense supersampling of the pupil. A point pupil on a
    disc boundary counts as outside. The weight is the splat kernel weight of
    any emitter with this tilt: thanks to the field-lens default tilt the
    aperture-plane geometry does not depend on the emitter position or depth.
    """
    camera.validate_against(config)
    tilt = np.asarray(tilt, dtype=float)
    center = config.d * tilt
    cone_r2 = (config.d * config.u_m) ** 2
    aperture_r2 = config.aperture_radius**2
    cx, cy = camera.pupil_center
    if camera.pupil_radius == 0.0:
        pts = np.array([[cx, cy]])
    else:
        ax = (np.arange(grid) + 0.5) / grid * 2.0 - 1.0
        gx, gy = np.meshgrid(ax, ax)
        keep = gx**2 + gy**2 <= 1.0
        pts = np.stack([gx[keep], gy[keep]], axis=-1) * camera.pupil_radius + np.array([cx, cy])
    in_aperture = pts[:, 0] ** 2 + pts[:, 1] ** 2 < aperture_r2
    in_cone = (pts[:, 0] - center[0]) ** 2 + (pts[:, 1] - center[1]) ** 2 < cone_r2
    return float(np.mean(in_aperture & in_cone))


def stack_from_scene(scene: SceneRGBD, config: DisplayConfig, max_layers: int = 1024) -> FocalStack:
    """Layer a single-surface scene at its own (undiscretized) depths."""
    from .model import FocalPlane

    diopt = scene.depth_diopters
    values = np.unique(diopt)
    if len(values) > max_layers:
        raise ValidationError(
            f"scene has {len(values)} distinct depths; reality reference supports up to {max_layers}"
        )
    depths = []
    for dv in values:
        depths.append(INFINITE_DEPTH if dv == 0 else 1.0 / dv)
    order = np.argsort(depths)
    planes = []
    for k in order:
        occ = diopt == values[k]
        planes.append(
            FocalPlane(
                depth=float(depths[k]),
                intensity=np.where(occ[:, :, None], scene.intensity, 0.0),
                occupancy=occ,
            )
        )
    return FocalStack(planes=tuple(planes))


def render_reality_reference(
    scene: SceneRGBD,
    camera: CameraView,
    config: DisplayConfig,
    seed: int = 0,
    sampler=None,
) -> ImageBuffer:
    """Ground-truth view: opaque surfaces at the scene's own depths."""
    stack = stack_from_scene(scene, config)
    return render(stack, None, camera, RenderMode.REALITY, config, seed=seed, sampler=sampler)


def viewpoint_sweep(
    stack: FocalStack,
    field: TiltField | None,
    base_camera: CameraView,
    offsets,
    mode: RenderMode,
    config: DisplayConfig,
    seed: int = 0,
    sampler_factory=None,
) -> list[ImageBuffer]:
    """Render the same content from laterally shifted pupil positions.

    Nothing is recomputed per viewpoint: the stack, tilt field and phase are
    fixed; only the pupil moves. Every offset must keep the pupil inside the
    eyebox.
    """
    images = []
    for off in offsets:
        cam = base_camera.shifted(tuple(off))
        cam.validate_against(config)
        sampler = sampler_factory(cam) if sampler_factory is not None else None
        images.append(render(stack, field, cam, mode, config, seed=seed, sampler=sampler))
    return images
