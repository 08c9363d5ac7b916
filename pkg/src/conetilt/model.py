"""Core domain types and scene discretization for the display simulator.

Conventions used throughout the package:

* All quantities are SI (meters, radians) unless a name says otherwise.
* Depth maps are stored in diopters (1/m); 0 diopters means infinity.
* Image arrays are indexed [row, col] with ``resolution = (n_x, n_y)``
  meaning n_x columns (width) and n_y rows (height).
* Display pixel k along an axis of n pixels sits at ``(k - (n-1)/2) * pitch``,
  i.e. the grid is centered on the optical axis. The virtual copy of the
  display on a focal plane at depth z is the same grid magnified by z/d,
  so a pixel has identical integer coordinates on every plane.
* Radiance is linear everywhere; gamma is applied only when exporting
  preview images.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np


class ValidationError(ValueError):
    """Raised when a configuration or input violates a documented invariant."""


@dataclass(frozen=True)
class DisplayConfig:
    """Optical and sampling parameters of a cone-tilt multifocal display.

    Attributes:
        d: display-to-tunable-lens distance in meters.
        u_m: half-angle of the light cone emitted per pixel, radians.
        wavelength: design wavelength in meters.
        slm_pitch: phase modulator pixel pitch in meters.
        display_pitch: display panel pixel pitch in meters.
        resolution: (n_x, n_y) display pixels (width, height).
        plane_depths: focal plane depths in meters, strictly increasing.
        aperture_radius: radius of the tunable-lens aperture in meters.
            Defaults to d * u_m, the vignetting-free field-lens geometry.
        remove_infeasible: when True, pixels with no feasible tilt are
            blanked instead of displayed with a clamped best-effort tilt.
    """

    d: float = 0.058
    u_m: float = 0.020
    wavelength: float = 520e-9
    slm_pitch: float = 6.4e-6
    display_pitch: float = 15.7e-6
    resolution: tuple[int, int] = (256, 256)
    plane_depths: tuple[float, ...] = (0.25, 1.0)
    aperture_radius: float | None = None
    remove_infeasible: bool = False

    def __post_init__(self):
        if self.aperture_radius is None:
            object.__setattr__(self, "aperture_radius", self.d * self.u_m)
        object.__setattr__(self, "plane_depths", tuple(float(z) for z in self.plane_depths))
        self.validate()

    def validate(self) -> None:
        for name in ("d", "u_m", "wavelength", "slm_pitch", "display_pitch"):
            if getattr(self, name) <= 0:
                raise ValidationError(f"{name} must be positive, got {getattr(self, name)}")
        nx, ny = self.resolution
        if nx < 1 or ny < 1:
            raise ValidationError(f"resolution must be positive, got {self.resolution}")
        depths = self.plane_depths
        if len(depths) == 0:
            raise ValidationError("plane_depths must not be empty")
        if any(z <= 0 for z in depths):
            raise ValidationError(f"plane depths must be positive, got {depths}")
        if any(b <= a for a, b in zip(depths, depths[1:])):
            raise ValidationError(f"plane depths must be strictly increasing, got {depths}")
        bound = self.max_cone_radius
        if self.u_m > bound:
            raise ValidationError(
                f"u_m={self.u_m:.6g} rad exceeds the modulator sampling bound "
                f"pi/(2*k*slm_pitch) = {bound:.6g} rad "
                f"(wavelength={self.wavelength:.3g} m, slm_pitch={self.slm_pitch:.3g} m)"
            )
        if self.aperture_radius <= 0:
            raise ValidationError("aperture_radius must be positive")
        vignette_free = self.d * self.u_m
        if abs(self.aperture_radius - vignette_free) > 1e-9 * vignette_free:
            raise ValidationError(
                f"aperture_radius {self.aperture_radius:.6g} m must equal d*u_m = "
                f"{vignette_free:.6g} m (vignetting-free field-lens geometry)"
            )

    @property
    def wave_number(self) -> float:
        """k = 2*pi/wavelength in rad/m."""
        return 2.0 * math.pi / self.wavelength

    @property
    def max_cone_radius(self) -> float:
        """Largest representable cone half-angle pi/(2*k*slm_pitch) = wavelength/(4*slm_pitch)."""
        return math.pi / (2.0 * self.wave_number * self.slm_pitch)

    @property
    def eyebox_diameter(self) -> float:
        """Diameter of the pupil region with correct imagery, 2 * u_m * d."""
        return 2.0 * self.u_m * self.d

    @property
    def n_x(self) -> int:
        return self.resolution[0]

    @property
    def n_y(self) -> int:
        return self.resolution[1]

    def plane_pitch(self, z: float) -> float:
        """Pixel pitch of the virtual display copy at depth z."""
        return self.display_pitch * z / self.d

    def pixel_x(self) -> np.ndarray:
        """Physical x of each display column (meters), centered on the axis."""
        nx = self.n_x
        return (np.arange(nx) - (nx - 1) / 2.0) * self.display_pitch

    def pixel_y(self) -> np.ndarray:
        """Physical y of each display row (meters), centered on the axis."""
        ny = self.n_y
        return (np.arange(ny) - (ny - 1) / 2.0) * self.display_pitch

    def with_planes(self, plane_depths) -> "DisplayConfig":
        return replace(self, plane_depths=tuple(plane_depths))


def plane_focal_length(z_i: float, config: DisplayConfig) -> float:
    """Tunable-lens focal length that places the virtual display at depth z_i.

    Solves 1/d + 1/(-z_i) = 1/f for the virtual image of the panel (object
    distance d, image distance -z_i on the viewer side), giving
    f = d*z_i / (z_i - d). As z_i -> inf the lens collimates (f -> d); at
    z_i = d the lens has no power (f = inf); planes closer than d need a
    diverging setting (f < 0).
    """
    if z_i <= 0:
        raise ValidationError(f"focal plane depth must be positive, got {z_i}")
    d = config.d
    if z_i == d:
        return math.inf
    return d * z_i / (z_i - d)


def default_field_tilt(x, config: DisplayConfig) -> np.ndarray:
    """Default tilt -x/d applied by the field lens at display position x.

    Directs the chief ray of every pixel through the aperture center so the
    whole cone passes the tunable lens unvignetted. ``x`` is a 2-vector (or
    array of 2-vectors) in meters on the display plane.
    """
    return -np.asarray(x, dtype=float) / config.d


@dataclass(frozen=True)
class SceneRGBD:
    """A single-surface scene: per-pixel linear radiance plus depth in diopters."""

    intensity: np.ndarray  # (H, W, C), C in {1, 3}, values in [0, 1]
    depth_diopters: np.ndarray  # (H, W), finite, >= 0

    def __post_init__(self):
        inten = np.asarray(self.intensity, dtype=np.float64)
        if inten.ndim == 2:
            inten = inten[:, :, None]
        depth = np.asarray(self.depth_diopters, dtype=np.float64)
        object.__setattr__(self, "intensity", inten)
        object.__setattr__(self, "depth_diopters", depth)
        if inten.ndim != 3 or inten.shape[2] not in (1, 3):
            raise ValidationError(f"intensity must be (H, W, C) with C in {{1,3}}, got {inten.shape}")
        if depth.shape != inten.shape[:2]:
            raise ValidationError(
                f"depth shape {depth.shape} does not match intensity {inten.shape[:2]}"
            )
        if not np.all(np.isfinite(depth)) or np.any(depth < 0):
            raise ValidationError("depth must be finite and >= 0 diopters")
        if not np.all(np.isfinite(inten)):
            raise ValidationError("intensity must be finite")

    @property
    def channel_count(self) -> int:
        return self.intensity.shape[2]


@dataclass(frozen=True)
class FocalPlane:
    """Content of one focal plane: depth, radiance and binary occupancy."""

    depth: float  # meters
    intensity: np.ndarray  # (H, W, C)
    occupancy: np.ndarray  # (H, W) bool

    def __post_init__(self):
        inten = np.asarray(self.intensity, dtype=np.float64)
        if inten.ndim == 2:
            inten = inten[:, :, None]
        occ = np.asarray(self.occupancy, dtype=bool)
        object.__setattr__(self, "intensity", inten)
        object.__setattr__(self, "occupancy", occ)
        if occ.shape != inten.shape[:2]:
            raise ValidationError("occupancy shape does not match intensity")
        if np.any(inten[~occ] != 0):
            raise ValidationError("unoccupied pixels must have zero intensity")


@dataclass(frozen=True)
class FocalStack:
    """Multiplexed display content: one FocalPlane per focal depth.

    Stacks produced by :func:`discretize_scene` occupy each pixel on at most
    one plane. Stacks built directly (e.g. by scene generators that know the
    content hidden behind an occluder) may occupy a pixel on several planes;
    every consumer in the package accepts that.
    """

    planes: tuple[FocalPlane, ...]

    def __post_init__(self):
        planes = tuple(self.planes)
        object.__setattr__(self, "planes", planes)
        if not planes:
            raise ValidationError("a focal stack needs at least one plane")
        shape = planes[0].intensity.shape
        for p in planes:
            if p.intensity.shape != shape:
                raise ValidationError("all planes must share intensity dimensions")
        depths = [p.depth for p in planes]
        if any(b <= a for a, b in zip(depths, depths[1:])):
            raise ValidationError("plane depths must be strictly increasing")

    @property
    def depths(self) -> tuple[float, ...]:
        return tuple(p.depth for p in self.planes)

    @property
    def shape(self) -> tuple[int, int]:
        return self.planes[0].occupancy.shape

    @property
    def channel_count(self) -> int:
        return self.planes[0].intensity.shape[2]

    def total_intensity(self) -> float:
        return float(sum(p.intensity.sum() for p in self.planes))


@dataclass(frozen=True)
class CameraView:
    """Finite-pupil camera looking at the display through the aperture.

    The pupil is a disc on the aperture plane; it must lie entirely inside
    the aperture (the eyebox) so that untilted cones fill it.
    """

    pupil_center: tuple[float, float] = (0.0, 0.0)  # meters on the aperture plane
    pupil_radius: float = 4.0e-4
    focus_depth: float = 1.0  # meters
    sensor_resolution: tuple[int, int] | None = None  # defaults to display resolution
    samples_per_pixel: int = 256

    def __post_init__(self):
        object.__setattr__(self, "pupil_center", (float(self.pupil_center[0]), float(self.pupil_center[1])))
        if self.pupil_radius < 0:
            raise ValidationError("pupil_radius must be >= 0")
        if self.focus_depth <= 0:
            raise ValidationError("focus_depth must be positive")
        if self.samples_per_pixel < 1:
            raise ValidationError("samples_per_pixel must be >= 1")

    def validate_against(self, config: DisplayConfig) -> None:
        cx, cy = self.pupil_center
        reach = math.hypot(cx, cy) + self.pupil_radius
        if reach > config.aperture_radius + 1e-12:
            raise ValidationError(
                f"pupil (|center|+radius = {reach:.6g} m) exceeds the eyebox radius "
                f"{config.aperture_radius:.6g} m"
            )

    def shifted(self, offset: tuple[float, float]) -> "CameraView":
        cx, cy = self.pupil_center
        return replace(self, pupil_center=(cx + float(offset[0]), cy + float(offset[1])))


def discretize_scene(scene: SceneRGBD, config: DisplayConfig) -> FocalStack:
    """Assign every scene pixel to the focal plane nearest in diopters.

    Ties in diopter distance go to the nearer (larger-diopter) plane. Scenes
    whose dimensions differ from the display resolution are resampled first:
    nearest-neighbor for depth (no phantom interpolated depths), area average
    for intensity.
    """
    scene = _resample_scene(scene, config)
    depths = np.asarray(config.plane_depths)
    plane_diopt = 1.0 / depths  # decreasing with plane index
    dist = np.abs(scene.depth_diopters[None, :, :] - plane_diopt[:, None, None])
    # argmin picks the first (nearest-to-viewer, largest-diopter) plane on ties
    assignment = np.argmin(dist, axis=0)
    planes = []
    for i, z in enumerate(depths):
        occ = assignment == i
        inten = np.where(occ[:, :, None], scene.intensity, 0.0)
        planes.append(FocalPlane(depth=float(z), intensity=inten, occupancy=occ))
    return FocalStack(planes=tuple(planes))


def _resample_scene(scene: SceneRGBD, config: DisplayConfig) -> SceneRGBD:
    ny, nx = config.n_y, config.n_x
    h, w = scene.depth_diopters.shape
    if (h, w) == (ny, nx):
        return scene
    if h % ny == 0 and w % nx == 0:
        fy, fx = h // ny, w // nx
        inten = scene.intensity.reshape(ny, fy, nx, fx, -1).mean(axis=(1, 3))
        depth = scene.depth_diopters[fy // 2::fy, fx // 2::fx]
        return SceneRGBD(intensity=inten, depth_diopters=depth)
    # general case: nearest-neighbor rows/cols for depth, block-mean impossible
    rows = np.minimum((np.arange(ny) * h / ny + h / (2 * ny)).astype(int), h - 1)
    cols = np.minimum((np.arange(nx) * w / nx + w / (2 * nx)).astype(int), w - 1)
    depth = scene.depth_diopters[np.ix_(rows, cols)]
    inten = scene.intensity[np.ix_(rows, cols)]
    return SceneRGBD(intensity=inten, depth_diopters=depth)
