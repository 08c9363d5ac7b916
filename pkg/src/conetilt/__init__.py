"""Occlusion-aware multifocal display simulation via per-pixel light-cone tilts.

The package covers the full synthesis and evaluation path: focal-plane
discretization of RGB-D content, per-pixel cone-tilt computation against
virtual occluders, phase-pattern synthesis for a phase modulator, finite-
pupil rendering of what a viewer sees, and quantitative metrics (leakage,
contrast correlation, PSNR/SSIM, dark-halo profiles).
"""

from .model import (
    CameraView,
    DisplayConfig,
    FocalPlane,
    FocalStack,
    SceneRGBD,
    ValidationError,
    default_field_tilt,
    discretize_scene,
    plane_focal_length,
)
from .contours import (
    ContourError,
    ContourGeometry,
    NoContourError,
    NoOccluderError,
    nearest_contour_point,
)
from .tilt import (
    FLAG_INFEASIBLE,
    FLAG_REMOVED,
    FLAG_TILTED,
    FLAG_UNTILTED,
    ConeFootprint,
    TiltField,
    apply_infeasible_policy,
    compute_tilt_field,
    cone_footprint,
    decompose_fg_bg,
    footprint_shift_per_tilt,
    min_occluder_separation,
    ray_after_lens,
    ray_plane_intersection,
    remove_fully_occluded,
    virtual_pixel_position,
)
from .phase import (
    PhaseMap,
    PhaseSolveError,
    TiltErrorReport,
    check_nyquist,
    max_cone_radius,
    solve_phase,
    tilt_error_report,
    tilt_to_gradient_targets,
    wrap_phase,
)
from .render import (
    ImageBuffer,
    RenderMode,
    effective_pupil_weight,
    render,
    render_reality_reference,
    render_two_sweep,
    viewpoint_sweep,
)
from .metrics import (
    MetricsReport,
    contrast_scatter,
    halo_profile,
    leakage_score,
    psnr,
    ssim,
)
from .scenes import GeneratedScene, generate_scene

__version__ = "0.1.0"

__all__ = [
    "CameraView",
    "ConeFootprint",
    "ContourError",
    "ContourGeometry",
    "DisplayConfig",
    "FLAG_INFEASIBLE",
    "FLAG_REMOVED",
    "FLAG_TILTED",
    "FLAG_UNTILTED",
    "FocalPlane",
    "FocalStack",
    "GeneratedScene",
    "ImageBuffer",
    "MetricsReport",
    "NoContourError",
    "NoOccluderError",
    "PhaseMap",
    "PhaseSolveError",
    "RenderMode",
    "SceneRGBD",
    "TiltErrorReport",
    "TiltField",
    "ValidationError",
    "apply_infeasible_policy",
    "check_nyquist",
    "compute_tilt_field",
    "cone_footprint",
    "contrast_scatter",
    "decompose_fg_bg",
    "default_field_tilt",
    "discretize_scene",
    "effective_pupil_weight",
    "footprint_shift_per_tilt",
    "generate_scene",
    "halo_profile",
    "leakage_score",
    "max_cone_radius",
    "min_occluder_separation",
    "nearest_contour_point",
    "plane_focal_length",
    "psnr",
    "ray_after_lens",
    "ray_plane_intersection",
    "remove_fully_occluded",
    "render",
    "render_reality_reference",
    "render_two_sweep",
    "solve_phase",
    "ssim",
    "tilt_error_report",
    "tilt_to_gradient_targets",
    "viewpoint_sweep",
    "virtual_pixel_position",
    "wrap_phase",
]
