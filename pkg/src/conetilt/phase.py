"""Phase-pattern synthesis for the modulator that realizes the cone tilts.

A phase surface phi (radians) steers a paraxial ray by (1/k) * grad(phi)
with k = 2*pi/wavelength. Given a per-pixel target tilt field du, we want
grad(phi) = k * du, recovered in least squares:

    minimize ||D_x phi - g_x||^2 + ||D_y phi - g_y||^2 + eps * ||phi||^2

where phi lives on the (n_y+1) x (n_x+1) pixel-corner grid, D_x/D_y are
forward differences divided by the modulator pitch (one gradient sample per
pixel, free Neumann-like boundary), and g = k * du. The normal equations
form a screened Poisson system, symmetric positive definite for eps > 0,
solved matrix-free by Jacobi-preconditioned conjugate gradients. The same
forward-difference stencil extracts realized tilts for error reporting, so
the report measures optimization error rather than stencil mismatch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .model import DisplayConfig, ValidationError
from .tilt import TiltField

DEFAULT_EPSILON = 1e-3


class PhaseSolveError(RuntimeError):
    """Conjugate gradients failed to reach the requested residual."""

    def __init__(self, residual: float, iterations: int):
        self.residual = residual
        self.iterations = iterations
        super().__init__(
            f"phase solve did not converge: relative residual {residual:.3e} "
            f"after {iterations} iterations"
        )


@dataclass(frozen=True)
class PhaseMap:
    """Unwrapped phase surface on the modulator's pixel-corner grid."""

    phi: np.ndarray  # (n_y+1, n_x+1) radians
    pitch: float  # meters
    wavelength: float  # meters

    def __post_init__(self):
        phi = np.asarray(self.phi, dtype=np.float64)
        object.__setattr__(self, "phi", phi)
        if phi.ndim != 2:
            raise ValidationError(f"phase grid must be 2-D, got shape {phi.shape}")
        if not np.all(np.isfinite(phi)):
            raise ValidationError("phase values must be finite")
        if self.pitch <= 0 or self.wavelength <= 0:
            raise ValidationError("pitch and wavelength must be positive")

    @property
    def wave_number(self) -> float:
        return 2.0 * math.pi / self.wavelength

    def gradient(self) -> np.ndarray:
        """Per-pixel forward-difference gradient, shape (n_y, n_x, 2) in rad/m."""
        gx = (self.phi[:-1, 1:] - self.phi[:-1, :-1]) / self.pitch
        gy = (self.phi[1:, :-1] - self.phi[:-1, :-1]) / self.pitch
        return np.stack([gx, gy], axis=-1)

    def realized_tilt(self) -> np.ndarray:
        """Tilt (radians, per pixel) actually produced by this phase surface."""
        return self.gradient() / self.wave_number


@dataclass(frozen=True)
class TiltErrorReport:
    """How far realized tilts deviate from the requested field."""

    error_map: np.ndarray  # (n_y, n_x) |realized - target| in radians
    mean_all: float
    mean_boundary: float
    boundary_band_px: int
    max_error: float

    def as_row(self) -> dict:
        deg = 180.0 / math.pi
        return {
            "mean_all_deg": self.mean_all * deg,
            "mean_boundary_deg": self.mean_boundary * deg,
            "max_deg": self.max_error * deg,
        }


def max_cone_radius(config: DisplayConfig) -> float:
    """Largest cone half-angle the modulator can steer: pi/(2 k pitch)."""
    return config.max_cone_radius


def tilt_to_gradient_targets(field: TiltField, config: DisplayConfig) -> np.ndarray:
    """Phase-gradient targets g = k * du for the merged display tilt grid.

    Shape (n_y, n_x, 2) in rad/m. Realizing grad(phi) = g reproduces the
    tilt, since du = (1/k) grad(phi).
    """
    tilt, _ = field.merged()
    ny, nx = tilt.shape[:2]
    if (nx, ny) != config.resolution:
        raise ValidationError(
            f"tilt field {(nx, ny)} does not match config resolution {config.resolution}"
        )
    return config.wave_number * tilt


def _apply_normal_operator(phi: np.ndarray, pitch: float, eps: float) -> np.ndarray:
    """(D^T D + eps I) phi for the forward-difference gradient operator."""
    inv = 1.0 / pitch
    gx = (phi[:-1, 1:] - phi[:-1, :-1]) * inv
    gy = (phi[1:, :-1] - phi[:-1, :-1]) * inv
    out = eps * phi
    # adjoint of D_x: scatter each per-pixel difference back to its two nodes
    out[:-1, 1:] += gx * inv
    out[:-1, :-1] -= gx * inv
    out[1:, :-1] += gy * inv
    out[:-1, :-1] -= gy * inv
    return out


def _gradient_adjoint(gx: np.ndarray, gy: np.ndarray, shape, pitch: float) -> np.ndarray:
    out = np.zeros(shape)
    inv = 1.0 / pitch
    out[:-1, 1:] += gx * inv
    out[:-1, :-1] -= gx * inv
    out[1:, :-1] += gy * inv
    out[:-1, :-1] -= gy * inv
    return out


def _project_kernel(phi: np.ndarray) -> np.ndarray:
    """Remove the gradient operator's null space from a solution.

    The forward-difference pair never references the bottom-right corner
    node, so the kernel is span{constant-on-the-rest, corner}. The exact
    minimizer is orthogonal to both (the right-hand side is), which makes
    its global mean zero; this projection restores that after iterative
    solves whose preconditioning lets the near-null modes drift.
    """
    out = phi.copy()
    n = phi.size
    rest_mean = (phi.sum() - phi[-1, -1]) / (n - 1)
    out -= rest_mean
    out[-1, -1] = 0.0
    return out


def _operator_diagonal(shape, pitch: float, eps: float) -> np.ndarray:
    ny1, nx1 = shape
    inv2 = 1.0 / pitch**2
    cx = np.zeros(shape)
    cx[: ny1 - 1, : nx1 - 1] += 1.0  # node is the left end of a D_x stencil
    cx[: ny1 - 1, 1:] += 1.0  # node is the right end
    cy = np.zeros(shape)
    cy[: ny1 - 1, : nx1 - 1] += 1.0
    cy[1:, : nx1 - 1] += 1.0
    return (cx + cy) * inv2 + eps


def solve_phase(
    targets: np.ndarray,
    epsilon: float,
    config: DisplayConfig,
    rel_tol: float = 1e-10,
    max_iter: int | None = None,
) -> PhaseMap:
    """Least-squares phase surface whose gradient matches the targets.

    ``targets`` is (n_y, n_x, 2) in rad/m. Returns the minimizer of the
    screened objective, gauge-fixed to zero mean (the exact minimizer already
    has zero mean because constants are in the null space of D). The default
    tolerance runs past the guaranteed 1e-8 relative residual so the phase
    error tracks the dense direct solution well below it. Raises
    :class:`PhaseSolveError` if conjugate gradients do not reach ``rel_tol``
    within the iteration cap of 10 * (n_x + n_y).
    """
    targets = np.asarray(targets, dtype=np.float64)
    if targets.ndim != 3 or targets.shape[2] != 2:
        raise ValidationError(f"targets must be (n_y, n_x, 2), got {targets.shape}")
    if not np.all(np.isfinite(targets)):
        raise ValidationError("targets must be finite")
    if epsilon <= 0:
        raise ValidationError("epsilon must be positive")
    ny, nx = targets.shape[:2]
    pitch = config.slm_pitch
    shape = (ny + 1, nx + 1)
    b = _gradient_adjoint(targets[:, :, 0], targets[:, :, 1], shape, pitch)

    if max_iter is None:
        max_iter = 10 * (nx + ny)
    diag = _operator_diagonal(shape, pitch, epsilon)
    phi = np.zeros(shape)
    r = b - _apply_normal_operator(phi, pitch, epsilon)
    z = r / diag
    p = z.copy()
    rz = float(np.vdot(r, z).real)
    b_norm = float(np.linalg.norm(b))
    if b_norm == 0.0:
        return PhaseMap(phi=phi, pitch=pitch, wavelength=config.wavelength)
    residual = float(np.linalg.norm(r)) / b_norm
    it = 0
    while residual > rel_tol and it < max_iter:
        Ap = _apply_normal_operator(p, pitch, epsilon)
        alpha = rz / float(np.vdot(p, Ap).real)
        phi += alpha * p
        r -= alpha * Ap
        residual = float(np.linalg.norm(r)) / b_norm
        z = r / diag
        rz_new = float(np.vdot(r, z).real)
        p = z + (rz_new / rz) * p
        rz = rz_new
        it += 1
    if residual > rel_tol:
        raise PhaseSolveError(residual=residual, iterations=it)
    phi = _project_kernel(phi)
    return PhaseMap(phi=phi, pitch=pitch, wavelength=config.wavelength)


def dense_solve_phase(targets: np.ndarray, epsilon: float, config: DisplayConfig) -> PhaseMap:
    """Direct dense solve of the same normal equations; oracle for small grids."""
    targets = np.asarray(targets, dtype=np.float64)
    ny, nx = targets.shape[:2]
    if (ny + 1) * (nx + 1) > 40_000:
        raise ValidationError("dense solve is an oracle for small grids only")
    pitch = config.slm_pitch
    shape = (ny + 1, nx + 1)
    n = shape[0] * shape[1]
    A = np.zeros((n, n))
    eye = np.eye(n)
    for j in range(n):
        A[:, j] = _apply_normal_operator(eye[:, j].reshape(shape), pitch, epsilon).ravel()
    b = _gradient_adjoint(targets[:, :, 0], targets[:, :, 1], shape, pitch).ravel()
    phi = _project_kernel(np.linalg.solve(A, b).reshape(shape))
    return PhaseMap(phi=phi, pitch=pitch, wavelength=config.wavelength)


def objective_value(phase: PhaseMap, targets: np.ndarray, epsilon: float) -> float:
    """Value of the screened least-squares objective for a given phase."""
    g = phase.gradient()
    resid = g - targets
    return float(np.sum(resid**2) + epsilon * np.sum(phase.phi**2))


def check_nyquist(phase: PhaseMap, tol: float = 1e-9) -> list[tuple[tuple[int, int], tuple[int, int]]]:
    """Neighbor pairs whose phase step exceeds pi (modulator aliasing).

    The bound is inclusive: a ramp of exactly pi per pixel is representable.
    ``tol`` absorbs floating-point noise in constructed ramps. Returns a list
    of ((row, col), (row2, col2)) node index pairs; empty means displayable.
    """
    phi = phase.phi
    pairs: list[tuple[tuple[int, int], tuple[int, int]]] = []
    dx = np.abs(np.diff(phi, axis=1))
    rows, cols = np.nonzero(dx > math.pi + tol)
    pairs.extend((((int(r), int(c)), (int(r), int(c) + 1))) for r, c in zip(rows, cols))
    dy = np.abs(np.diff(phi, axis=0))
    rows, cols = np.nonzero(dy > math.pi + tol)
    pairs.extend((((int(r), int(c)), (int(r) + 1, int(c)))) for r, c in zip(rows, cols))
    return pairs


def wrap_phase(phase: PhaseMap, global_offset: float = 0.0) -> PhaseMap:
    """(phi + offset) mod 2*pi. Diagnostic view of what the modulator shows.

    The geometric simulation always uses the unwrapped surface; wrapping only
    matters for previews and for studying wrap-seam placement under a global
    offset.
    """
    wrapped = np.mod(phase.phi + global_offset, 2.0 * math.pi)
    return PhaseMap(phi=wrapped, pitch=phase.pitch, wavelength=phase.wavelength)


def unwrap_gradient(phase: PhaseMap) -> np.ndarray:
    """Per-pixel gradient of a wrapped phase using nearest-2*pi-branch steps."""
    two_pi = 2.0 * math.pi
    dx = phase.phi[:-1, 1:] - phase.phi[:-1, :-1]
    dy = phase.phi[1:, :-1] - phase.phi[:-1, :-1]
    dx = (dx + math.pi) % two_pi - math.pi
    dy = (dy + math.pi) % two_pi - math.pi
    return np.stack([dx, dy], axis=-1) / phase.pitch


def boundary_band(flags: np.ndarray, band_px: int) -> np.ndarray:
    """Pixels within band_px (Euclidean) of a flag discontinuity."""
    diff = np.zeros(flags.shape, dtype=bool)
    diff[:, :-1] |= flags[:, :-1] != flags[:, 1:]
    diff[:, 1:] |= flags[:, :-1] != flags[:, 1:]
    diff[:-1, :] |= flags[:-1, :] != flags[1:, :]
    diff[1:, :] |= flags[:-1, :] != flags[1:, :]
    if not diff.any():
        return diff
    dist = ndimage.distance_transform_edt(~diff)
    return dist <= band_px


def tilt_error_report(
    phase: PhaseMap,
    field: TiltField,
    band_px: int = 5,
    config: DisplayConfig | None = None,
) -> TiltErrorReport:
    """Compare tilts realized by the phase surface against the requested field.

    The error map is the per-pixel magnitude of (realized - target) tilt;
    ``mean_boundary`` averages it over pixels within ``band_px`` of a flag
    discontinuity in the merged field, where tilt jumps concentrate the
    optimization error.
    """
    target, flags = field.merged()
    realized = phase.realized_tilt()
    if realized.shape != target.shape:
        raise ValidationError(
            f"phase pixel grid {realized.shape[:2]} does not match field {target.shape[:2]}"
        )
    err = np.hypot(*(realized - target).transpose(2, 0, 1))
    band = boundary_band(flags, band_px)
    mean_boundary = float(err[band].mean()) if band.any() else 0.0
    return TiltErrorReport(
        error_map=err,
        mean_all=float(err.mean()),
        mean_boundary=mean_boundary,
        boundary_band_px=band_px,
        max_error=float(err.max()),
    )
