"""Report figures written next to the delimited metric outputs."""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .phase import PhaseMap, wrap_phase
from .tilt import FLAG_NAMES, TiltField


def save_contrast_scatter(path, scatter_by_mode: dict, max_points: int = 4000) -> None:
    """Foreground intensity with vs without background, one panel per mode."""
    modes = list(scatter_by_mode)
    fig, axes = plt.subplots(1, len(modes), figsize=(4.2 * len(modes), 4.2), squeeze=False)
    for ax, mode in zip(axes[0], modes):
        points, r = scatter_by_mode[mode]
        pts = points
        if len(pts) > max_points:
            step = len(pts) // max_points
            pts = pts[::step]
        ax.plot([0, 1], [0, 1], color="0.6", lw=1.0, label="ideal (y = x)")
        ax.scatter(pts[:, 0], pts[:, 1], s=3, alpha=0.35, edgecolors="none")
        ax.set_xlim(0, 1)
        ax.set_ylim(0, max(1.0, pts[:, 1].max() * 1.05))
        ax.set_xlabel("foreground only")
        ax.set_ylabel("with background")
        ax.set_title(f"{mode} (r = {r:.4f})")
        ax.legend(loc="upper left", frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=140)
    plt.close(fig)


def save_halo_profiles(path, profiles_by_mode: dict) -> None:
    """Mean intensity offset vs signed distance to the occluding edge."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for mode, profile in profiles_by_mode.items():
        ax.plot(profile.distance_px, profile.mean_delta, marker=".", lw=1.2, label=mode)
    ax.axhline(0.0, color="0.7", lw=0.8)
    ax.axvline(0.0, color="0.7", lw=0.8)
    ax.set_xlabel("signed distance to edge (px, negative = occluder side)")
    ax.set_ylabel("mean(render - reality)")
    ax.set_title("halo profile")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=140)
    plt.close(fig)


def save_tilt_maps(path, field: TiltField, plane: int | None = None) -> None:
    """Tilt magnitude and feasibility flags, one row per (selected) plane."""
    planes = [plane] if plane is not None else [p for p in range(field.plane_count)]
    planes = [p for p in planes if np.any(field.flags[p] != 0) or len(planes) == 1]
    if not planes:
        planes = [field.plane_count - 1]
    fig, axes = plt.subplots(len(planes), 2, figsize=(9.0, 4.2 * len(planes)), squeeze=False)
    for row, p in enumerate(planes):
        mag = field.magnitude(p) * 1e3
        im = axes[row][0].imshow(mag, cmap="viridis")
        axes[row][0].set_title(f"plane {p} (z = {field.depths[p]:.3g} m): |tilt| (mrad)")
        fig.colorbar(im, ax=axes[row][0], fraction=0.046)
        fl = axes[row][1].imshow(field.flags[p], cmap="magma", vmin=0, vmax=3)
        axes[row][1].set_title("flags: " + ", ".join(f"{k}={v}" for k, v in FLAG_NAMES.items()))
        fig.colorbar(fl, ax=axes[row][1], fraction=0.046)
    for ax in fig.axes:
        if hasattr(ax, "set_xticks"):
            ax.set_xticks([])
            ax.set_yticks([])
    fig.tight_layout()
    fig.savefig(path, dpi=140)
    plt.close(fig)


def save_phase_preview(path, phase: PhaseMap) -> None:
    """Wrapped phase surface as the modulator would display it."""
    wrapped = wrap_phase(phase).phi
    fig, ax = plt.subplots(figsize=(5.4, 4.6))
    im = ax.imshow(wrapped, cmap="twilight", vmin=0.0, vmax=2.0 * math.pi)
    ax.set_title("wrapped phase (rad)")
    ax.set_xticks([])
    ax.set_yticks([])
    fig.colorbar(im, ax=ax, fraction=0.046)
    fig.tight_layout()
    fig.savefig(path, dpi=140)
    plt.close(fig)


def save_metric_trends(path, rows: list[dict]) -> None:
    """PSNR and SSIM against pupil offset, one line per mode."""
    modes = sorted({row["mode"] for row in rows})
    fig, axes = plt.subplots(1, 2, figsize=(9.5, 4.0))
    for mode in modes:
        sel = sorted((r for r in rows if r["mode"] == mode), key=lambda r: r["pupil_offset_x_mm"])
        xs = [r["pupil_offset_x_mm"] for r in sel]
        axes[0].plot(xs, [r["psnr_db"] for r in sel], marker="o", label=mode)
        axes[1].plot(xs, [r["ssim"] for r in sel], marker="o", label=mode)
    axes[0].set_xlabel("pupil offset (mm)")
    axes[0].set_ylabel("PSNR (dB)")
    axes[1].set_xlabel("pupil offset (mm)")
    axes[1].set_ylabel("SSIM")
    for ax in axes:
        ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=140)
    plt.close(fig)
