import numpy as np
import pytest

import conetilt as ct


@pytest.fixture(scope="session")
def default_config():
    return ct.DisplayConfig()


@pytest.fixture(scope="session")
def small_config():
    return ct.DisplayConfig(resolution=(64, 64), plane_depths=(0.5, 1.0))


@pytest.fixture(scope="session")
def half_plane_setup():
    """Half-plane occluder with the contour exactly at x'' = 4.0 mm.

    With an even 256-pixel grid and a 16 um display pitch, cell edges on the
    0.25 m plane fall on integer multiples of 16e-6 * (0.25/0.058) m, and
    column 186's left edge lands at 58 of them = 4.0 mm exactly. The display
    pixel at column 190 sits at x = 1.0 mm.
    """
    cfg = ct.DisplayConfig(display_pitch=16e-6, resolution=(256, 256), plane_depths=(0.25, 1.0))
    front = np.zeros((256, 256), dtype=bool)
    front[:, 186:] = True
    back = np.ones((256, 256), dtype=bool)
    stack = ct.FocalStack(
        planes=(
            ct.FocalPlane(depth=0.25, intensity=np.where(front[:, :, None], 0.2, 0.0), occupancy=front),
            ct.FocalPlane(depth=1.0, intensity=np.full((256, 256, 1), 0.5), occupancy=back),
        )
    )
    return cfg, stack


@pytest.fixture(scope="session")
def half_plane_field(half_plane_setup):
    cfg, stack = half_plane_setup
    return ct.compute_tilt_field(stack, cfg)


@pytest.fixture(scope="session")
def disc_scene_bundle():
    """The opaque-disc two-plane scene with its processed display content."""
    cfg = ct.DisplayConfig()
    scene = ct.generate_scene("silhouette", cfg, radius_px=56, aspect=1.0, angle_deg=0.0)
    clean = ct.remove_fully_occluded(scene.stack, cfg)
    field = ct.compute_tilt_field(clean, cfg)
    return cfg, scene, clean, field


@pytest.fixture(scope="session")
def text_scene_bundle():
    cfg = ct.DisplayConfig()
    scene = ct.generate_scene("disc_text", cfg)
    clean = ct.remove_fully_occluded(scene.stack, cfg)
    field = ct.compute_tilt_field(clean, cfg)
    return cfg, scene, clean, field
