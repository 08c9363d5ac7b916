import numpy as np
import pytest

import conetilt as ct
from conetilt.scenes import ramp_plane_depths


class TestGenerators:
    def test_unknown_name_rejected(self, default_config):
        with pytest.raises(ct.ValidationError, match="unknown scene generator"):
            ct.generate_scene("nope", default_config)

    def test_disc_text_has_two_occupied_planes(self, text_scene_bundle):
        cfg, scene, clean, field = text_scene_bundle
        assert len(scene.stack.planes) == 2
        assert all(p.occupancy.any() for p in scene.stack.planes)
        assert scene.regions["glyphs"].sum() > 0
        # the glyphs hide inside the occluder silhouette
        assert np.all(scene.regions["silhouette"][scene.regions["glyphs"]])

    def test_depth_ramp_assigns_every_pixel_once(self):
        cfg = ct.DisplayConfig(plane_depths=ramp_plane_depths(40), resolution=(64, 64))
        scene = ct.generate_scene("depth_ramp", cfg)
        assert len(scene.stack.planes) == 40
        total = np.sum([p.occupancy for p in scene.stack.planes], axis=0)
        assert np.all(total == 1)

    def test_ramp_plane_depths_uniform_in_diopters(self):
        depths = ramp_plane_depths(40)
        diopt = sorted(1.0 / np.array(depths))
        steps = np.diff(diopt)
        assert len(depths) == 40
        assert np.allclose(steps, 4.0 / 39.0, atol=1e-9)

    def test_bars_spacing_scales_with_gap_factor(self, default_config):
        sub = ct.generate_scene("bars", default_config, gap_factor=0.5)
        wide = ct.generate_scene("bars", default_config, gap_factor=2.0)
        w = ct.min_occluder_separation(
            default_config.plane_depths[0], default_config.plane_depths[-1], default_config
        )
        assert sub.params["gap_px"] == round(0.5 * w)
        assert wide.params["gap_px"] == round(2.0 * w)
        assert sub.regions["gaps"].any()
        assert not (sub.regions["gaps"] & sub.regions["silhouette"]).any()

    def test_silhouette_scene_consistency(self, disc_scene_bundle):
        cfg, scene, clean, field = disc_scene_bundle
        sil = scene.regions["silhouette"]
        assert np.array_equal(scene.stack.planes[0].occupancy, sil)
        # back plane carries content behind the occluder (unlike the RGB-D view)
        assert scene.stack.planes[1].occupancy[sil].all()
        front_diopt = 1.0 / cfg.plane_depths[0]
        assert np.all(scene.rgbd.depth_diopters[sil] == front_diopt)

    def test_generators_are_deterministic(self, default_config):
        a = ct.generate_scene("silhouette", default_config)
        b = ct.generate_scene("silhouette", default_config)
        assert np.array_equal(a.rgbd.intensity, b.rgbd.intensity)
        assert np.array_equal(a.stack.planes[1].intensity, b.stack.planes[1].intensity)
