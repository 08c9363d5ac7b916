"""End-to-end pipeline: scene -> stack -> tilts -> phase -> renders -> metrics.

Each stage writes its artifacts under the output directory together with a
JSON record of the SHA-256 of every input that produced them, so stages can
be re-run in separate processes and reruns can be byte-compared. All float
imagery travels as PFM (lossless); PNGs are previews and masks.

Layout under ``--out``::

    manifest.json            resolved manifest + config
    scene/                   intensity.pfm, depth_diopters.pfm
    stack/                   plane_XX.pfm, plane_XX_occ.png, stack.json
    stack_clean/             the same after full-occlusion culling
    tilt/                    plane_XX_tilt_{x,y}.pfm, plane_XX_flags.png, tilt.json
    phase/                   phase.pfm, nyquist.json, tilt_error.csv, figures
    renders/                 {mode}_f{focus}m_px{offset}mm.pfm/.png, render_manifest.json
    metrics/                 metrics.csv, halo_{mode}.csv, figures
    summary.json
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from . import figures
from .fileio import (
    load_scene_manifest,
    read_pfm,
    read_png,
    sha256_file,
    write_json,
    write_pfm,
    write_png,
    write_preview_png,
)
from .metrics import MetricsReport, contrast_scatter, halo_profile, leakage_score, psnr, ssim
from .model import CameraView, DisplayConfig, FocalPlane, FocalStack, SceneRGBD, ValidationError
from .phase import (
    DEFAULT_EPSILON,
    PhaseMap,
    check_nyquist,
    solve_phase,
    tilt_error_report,
    tilt_to_gradient_targets,
    wrap_phase,
)
from .render import RenderMode, render, render_reality_reference
from .scenes import generate_scene
from .tilt import (
    FLAG_NAMES,
    TiltField,
    apply_infeasible_policy,
    compute_tilt_field,
    remove_fully_occluded,
)

STAGES = ("discretize", "tilt", "phase", "render", "metrics")


@dataclass
class PipelineManifest:
    """Everything needed to reproduce a pipeline run."""

    config: DisplayConfig
    out_dir: Path
    scene_path: str | None = None
    generator: str | None = None
    generator_params: dict = field(default_factory=dict)
    stages: tuple[str, ...] = STAGES
    modes: tuple[str, ...] = ("reality", "multifocal", "conetilt")
    pupil_offsets_mm: tuple[float, ...] = (-0.5, 0.5)
    focus_depths_m: tuple[float, ...] | None = None
    pupil_radius_mm: float = 0.4
    samples: int = 256
    seed: int = 0

    def __post_init__(self):
        self.out_dir = Path(self.out_dir)
        self.stages = tuple(self.stages)
        self.modes = tuple(RenderMode(m).value for m in self.modes)
        unknown = [s for s in self.stages if s not in STAGES]
        if unknown:
            raise ValidationError(f"unknown stages {unknown}; valid: {STAGES}")
        idx = [STAGES.index(s) for s in self.stages]
        if sorted(idx) != idx or len(set(idx)) != len(idx):
            raise ValidationError(f"stages must follow the order {STAGES}")
        if idx and idx != list(range(idx[0], idx[-1] + 1)):
            raise ValidationError("stages must be contiguous in the pipeline order")
        if (self.scene_path is None) == (self.generator is None):
            raise ValidationError("exactly one of scene_path or generator must be given")
        if self.focus_depths_m is None:
            self.focus_depths_m = (self.config.plane_depths[0],)
        self.focus_depths_m = tuple(float(f) for f in self.focus_depths_m)
        self.pupil_offsets_mm = tuple(float(v) for v in self.pupil_offsets_mm)

    def as_dict(self) -> dict:
        from dataclasses import asdict

        d = asdict(self.config)
        return {
            "config": d,
            "scene_path": self.scene_path,
            "generator": self.generator,
            "generator_params": self.generator_params,
            "stages": list(self.stages),
            "modes": list(self.modes),
            "pupil_offsets_mm": list(self.pupil_offsets_mm),
            "focus_depths_m": list(self.focus_depths_m),
            "pupil_radius_mm": self.pupil_radius_mm,
            "samples": self.samples,
            "seed": self.seed,
        }


def _camera(manifest: PipelineManifest, offset_mm: float, focus: float) -> CameraView:
    return CameraView(
        pupil_center=(offset_mm * 1e-3, 0.0),
        pupil_radius=manifest.pupil_radius_mm * 1e-3,
        focus_depth=focus,
        samples_per_pixel=manifest.samples,
    )


def _write_stack(dirpath: Path, stack: FocalStack, inputs: dict) -> dict:
    dirpath.mkdir(parents=True, exist_ok=True)
    outputs = {}
    for i, plane in enumerate(stack.planes):
        pfm = dirpath / f"plane_{i:02d}.pfm"
        write_pfm(pfm, plane.intensity)
        occ = dirpath / f"plane_{i:02d}_occ.png"
        write_png(occ, plane.occupancy.astype(np.uint8) * 255)
        outputs[pfm.name] = sha256_file(pfm)
        outputs[occ.name] = sha256_file(occ)
    meta = {
        "depths_m": list(stack.depths),
        "channels": stack.channel_count,
        "inputs": inputs,
        "outputs": outputs,
    }
    write_json(dirpath / "stack.json", meta)
    return outputs


def _load_stack(dirpath: Path) -> FocalStack:
    meta = json.loads((dirpath / "stack.json").read_text())
    planes = []
    for i, depth in enumerate(meta["depths_m"]):
        inten = read_pfm(dirpath / f"plane_{i:02d}.pfm")
        if inten.ndim == 2:
            inten = inten[:, :, None]
        occ = read_png(dirpath / f"plane_{i:02d}_occ.png") >= 0.5
        planes.append(FocalPlane(depth=depth, intensity=np.where(occ[:, :, None], inten, 0.0), occupancy=occ))
    return FocalStack(planes=tuple(planes))


def _write_field(dirpath: Path, fld: TiltField, inputs: dict) -> None:
    dirpath.mkdir(parents=True, exist_ok=True)
    outputs = {}
    for p in range(fld.plane_count):
        fx = dirpath / f"plane_{p:02d}_tilt_x.pfm"
        fy = dirpath / f"plane_{p:02d}_tilt_y.pfm"
        fp = dirpath / f"plane_{p:02d}_flags.png"
        write_pfm(fx, fld.tilts[p, :, :, 0])
        write_pfm(fy, fld.tilts[p, :, :, 1])
        write_png(fp, fld.flags[p])
        for f in (fx, fy, fp):
            outputs[f.name] = sha256_file(f)
    counts = {name: int(np.sum(fld.flags == code)) for code, name in FLAG_NAMES.items()}
    write_json(
        dirpath / "tilt.json",
        {"depths_m": list(fld.depths), "flag_counts": counts, "inputs": inputs, "outputs": outputs},
    )


def _load_field(dirpath: Path) -> TiltField:
    meta = json.loads((dirpath / "tilt.json").read_text())
    depths = meta["depths_m"]
    tilts, flags = [], []
    for p in range(len(depths)):
        tx = read_pfm(dirpath / f"plane_{p:02d}_tilt_x.pfm")
        ty = read_pfm(dirpath / f"plane_{p:02d}_tilt_y.pfm")
        fl = np.asarray(
            np.round(read_png(dirpath / f"plane_{p:02d}_flags.png") * 255.0), dtype=np.uint8
        )
        tilts.append(np.stack([tx, ty], axis=-1))
        flags.append(fl)
    return TiltField(tilts=np.stack(tilts), flags=np.stack(flags), depths=tuple(depths))


def _render_name(mode: str, focus: float, offset_mm: float) -> str:
    return f"{mode}_f{focus:g}m_px{offset_mm:+.2f}mm"


class _State:
    """Artifacts shared between stages, loaded lazily from disk when a stage
    starts mid-pipeline."""

    def __init__(self, manifest: PipelineManifest):
        self.manifest = manifest
        self.out = manifest.out_dir
        self.scene: SceneRGBD | None = None
        self.regions: dict = {}
        self.stack: FocalStack | None = None
        self.clean_stack: FocalStack | None = None
        self.display_stack: FocalStack | None = None
        self.field: TiltField | None = None
        self.phase: PhaseMap | None = None

    def need_scene(self) -> SceneRGBD:
        if self.scene is None:
            sdir = self.out / "scene"
            inten = read_pfm(sdir / "intensity.pfm")
            depth = read_pfm(sdir / "depth_diopters.pfm")
            self.scene = SceneRGBD(intensity=inten, depth_diopters=depth)
        return self.scene

    def need_stack(self) -> FocalStack:
        if self.stack is None:
            self.stack = _load_stack(self.out / "stack")
        return self.stack

    def need_clean_stack(self) -> FocalStack:
        if self.clean_stack is None:
            self.clean_stack = _load_stack(self.out / "stack_clean")
        return self.clean_stack

    def need_display_stack(self) -> FocalStack:
        if self.display_stack is None:
            self.display_stack = apply_infeasible_policy(
                self.need_clean_stack(), self.need_field(), self.manifest.config
            )
        return self.display_stack

    def need_field(self) -> TiltField:
        if self.field is None:
            self.field = _load_field(self.out / "tilt")
        return self.field

    def need_phase(self) -> PhaseMap:
        if self.phase is None:
            phi = read_pfm(self.out / "phase" / "phase.pfm")
            self.phase = PhaseMap(
                phi=phi, pitch=self.manifest.config.slm_pitch, wavelength=self.manifest.config.wavelength
            )
        return self.phase


def _stage_discretize(state: _State) -> dict:
    m = state.manifest
    if m.generator is not None:
        gen = generate_scene(m.generator, m.config, **m.generator_params)
        state.scene = gen.rgbd
        state.stack = gen.stack
        state.regions = gen.regions
        scene_inputs = {"generator": m.generator, "params": json.dumps(m.generator_params, sort_keys=True)}
    else:
        state.scene = load_scene_manifest(m.scene_path)
        from .model import discretize_scene

        state.stack = discretize_scene(state.scene, m.config)
        scene_inputs = {"scene_manifest": sha256_file(m.scene_path)}
    sdir = state.out / "scene"
    sdir.mkdir(parents=True, exist_ok=True)
    write_pfm(sdir / "intensity.pfm", state.scene.intensity)
    write_pfm(sdir / "depth_diopters.pfm", state.scene.depth_diopters)
    scene_inputs["intensity.pfm"] = sha256_file(sdir / "intensity.pfm")
    scene_inputs["depth_diopters.pfm"] = sha256_file(sdir / "depth_diopters.pfm")
    outputs = _write_stack(state.out / "stack", state.stack, scene_inputs)
    return {"planes": len(state.stack.planes), "files": len(outputs)}


def _stage_tilt(state: _State) -> dict:
    m = state.manifest
    stack = state.need_stack()
    inputs = {"stack": json.loads((state.out / "stack" / "stack.json").read_text())["outputs"]}
    clean = remove_fully_occluded(stack, m.config)
    removed = np.stack(
        [orig.occupancy & ~cl.occupancy for orig, cl in zip(stack.planes, clean.planes)]
    )
    fld = compute_tilt_field(clean, m.config).with_removed(removed)
    state.clean_stack = clean
    state.field = fld
    state.display_stack = apply_infeasible_policy(clean, fld, m.config)
    _write_stack(state.out / "stack_clean", clean, inputs)
    _write_field(state.out / "tilt", fld, inputs)
    figures.save_tilt_maps(state.out / "tilt" / "tilt_maps.png", fld)
    return {name: int(np.sum(fld.flags == code)) for code, name in FLAG_NAMES.items()}


def _stage_phase(state: _State) -> dict:
    m = state.manifest
    fld = state.need_field()
    targets = tilt_to_gradient_targets(fld, m.config)
    phase = solve_phase(targets, DEFAULT_EPSILON, m.config)
    state.phase = phase
    pdir = state.out / "phase"
    pdir.mkdir(parents=True, exist_ok=True)
    write_pfm(pdir / "phase.pfm", phase.phi)
    wrapped = wrap_phase(phase).phi
    write_png(pdir / "phase_wrapped.png", np.round(wrapped / (2 * math.pi) * 255.0))
    violations = check_nyquist(phase)
    report = tilt_error_report(phase, fld, band_px=5, config=m.config)
    write_pfm(pdir / "tilt_error_map.pfm", report.error_map)
    inputs = {"tilt": json.loads((state.out / "tilt" / "tilt.json").read_text())["outputs"]}
    write_json(
        pdir / "nyquist.json",
        {
            "violations": len(violations),
            "first_violations": [list(map(list, v)) for v in violations[:32]],
            "inputs": inputs,
        },
    )
    with open(pdir / "tilt_error.csv", "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=["mean_all_deg", "mean_boundary_deg", "max_deg"])
        writer.writeheader()
        writer.writerow({k: f"{v:.9g}" for k, v in report.as_row().items()})
    figures.save_phase_preview(pdir / "phase_preview.png", phase)
    return {
        "nyquist_violations": len(violations),
        "mean_error_deg": report.mean_all * 180.0 / math.pi,
        "mean_boundary_error_deg": report.mean_boundary * 180.0 / math.pi,
    }


def _stage_render(state: _State) -> dict:
    m = state.manifest
    rdir = state.out / "renders"
    rdir.mkdir(parents=True, exist_ok=True)
    stack = state.need_stack()
    entries = {}
    stack_hashes = json.loads((state.out / "stack" / "stack.json").read_text())["outputs"]
    for mode in m.modes:
        mode = RenderMode(mode)
        if mode is RenderMode.CONETILT:
            content, fld = state.need_display_stack(), state.need_field()
        else:
            content, fld = stack, None
        for focus in m.focus_depths_m:
            for off in m.pupil_offsets_mm:
                cam = _camera(m, off, focus)
                img = render(content, fld, cam, mode, m.config, seed=m.seed)
                name = _render_name(mode.value, focus, off)
                write_pfm(rdir / f"{name}.pfm", img.data)
                write_preview_png(rdir / f"{name}.png", img.data)
                entries[name] = {
                    "mode": mode.value,
                    "focus_m": focus,
                    "pupil_offset_mm": [off, 0.0],
                    "pupil_radius_mm": m.pupil_radius_mm,
                    "samples": m.samples,
                    "seed": m.seed,
                    "inputs": stack_hashes,
                    "pfm_sha256": sha256_file(rdir / f"{name}.pfm"),
                }
    write_json(rdir / "render_manifest.json", entries)
    return {"renders": len(entries)}


def _stage_metrics(state: _State) -> dict:
    m = state.manifest
    mdir = state.out / "metrics"
    mdir.mkdir(parents=True, exist_ok=True)
    scene = state.need_scene()
    stack = state.need_stack()
    front_occ = stack.planes[0].occupancy
    fg_mask = ndimage.binary_erosion(front_occ, iterations=2) if front_occ.any() else front_occ
    rows = []
    halos = {}
    scatters = {}
    modes = [RenderMode(v) for v in m.modes if RenderMode(v) is not RenderMode.REALITY]
    rdir = state.out / "renders"
    front_only = FocalStack(planes=(stack.planes[0],))
    for focus in m.focus_depths_m:
        for off in m.pupil_offsets_mm:
            cam = _camera(m, off, focus)
            ref = np.clip(render_reality_reference(scene, cam, m.config, seed=m.seed).data, 0.0, 1.0)
            # the front plane is never tilted, so its background-free view is
            # the same in every display mode
            fg_only = render(front_only, None, cam, RenderMode.MULTIFOCAL, m.config, seed=m.seed)
            fg_img = np.clip(fg_only.data, 0.0, 1.0)
            for mode in modes:
                name = _render_name(mode.value, focus, off)
                pfm = rdir / f"{name}.pfm"
                if not pfm.exists():
                    raise ValidationError(f"render stage output missing: {pfm}")
                img = np.clip(read_pfm(pfm), 0.0, 1.0)
                if img.ndim == 2:
                    img = img[:, :, None]
                if fg_mask.sum() >= 2:
                    _, r = contrast_scatter(fg_img, img, fg_mask)
                    leak = leakage_score(fg_img, img, fg_mask)
                else:
                    r, leak = float("nan"), float("nan")
                report = MetricsReport(
                    psnr_db=psnr(img, ref), ssim=ssim(img, ref), pearson_r=r, leakage=leak
                )
                rows.append(
                    {
                        "scene": m.generator or Path(m.scene_path).stem,
                        "mode": mode.value,
                        "pupil_offset_x_mm": off,
                        "focus_m": focus,
                        **report.as_row(),
                    }
                )
                if off == m.pupil_offsets_mm[0] and focus == m.focus_depths_m[0]:
                    if front_occ.any() and not front_occ.all():
                        halos[mode.value] = halo_profile(img, front_occ, ref)
                    if fg_mask.sum() >= 2:
                        scatters[mode.value] = contrast_scatter(fg_img, img, fg_mask)
    with open(mdir / "metrics.csv", "w", newline="") as f:
        fieldnames = ["scene", "mode", "pupil_offset_x_mm", "focus_m", "psnr_db", "ssim", "pearson_r", "leakage"]
        writer = csv.DictWriter(f, fieldnames=fieldnames)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (f"{v:.9g}" if isinstance(v, float) else v) for k, v in row.items()})
    for mode_name, prof in halos.items():
        with open(mdir / f"halo_{mode_name}.csv", "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["distance_px", "mean_delta", "count"])
            for d, v, c in zip(prof.distance_px, prof.mean_delta, prof.counts):
                writer.writerow([f"{d:g}", f"{v:.9g}", c])
    if halos:
        figures.save_halo_profiles(mdir / "halo_profile.png", halos)
    if scatters:
        figures.save_contrast_scatter(mdir / "contrast_scatter.png", scatters)
    if rows:
        figures.save_metric_trends(mdir / "metric_trends.png", rows)
    return {"rows": len(rows)}


_STAGE_FUNCS = {
    "discretize": _stage_discretize,
    "tilt": _stage_tilt,
    "phase": _stage_phase,
    "render": _stage_render,
    "metrics": _stage_metrics,
}


def run_pipeline(manifest: PipelineManifest) -> dict:
    """Execute the manifest's stages in order; returns the summary dict.

    Raises :class:`ValidationError` for bad inputs and
    :class:`conetilt.phase.PhaseSolveError` for numerical failures; partial
    outputs stay on disk for inspection.
    """
    out = manifest.out_dir
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "manifest.json", manifest.as_dict())
    state = _State(manifest)
    summary = {"stages": {}}
    for stage in manifest.stages:
        summary["stages"][stage] = _STAGE_FUNCS[stage](state)
    write_json(out / "summary.json", summary)
    return summary
