"""Command-line entry point.

Example::

    conetilt --config config.json --generate disc_text \\
        --stages discretize,tilt,phase,render,metrics \\
        --mode reality,multifocal,conetilt \\
        --pupil-offsets -0.5,0.5 --focus 0.25 \\
        --samples 256 --seed 0 --out out/disc_text

Exit codes: 0 success, 1 validation failure, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import re
import sys

from .contours import ContourError
from .fileio import load_config
from .model import DisplayConfig, ValidationError
from .phase import PhaseSolveError
from .pipeline import STAGES, PipelineManifest, run_pipeline
from .render import RenderMode
from .scenes import ramp_plane_depths


def _csv_list(cast):
    def parse(text: str):
        return tuple(cast(v) for v in text.split(",") if v != "")

    return parse


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="conetilt",
        description="Simulate an occlusion-aware multifocal display: discretize a scene, "
        "tilt its light cones clear of occluders, synthesize the phase pattern, render "
        "finite-pupil views, and score them.",
    )
    # let values like "-0.5,0.5" pass as arguments rather than option strings
    parser._negative_number_matcher = re.compile(r"^-\d+\.?\d*(,-?\d+\.?\d*)*$")
    parser.add_argument("--config", help="DisplayConfig JSON (SI units); defaults apply if omitted")
    src = parser.add_mutually_exclusive_group(required=True)
    src.add_argument("--scene", help="scene manifest JSON (intensity/depth images)")
    src.add_argument(
        "--generate",
        metavar="NAME",
        help="procedural scene: disc_text, silhouette, depth_ramp, bars",
    )
    parser.add_argument(
        "--generator-args",
        default="{}",
        help="JSON dict of parameters for --generate (e.g. '{\"gap_factor\": 2.0}')",
    )
    parser.add_argument(
        "--stages",
        type=_csv_list(str),
        default=STAGES,
        help=f"comma list, contiguous in {','.join(STAGES)} (default: all)",
    )
    parser.add_argument(
        "--mode",
        type=_csv_list(str),
        default=("reality", "multifocal", "conetilt"),
        help="comma list of render modes: reality, multifocal, multifocal_no_occluded, conetilt",
    )
    parser.add_argument(
        "--pupil-offsets",
        type=_csv_list(float),
        default=(-0.5, 0.5),
        metavar="MM",
        help="comma list of lateral pupil offsets in millimeters (default -0.5,0.5)",
    )
    parser.add_argument(
        "--focus",
        type=_csv_list(float),
        default=None,
        metavar="M",
        help="comma list of camera focus depths in meters (default: nearest focal plane)",
    )
    parser.add_argument("--pupil-radius", type=float, default=0.4, metavar="MM", help="pupil radius (mm)")
    parser.add_argument("--samples", type=int, default=256, help="pupil samples per sensor pixel")
    parser.add_argument("--seed", type=int, default=0, help="render sampling seed")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument(
        "--infeasible",
        choices=("keep", "remove"),
        default="keep",
        help="display infeasible pixels with clamped tilts (keep) or blank them (remove)",
    )
    parser.add_argument(
        "--ramp-planes",
        type=int,
        default=None,
        metavar="N",
        help="override plane depths with N planes uniform in diopters over [0, 4] "
        "(the usual companion of --generate depth_ramp)",
    )
    return parser


def manifest_from_args(args) -> PipelineManifest:
    config = load_config(args.config) if args.config else DisplayConfig()
    if args.ramp_planes:
        config = config.with_planes(ramp_plane_depths(args.ramp_planes))
    if args.infeasible == "remove":
        from dataclasses import replace

        config = replace(config, remove_infeasible=True)
    for mode in args.mode:
        RenderMode(mode)  # validates the names early
    try:
        generator_params = json.loads(args.generator_args)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"--generator-args is not valid JSON: {exc}") from exc
    return PipelineManifest(
        config=config,
        out_dir=args.out,
        scene_path=args.scene,
        generator=args.generate,
        generator_params=generator_params,
        stages=args.stages,
        modes=args.mode,
        pupil_offsets_mm=args.pupil_offsets,
        focus_depths_m=args.focus,
        pupil_radius_mm=args.pupil_radius,
        samples=args.samples,
        seed=args.seed,
    )


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        manifest = manifest_from_args(args)
        summary = run_pipeline(manifest)
    except (ValidationError, ContourError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (PhaseSolveError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    for stage, info in summary["stages"].items():
        print(f"[{stage}] {json.dumps(info, sort_keys=True)}")
    print(f"outputs in {manifest.out_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
