"""File formats: PFM images, PNG previews, scene manifests, config JSON.

PFM is the lossless interchange format for everything float-valued (images,
depth, tilt components, phase): 32-bit little-endian floats, bottom-up
scanlines, 'Pf' for one channel and 'PF' for three. PNG is preview/mask
only: 16-bit grayscale or 8-bit RGB, gamma 2.2 applied to radiance data.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict
from pathlib import Path

import numpy as np
from PIL import Image

from .model import DisplayConfig, SceneRGBD, ValidationError

GAMMA = 2.2


def write_pfm(path, data: np.ndarray) -> None:
    """Write a (H, W) or (H, W, C) float array as little-endian PFM."""
    data = np.asarray(data, dtype=np.float32)
    if data.ndim == 3 and data.shape[2] == 1:
        data = data[:, :, 0]
    if data.ndim == 2:
        header = b"Pf"
    elif data.ndim == 3 and data.shape[2] == 3:
        header = b"PF"
    else:
        raise ValidationError(f"PFM supports 1 or 3 channels, got shape {data.shape}")
    h, w = data.shape[:2]
    with open(path, "wb") as f:
        f.write(header + b"\n")
        f.write(f"{w} {h}\n".encode("ascii"))
        f.write(b"-1.0\n")  # negative scale marks little-endian
        f.write(np.flipud(data).astype("<f4").tobytes())


def read_pfm(path) -> np.ndarray:
    """Read a PFM file into (H, W) or (H, W, 3) float64."""
    with open(path, "rb") as f:
        header = f.readline().rstrip()
        if header == b"PF":
            channels = 3
        elif header == b"Pf":
            channels = 1
        else:
            raise ValidationError(f"{path}: not a PFM file (header {header!r})")
        dims = f.readline().split()
        w, h = int(dims[0]), int(dims[1])
        scale = float(f.readline())
        count = w * h * channels
        raw = f.read(count * 4)
        if len(raw) != count * 4:
            raise ValidationError(f"{path}: truncated PFM payload")
        dtype = "<f4" if scale < 0 else ">f4"
        data = np.frombuffer(raw, dtype=dtype).astype(np.float64)
    data = data.reshape((h, w, channels)) if channels == 3 else data.reshape((h, w))
    return np.flipud(data).copy()


def write_png(path, data: np.ndarray, bit_depth: int = 8) -> None:
    """Write integer image data (already scaled) as PNG via Pillow.

    Accepts (H, W) for grayscale at 8 or 16 bits, or (H, W, 3) for 8-bit RGB.
    """
    data = np.asarray(data)
    if data.ndim == 2:
        if bit_depth == 16:
            img = Image.fromarray(data.astype(np.uint16))  # mode I;16
        else:
            img = Image.fromarray(data.astype(np.uint8), mode="L")
    elif data.ndim == 3 and data.shape[2] == 3:
        if bit_depth != 8:
            raise ValidationError("RGB PNG export supports 8-bit only; use PFM for lossless color")
        img = Image.fromarray(data.astype(np.uint8), mode="RGB")
    else:
        raise ValidationError(f"unsupported PNG shape {data.shape}")
    img.save(path)


def write_preview_png(path, radiance: np.ndarray) -> None:
    """Gamma-2.2 preview of linear radiance: 16-bit gray or 8-bit RGB."""
    radiance = np.asarray(radiance, dtype=np.float64)
    if radiance.ndim == 3 and radiance.shape[2] == 1:
        radiance = radiance[:, :, 0]
    encoded = np.clip(radiance, 0.0, 1.0) ** (1.0 / GAMMA)
    if encoded.ndim == 2:
        write_png(path, np.round(encoded * 65535.0), bit_depth=16)
    else:
        write_png(path, np.round(encoded * 255.0), bit_depth=8)


def read_png(path) -> np.ndarray:
    """Read a PNG into linear-scale floats in [0, 1] (no gamma decode)."""
    img = Image.open(path)
    if img.mode in ("I;16", "I"):
        arr = np.asarray(img, dtype=np.float64) / 65535.0
    elif img.mode == "L":
        arr = np.asarray(img, dtype=np.float64) / 255.0
    elif img.mode in ("RGB", "RGBA"):
        arr = np.asarray(img.convert("RGB"), dtype=np.float64) / 255.0
    else:
        raise ValidationError(f"{path}: unsupported PNG mode {img.mode}")
    return arr


def read_image(path) -> np.ndarray:
    path = Path(path)
    if path.suffix.lower() == ".pfm":
        return read_pfm(path)
    return read_png(path)


def load_scene_manifest(path) -> SceneRGBD:
    """Load a scene from a JSON manifest.

    Expected fields: ``intensity`` (16-bit PNG or PFM path), ``depth`` (PFM
    path), ``depth_units`` ("diopters" or "meters"), ``channels`` (1 or 3).
    Paths are relative to the manifest.
    """
    path = Path(path)
    spec = json.loads(path.read_text())
    for key in ("intensity", "depth", "depth_units", "channels"):
        if key not in spec:
            raise ValidationError(f"scene manifest missing field {key!r}")
    intensity = read_image(path.parent / spec["intensity"])
    if intensity.ndim == 2:
        intensity = intensity[:, :, None]
    channels = int(spec["channels"])
    if intensity.shape[2] != channels:
        if channels == 1 and intensity.shape[2] == 3:
            intensity = intensity.mean(axis=2, keepdims=True)
        else:
            raise ValidationError(
                f"manifest declares {channels} channels but image has {intensity.shape[2]}"
            )
    depth = read_pfm(path.parent / spec["depth"])
    if depth.ndim == 3:
        depth = depth[:, :, 0]
    units = spec["depth_units"]
    if units == "diopters":
        diopt = depth
    elif units == "meters":
        if np.any(depth <= 0):
            raise ValidationError("metric depth must be strictly positive")
        diopt = 1.0 / depth
    else:
        raise ValidationError(f"depth_units must be 'diopters' or 'meters', got {units!r}")
    return SceneRGBD(intensity=intensity, depth_diopters=diopt)


def load_config(path) -> DisplayConfig:
    """DisplayConfig from a JSON file of SI-unit fields."""
    raw = json.loads(Path(path).read_text())
    kwargs = dict(raw)
    if "resolution" in kwargs:
        kwargs["resolution"] = tuple(int(v) for v in kwargs["resolution"])
    if "plane_depths" in kwargs:
        kwargs["plane_depths"] = tuple(float(v) for v in kwargs["plane_depths"])
    try:
        return DisplayConfig(**kwargs)
    except TypeError as exc:
        raise ValidationError(f"bad config field: {exc}") from exc


def save_config(path, config: DisplayConfig) -> None:
    Path(path).write_text(json.dumps(asdict(config), indent=2, sort_keys=True) + "\n")


def sha256_array(arr: np.ndarray) -> str:
    arr = np.ascontiguousarray(arr)
    h = hashlib.sha256()
    h.update(str(arr.dtype).encode())
    h.update(str(arr.shape).encode())
    h.update(arr.tobytes())
    return h.hexdigest()


def sha256_file(path) -> str:
    h = hashlib.sha256()
    h.update(Path(path).read_bytes())
    return h.hexdigest()


def write_json(path, payload) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
