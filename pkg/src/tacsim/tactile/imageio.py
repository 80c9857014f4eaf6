"""PNG input and output for tactile images and height maps."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from PIL import Image

from .heightmap import HeightMap, SensorPlane


def write_rgb_png(path, img) -> None:
    pixels = np.asarray(getattr(img, "pixels", img))
    if pixels.dtype != np.uint8 or pixels.ndim != 3 or pixels.shape[2] != 3:
        raise ValueError("expected an (h, w, 3) uint8 image")
    Image.fromarray(pixels, "RGB").save(path, format="PNG")


def read_image(path) -> np.ndarray:
    """8-bit image as uint8 (h, w) or (h, w, 3); alpha is dropped."""
    try:
        with Image.open(path) as im:
            im.load()
            if im.mode in ("RGBA", "P", "LA", "CMYK", "YCbCr"):
                im = im.convert("RGB")
            a = np.asarray(im)
    except (OSError, SyntaxError) as exc:
        raise OSError(f"cannot read image {path}: {exc}") from exc
    if a.dtype != np.uint8:
        raise ValueError(f"{path}: expected 8-bit image, got {a.dtype}")
    return a


def write_heightmap_png(path, hm: HeightMap, max_height: float | None = None) -> dict:
    """16-bit grayscale PNG plus ``<path>.json`` with the metres-per-unit scale.

    Masked-out pixels are stored as 0 and listed in the sidecar as such.
    """
    path = Path(path)
    top = float(hm.values[hm.mask].max()) if hm.mask.any() else 0.0
    max_height = max_height or top or 1.0
    scale = max_height / 65535.0
    q = np.clip(np.rint(hm.values / scale), 0, 65535).astype(np.uint16)
    q[~hm.mask] = 0
    Image.fromarray(q).save(path, format="PNG")
    meta = {"meters_per_unit": scale, "invalid_value": 0, "plane": hm.plane.to_dict()}
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return meta


def read_heightmap_png(path) -> HeightMap:
    path = Path(path)
    meta = json.loads(path.with_suffix(path.suffix + ".json").read_text())
    with Image.open(path) as im:
        q = np.asarray(im).astype(np.float64)
    p = meta["plane"]
    plane = SensorPlane(np.array(p["origin"]), np.array(p["u"]), np.array(p["v"]), p["pixel_size"],
                        p["width"], p["height"])
    mask = q != meta["invalid_value"]
    return HeightMap(q * meta["meters_per_unit"], mask, plane)
