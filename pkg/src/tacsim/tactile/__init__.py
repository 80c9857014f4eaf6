"""Sensor outputs: height maps, markers, pseudo images and image metrics."""

from dataclasses import dataclass

import numpy as np

from .heightmap import HeightMap, SensorPlane, front_triangles, rasterize_heightmap
from .imageio import read_heightmap_png, read_image, write_heightmap_png, write_rgb_png
from .markers import (
    MarkerSet, embed_markers, marker_displacements, marker_grid, marker_positions, write_marker_csv,
)
from .metrics import image_metrics, ssim, to_gray
from .shading import Light, TactileImage, composite_with_reference, ring_lights, shade_pseudo_image


@dataclass(frozen=True)
class TactileFrame:
    heightmap: HeightMap
    markers: np.ndarray | None = None
    image: TactileImage | None = None


__all__ = [
    "HeightMap", "Light", "MarkerSet", "SensorPlane", "TactileFrame", "TactileImage",
    "composite_with_reference", "embed_markers", "front_triangles", "image_metrics",
    "marker_displacements", "marker_grid", "marker_positions", "rasterize_heightmap",
    "read_heightmap_png", "read_image", "ring_lights", "shade_pseudo_image", "ssim", "to_gray",
    "write_heightmap_png", "write_marker_csv", "write_rgb_png",
]
