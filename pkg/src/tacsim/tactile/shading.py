"""Pseudo tactile images from a height map under coloured directional lights."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .heightmap import HeightMap


@dataclass(frozen=True)
class Light:
    direction: np.ndarray  # towards the light
    color: np.ndarray      # linear RGB intensity

    def __post_init__(self):
        d = np.asarray(self.direction, dtype=float)
        n = np.linalg.norm(d)
        if not n > 0:
            raise ValueError("light direction must be non-zero")
        object.__setattr__(self, "direction", d / n)
        object.__setattr__(self, "color", np.asarray(self.color, dtype=float))


@dataclass(frozen=True)
class TactileImage:
    pixels: np.ndarray  # (height, width, 3) uint8
    provenance: str = "raw_render"

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


def ring_lights(elevation_deg: float = 30.0, azimuths_deg=(0.0, 120.0, 240.0), intensity: float = 1.0):
    """Pure red, green and blue lights around the sensor."""
    el = np.radians(elevation_deg)
    colors = np.eye(3) * intensity
    return [Light(np.array([np.cos(el) * np.cos(np.radians(a)), np.cos(el) * np.sin(np.radians(a)), np.sin(el)]),
                  colors[k % 3]) for k, a in enumerate(azimuths_deg)]


def surface_normals(hm: HeightMap) -> np.ndarray:
    """Unit normals (height, width, 3) of the height field; flat outside the mask."""
    h = np.where(hm.mask, hm.values, 0.0)
    if h.shape[0] > 1 and h.shape[1] > 1:
        dv, du = np.gradient(h, hm.plane.pixel_size)
    else:
        dv = du = np.zeros_like(h)
    n = np.stack([-du, -dv, np.ones_like(h)], axis=-1)
    n[~hm.mask] = (0.0, 0.0, 1.0)
    return n / np.linalg.norm(n, axis=-1, keepdims=True)


def shade_pseudo_image(hm: HeightMap, lights, ambient=(0.0, 0.0, 0.0), diffuse: float = 0.8,
                       specular: float = 0.2, shininess: float = 20.0, view=(0.0, 0.0, 1.0)) -> TactileImage:
    """Lambertian plus Blinn-Phong shading of the height field, in plane coordinates."""
    lights = list(lights)
    if not lights:
        raise ValueError("at least one light is required")
    n = surface_normals(hm)
    view = np.asarray(view, dtype=float)
    view = view / np.linalg.norm(view)
    rgb = np.broadcast_to(np.asarray(ambient, dtype=float), n.shape).copy()
    for light in lights:
        ndl = np.clip(n @ light.direction, 0.0, None)
        half = light.direction + view
        half /= np.linalg.norm(half)
        spec = np.where(ndl > 0, np.clip(n @ half, 0.0, None) ** shininess, 0.0)
        rgb += (diffuse * ndl + specular * spec)[..., None] * light.color
    pixels = np.clip(np.rint(rgb * 255.0), 0, 255).astype(np.uint8)
    return TactileImage(pixels, "raw_render")


def composite_with_reference(sim, sim_ref, real_ref) -> TactileImage:
    """real_ref + (sim - sim_ref), clamped to [0, 255] per channel."""
    arrs = [np.asarray(getattr(a, "pixels", a)) for a in (sim, sim_ref, real_ref)]
    if not (arrs[0].shape == arrs[1].shape == arrs[2].shape):
        raise ValueError(f"image dimensions differ: {[a.shape for a in arrs]}")
    s, sr, rr = (a.astype(np.int32) for a in arrs)
    return TactileImage(np.clip(rr + (s - sr), 0, 255).astype(np.uint8), "composited")
