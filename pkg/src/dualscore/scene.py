"""Synthetic ground-truth scenes: sphere/box primitives with constant
density and color, composed painter-style (a later primitive overrides
earlier ones wherever it contains the query point).

A scene exposes the same query_batch interface as the radiance field, so
the renderer can produce ground-truth images, depths and occupancies.
"""

import json
from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import ConfigurationError

SOLID_DENSITY = 5.0  # "solid" density scale used by the shipped scenes


@dataclass(frozen=True)
class Primitive:
    shape: str            # "sphere" | "box"
    center: tuple
    size: object          # sphere: radius; box: (hx, hy, hz) half-extents
    color: tuple
    density: float

    def __post_init__(self):
        if self.shape not in ("sphere", "box"):
            raise ConfigurationError(f"unknown primitive shape {self.shape!r}")
        if self.density <= 0:
            raise ConfigurationError("primitive density must be > 0")
        if not all(0.0 <= c <= 1.0 for c in self.color):
            raise ConfigurationError("primitive color must be in [0,1]^3")
        c = np.asarray(self.center, dtype=float)
        ext = self.half_extents()
        if np.any(np.abs(c) + ext > 1.0 + 1e-9):
            raise ConfigurationError("primitive must fit inside [-1,1]^3")

    def half_extents(self):
        if self.shape == "sphere":
            return np.full(3, float(self.size))
        return np.asarray(self.size, dtype=float)

    def contains(self, points):
        d = points - np.asarray(self.center, dtype=float)
        if self.shape == "sphere":
            return np.einsum("mi,mi->m", d, d) <= float(self.size) ** 2
        return np.all(np.abs(d) <= self.half_extents(), axis=1)


@dataclass
class SyntheticScene:
    name: str
    primitives: list = dc_field(default_factory=list)

    def query_batch(self, points, dirs=None):
        """(M,3) -> density (M,), rgb (M,3); last containing primitive wins."""
        points = np.asarray(points, dtype=float)
        sigma = np.zeros(points.shape[0])
        rgb = np.full((points.shape[0], 3), 0.5)
        for prim in self.primitives:
            mask = prim.contains(points)
            sigma[mask] = prim.density
            rgb[mask] = np.asarray(prim.color, dtype=float)
        return sigma, rgb

    def occupancy(self, points, threshold):
        sigma, _ = self.query_batch(points)
        return sigma >= threshold

    def to_dict(self):
        return {"name": self.name, "primitives": [
            {"shape": p.shape, "center": list(p.center),
             "size": p.size if p.shape == "sphere" else list(p.size),
             "color": list(p.color), "density": p.density}
            for p in self.primitives]}

    def key(self):
        """Stable identity for render memoization."""
        return json.dumps(self.to_dict(), sort_keys=True)


def save_scene(scene, path):
    with open(path, "w") as fh:
        json.dump(scene.to_dict(), fh, indent=2)
        fh.write("\n")


def load_scene(path):
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: invalid scene file: {exc}") from exc
    return scene_from_dict(doc, origin=str(path))


def scene_from_dict(doc, origin="<dict>"):
    allowed = {"shape", "center", "size", "color", "density"}
    prims = []
    for i, p in enumerate(doc.get("primitives", [])):
        extra = set(p) - allowed
        if extra:
            raise ConfigurationError(
                f"{origin}: primitive {i} has unknown keys {sorted(extra)}")
        prims.append(Primitive(
            shape=p["shape"], center=tuple(p["center"]),
            size=p["size"] if p["shape"] == "sphere" else tuple(p["size"]),
            color=tuple(p["color"]), density=float(p["density"])))
    return SyntheticScene(doc.get("name", "scene"), prims)


# -- shipped toy scenes ---------------------------------------------------

def make_sphere_scene():
    """One solid red sphere of radius 0.5."""
    return SyntheticScene("sphere", [
        Primitive("sphere", (0.0, 0.0, 0.0), 0.5, (0.8, 0.1, 0.1),
                  SOLID_DENSITY)])


def make_two_box_scene():
    """Two offset solid boxes with distinct colors."""
    return SyntheticScene("two_box", [
        Primitive("box", (-0.35, 0.0, -0.15), (0.25, 0.25, 0.25),
                  (0.1, 0.2, 0.8), SOLID_DENSITY),
        Primitive("box", (0.35, 0.0, 0.2), (0.2, 0.2, 0.35),
                  (0.1, 0.7, 0.2), SOLID_DENSITY)])


def make_shell_scene():
    """Glass analog: a low-density spherical shell (inner sphere overrides
    the outer one with near-zero density)."""
    return SyntheticScene("shell", [
        Primitive("sphere", (0.0, 0.0, 0.0), 0.5, (0.4, 0.6, 0.9), 1.5),
        Primitive("sphere", (0.0, 0.0, 0.0), 0.35, (0.9, 0.9, 0.95), 0.05)])


BUILTIN_SCENES = {
    "sphere": make_sphere_scene,
    "two_box": make_two_box_scene,
    "shell": make_shell_scene,
}
