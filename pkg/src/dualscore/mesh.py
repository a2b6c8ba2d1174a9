"""Iso-surface extraction, mesh normalization, OBJ emit/parse, and the
fixed front-view capture (camera distance 2.2, NDC focal 3.0 on the -Y
"front" axis).

Marching cubes itself is delegated to scikit-image; the surrounding
contracts (vertex-density consistency, watertightness, normalization)
are verified in the tests.
"""

import warnings
from dataclasses import dataclass

import numpy as np
from skimage import measure

from .camera import CameraPose, look_at_rotation, ndc_focal
from .renderer import RenderConfig, render

FRONT_DISTANCE = 2.2
FRONT_NDC_FOCAL = 3.0
FRONT_FOV_DEG = float(np.rad2deg(2.0 * np.arctan(1.0 / FRONT_NDC_FOCAL)))
DEFAULT_THRESHOLD = 2.5  # half the solid training-scene density scale
FACE_CAP = 40000

MESH_COLOR_DIR = np.array([0.0, 1.0, 0.0])  # fixed viewing dir for colors


@dataclass
class TriangleMesh:
    vertices: np.ndarray   # (V, 3)
    triangles: np.ndarray  # (F, 3) int indices
    colors: np.ndarray | None = None  # (V, 3) optional

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float).reshape(-1, 3)
        self.triangles = np.asarray(self.triangles, dtype=int).reshape(-1, 3)
        if self.colors is not None:
            self.colors = np.asarray(self.colors, dtype=float).reshape(-1, 3)
        if len(self.triangles) and (self.triangles.min() < 0 or
                                    self.triangles.max() >= len(self.vertices)):
            raise ValueError("triangle index out of range")
        if not np.all(np.isfinite(self.vertices)):
            raise ValueError("non-finite vertex coordinates")

    @property
    def is_empty(self):
        return len(self.triangles) == 0


def sample_density_lattice(fld, resolution):
    """Density on a regular lattice over [-1,1]^3, indexed [ix, iy, iz]."""
    axis = np.linspace(-1.0, 1.0, resolution)
    vol = np.empty((resolution,) * 3)
    dirs = np.tile(MESH_COLOR_DIR, (resolution * resolution, 1))
    for ix, x in enumerate(axis):  # slice-wise to bound memory
        yy, zz = np.meshgrid(axis, axis, indexing="ij")
        pts = np.stack([np.full(yy.size, x), yy.ravel(), zz.ravel()], axis=1)
        sigma, _ = fld.query_batch(pts, dirs)
        vol[ix] = sigma.reshape(resolution, resolution)
    return vol, axis


def extract_mesh(fld, resolution=64, threshold=DEFAULT_THRESHOLD):
    """Marching cubes on the field density over [-1,1]^3 with linear edge
    interpolation; vertex colors sampled from the field."""
    if resolution < 8:
        raise ValueError("lattice resolution must be >= 8")
    if threshold <= 0:
        raise ValueError("density threshold must be > 0")
    vol, axis = sample_density_lattice(fld, resolution)
    h = axis[1] - axis[0]
    try:
        verts, faces, _, _ = measure.marching_cubes(vol, level=threshold,
                                                    spacing=(h, h, h))
    except (ValueError, RuntimeError):
        warnings.warn("no iso-surface crossing found; returning empty mesh")
        return TriangleMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=int))
    verts = verts - 1.0  # lattice coords -> world [-1, 1]
    dirs = np.tile(MESH_COLOR_DIR, (len(verts), 1))
    _, colors = fld.query_batch(verts, dirs)
    return TriangleMesh(verts, faces, colors)


def normalize_mesh(mesh):
    """Uniform scale + translation: tight bounding box centered, longest
    axis spanning exactly [-1, 1].  Idempotent."""
    if mesh.is_empty:
        raise ValueError("cannot normalize an empty mesh")
    lo = mesh.vertices.min(axis=0)
    hi = mesh.vertices.max(axis=0)
    center = (lo + hi) / 2.0
    extent = (hi - lo).max()
    if extent <= 0:
        raise ValueError("degenerate mesh: zero extent")
    verts = (mesh.vertices - center) * (2.0 / extent)
    return TriangleMesh(verts, mesh.triangles.copy(),
                        None if mesh.colors is None else mesh.colors.copy())


def front_view_pose(resolution=256):
    position = np.array([0.0, -FRONT_DISTANCE, 0.0])
    return CameraPose(look_at_rotation(position), position, FRONT_FOV_DEG,
                      (resolution, resolution))


def capture_front_view(obj, resolution=256, n_samples=256):
    """Front capture per the fixed protocol.  `obj` is either a field-like
    (volume rendered) or a TriangleMesh (flat-shaded rasterization)."""
    pose = front_view_pose(resolution)
    if isinstance(obj, TriangleMesh):
        return rasterize_mesh(obj, pose)
    return render(obj, pose, RenderConfig(n_samples=n_samples)).rgb


def rasterize_mesh(mesh, pose, background=1.0):
    """Minimal z-buffer rasterizer with flat per-face shading."""
    W, H = pose.resolution
    img = np.full((H, W, 3), float(background))
    if mesh.is_empty:
        return img
    zbuf = np.full((H, W), np.inf)
    cam = (mesh.vertices - pose.position) @ pose.rotation.T
    focal_px = (W / 2.0) * ndc_focal(pose.fov_deg)
    light = pose.rotation[2]  # headlight shading

    if mesh.colors is not None:
        face_color = mesh.colors[mesh.triangles].mean(axis=1)
    else:
        face_color = np.full((len(mesh.triangles), 3), 0.7)
    v0 = mesh.vertices[mesh.triangles[:, 0]]
    v1 = mesh.vertices[mesh.triangles[:, 1]]
    v2 = mesh.vertices[mesh.triangles[:, 2]]
    normals = np.cross(v1 - v0, v2 - v0)
    nlen = np.linalg.norm(normals, axis=1)
    shade = np.abs(normals @ light) / np.maximum(nlen, 1e-12)
    face_color = face_color * (0.3 + 0.7 * shade)[:, None]

    for f, tri in enumerate(mesh.triangles):
        p = cam[tri]
        if np.any(p[:, 2] <= 1e-6):
            continue
        xy = p[:, :2] / p[:, 2:3] * focal_px + np.array([W, H]) / 2.0 - 0.5
        z = p[:, 2]
        x0 = max(int(np.floor(xy[:, 0].min())), 0)
        x1 = min(int(np.ceil(xy[:, 0].max())) + 1, W)
        y0 = max(int(np.floor(xy[:, 1].min())), 0)
        y1 = min(int(np.ceil(xy[:, 1].max())) + 1, H)
        if x0 >= x1 or y0 >= y1:
            continue
        xs, ys = np.meshgrid(np.arange(x0, x1), np.arange(y0, y1))
        a, b, c = xy
        det = (b[1] - c[1]) * (a[0] - c[0]) + (c[0] - b[0]) * (a[1] - c[1])
        if abs(det) < 1e-12:
            continue
        w0 = ((b[1] - c[1]) * (xs - c[0]) + (c[0] - b[0]) * (ys - c[1])) / det
        w1 = ((c[1] - a[1]) * (xs - c[0]) + (a[0] - c[0]) * (ys - c[1])) / det
        w2 = 1.0 - w0 - w1
        inside = (w0 >= 0) & (w1 >= 0) & (w2 >= 0)
        if not inside.any():
            continue
        depth = w0 * z[0] + w1 * z[1] + w2 * z[2]
        sub_z = zbuf[y0:y1, x0:x1]
        upd = inside & (depth < sub_z)
        sub_z[upd] = depth[upd]
        img[y0:y1, x0:x1][upd] = face_color[f]
    return img


# -- OBJ emit/parse -------------------------------------------------------
#
# ASCII OBJ: "v x y z [r g b]" vertex records (colors as the extended
# 6-float form), "f i j k" 1-based faces.  Floats are written with repr()
# so a re-parse round-trips bitwise.

def write_obj(mesh, path, face_cap=FACE_CAP):
    if len(mesh.triangles) > face_cap:
        raise ValueError(
            f"mesh has {len(mesh.triangles)} faces, above the cap {face_cap}; "
            "refusing to emit (no decimation implemented)")
    with open(path, "w") as fh:
        for i, v in enumerate(mesh.vertices):
            rec = f"v {float(v[0])!r} {float(v[1])!r} {float(v[2])!r}"
            if mesh.colors is not None:
                c = mesh.colors[i]
                rec += f" {float(c[0])!r} {float(c[1])!r} {float(c[2])!r}"
            fh.write(rec + "\n")
        for tri in mesh.triangles:
            fh.write(f"f {tri[0] + 1} {tri[1] + 1} {tri[2] + 1}\n")


def read_obj(path):
    verts, colors, faces = [], [], []
    with open(path) as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "v":
                verts.append([float(x) for x in parts[1:4]])
                if len(parts) == 7:
                    colors.append([float(x) for x in parts[4:7]])
            elif parts[0] == "f":
                faces.append([int(x.split("/")[0]) - 1 for x in parts[1:4]])
    colors_arr = np.asarray(colors) if len(colors) == len(verts) and verts \
        else None
    return TriangleMesh(np.asarray(verts).reshape(-1, 3),
                        np.asarray(faces, dtype=int).reshape(-1, 3),
                        colors_arr)
