"""Camera poses, view sampling, relative extrinsics and ray generation.

Conventions: world +Z is up, elevation is measured from the XY plane
(positive upward), azimuth rotates in the XY plane.  Camera frame is
OpenCV-style: +x right, +y down, +z forward (into the scene).  The
world->camera map is p_cam = R @ (p_world - position).
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError

WORLD_UP = np.array([0.0, 0.0, 1.0])
OBJECT_SIZE = 0.5


@dataclass(frozen=True)
class CameraPose:
    rotation: np.ndarray  # (3, 3) world->camera
    position: np.ndarray  # (3,) world units
    fov_deg: float
    resolution: tuple  # (width, height) pixels

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=float)
        p = np.asarray(self.position, dtype=float)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "position", p)
        if R.shape != (3, 3) or np.abs(R.T @ R - np.eye(3)).max() > 1e-6:
            raise ValueError("rotation must be 3x3 orthonormal")
        if not (0.0 < self.fov_deg < 180.0):
            raise ValueError(f"fov_deg must be in (0, 180), got {self.fov_deg}")
        if not np.all(np.isfinite(p)):
            raise ValueError("camera position must be finite")

    @property
    def forward(self):
        """Unit viewing direction in world coordinates."""
        return self.rotation[2]

    def key(self):
        """Hashable identity used for render memoization."""
        return (self.rotation.tobytes(), self.position.tobytes(),
                float(self.fov_deg), tuple(self.resolution))


@dataclass(frozen=True)
class RelativeExtrinsic:
    rotation: np.ndarray  # (3, 3)
    translation: np.ndarray  # (3,)

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=float)
        t = np.asarray(self.translation, dtype=float)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)
        if np.abs(R.T @ R - np.eye(3)).max() > 1e-6:
            raise ValueError("relative rotation must be orthonormal")

    def is_identity(self, tol=1e-12):
        return (np.abs(self.rotation - np.eye(3)).max() <= tol
                and np.abs(self.translation).max() <= tol)


@dataclass(frozen=True)
class Ray:
    origin: np.ndarray
    direction: np.ndarray  # unit
    t_near: float
    t_far: float


@dataclass
class RayGrid:
    """One ray per pixel; arrays are (H, W, ...)."""
    origins: np.ndarray     # (H, W, 3)
    directions: np.ndarray  # (H, W, 3) unit
    t_near: np.ndarray      # (H, W)
    t_far: np.ndarray       # (H, W)
    hit: np.ndarray         # (H, W) bool, False = misses the bounding sphere

    def ray_at(self, row, col):
        return Ray(self.origins[row, col], self.directions[row, col],
                   float(self.t_near[row, col]), float(self.t_far[row, col]))


@dataclass
class ViewSamplingConfig:
    fov_deg: tuple = (15.0, 60.0)
    ref_elevation_deg: tuple = (0.0, 30.0)
    novel_elevation_deg: tuple = (-30.0, 80.0)
    distance_scale: tuple = (0.8, 1.0)
    resolution: int = 64

    def __post_init__(self):
        for name in ("fov_deg", "ref_elevation_deg", "novel_elevation_deg",
                     "distance_scale"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ConfigurationError(f"{name}: min {lo} > max {hi}")
        if self.resolution < 1:
            raise ConfigurationError("resolution must be >= 1")


def ndc_focal(fov_deg):
    return 1.0 / np.tan(np.deg2rad(fov_deg) / 2.0)


def camera_distance(fov_deg, scale):
    """Object size (0.5) times NDC focal length times a scale in [0.8, 1]."""
    return OBJECT_SIZE * ndc_focal(fov_deg) * scale


def look_at_rotation(position, target=(0.0, 0.0, 0.0)):
    """World->camera rotation for a camera at `position` looking at `target`."""
    position = np.asarray(position, dtype=float)
    target = np.asarray(target, dtype=float)
    fwd = target - position
    norm = np.linalg.norm(fwd)
    if norm < 1e-9:
        raise ValueError("degenerate pose: camera position coincides with target")
    fwd = fwd / norm
    up = WORLD_UP
    if abs(np.dot(fwd, up)) > 1.0 - 1e-8:
        up = np.array([1.0, 0.0, 0.0])  # view parallel to +Z
    right = np.cross(fwd, up)
    right /= np.linalg.norm(right)
    down = np.cross(fwd, right)
    return np.stack([right, down, fwd])


def pose_from_spherical(azimuth_deg, elevation_deg, distance, fov_deg,
                        resolution):
    az = np.deg2rad(azimuth_deg)
    el = np.deg2rad(elevation_deg)
    position = distance * np.array(
        [np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)])
    return CameraPose(look_at_rotation(position), position, float(fov_deg),
                      (int(resolution), int(resolution)))


def pose_azimuth_deg(pose):
    """Recover the azimuth of a look-at-origin pose from its position."""
    x, y, _ = pose.position
    return float(np.rad2deg(np.arctan2(y, x)))


def sample_reference_views(rng, n, config):
    """Sample one orthogonal-style set of n look-at-origin poses.

    All n poses share a single fov/elevation/distance draw; azimuths are a
    random base plus k*(360/n) for k = 0..n-1.
    """
    if n < 1:
        raise ConfigurationError("need at least one reference view")
    fov = rng.uniform(*config.fov_deg)
    elev = rng.uniform(*config.ref_elevation_deg)
    scale = rng.uniform(*config.distance_scale)
    base_az = rng.uniform(0.0, 360.0)
    dist = camera_distance(fov, scale)
    return [
        pose_from_spherical(base_az + k * 360.0 / n, elev, dist, fov,
                            config.resolution) for k in range(n)
    ]


def relative_extrinsic(from_pose, to_pose):
    """Transform such that compose(result, from) == to in world->camera maps."""
    R_from, R_to = from_pose.rotation, to_pose.rotation
    t_from = -R_from @ from_pose.position
    t_to = -R_to @ to_pose.position
    R_rel = R_to @ R_from.T
    t_rel = t_to - R_rel @ t_from
    return RelativeExtrinsic(R_rel, t_rel)


def sample_novel_view_pair(rng, reference, config):
    """A target pose sharing the reference fov, with a fresh az/elev/distance
    draw, plus the relative extrinsic reference->target."""
    az = rng.uniform(0.0, 360.0)
    elev = rng.uniform(*config.novel_elevation_deg)
    scale = rng.uniform(*config.distance_scale)
    dist = camera_distance(reference.fov_deg, scale)
    target = pose_from_spherical(az, elev, dist, reference.fov_deg,
                                 reference.resolution[0])
    return target, relative_extrinsic(reference, target)


def generate_rays(pose, bound_radius=1.0):
    """One ray per pixel through the pixel center, pinhole model.

    t_near/t_far come from intersecting the scene bounding sphere; rays that
    miss it are flagged hit=False (background only).
    """
    W, H = pose.resolution
    if W < 1 or H < 1:
        raise ValueError("resolution must be at least 1x1")
    focal_px = (W / 2.0) * ndc_focal(pose.fov_deg)
    u = (np.arange(W) + 0.5 - W / 2.0) / focal_px
    v = (np.arange(H) + 0.5 - H / 2.0) / focal_px
    uu, vv = np.meshgrid(u, v)  # (H, W)
    dirs_cam = np.stack([uu, vv, np.ones_like(uu)], axis=-1)
    dirs = dirs_cam @ pose.rotation  # == dirs_cam @ R = (R^T @ d)^T rows
    dirs /= np.linalg.norm(dirs, axis=-1, keepdims=True)

    o = pose.position
    od = dirs @ o  # (H, W)
    disc = od**2 - (o @ o - bound_radius**2)
    hit = disc > 0.0
    sq = np.sqrt(np.where(hit, disc, 0.0))
    t0 = -od - sq
    t1 = -od + sq
    t_near = np.maximum(t0, 1e-4)
    t_far = t1
    hit &= t_far > t_near

    origins = np.broadcast_to(o, dirs.shape).copy()
    t_near = np.where(hit, t_near, 0.0)
    t_far = np.where(hit, t_far, 0.0)
    return RayGrid(origins, dirs, t_near, t_far, hit)
