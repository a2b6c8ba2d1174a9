"""Oracle score providers standing in for the two pretrained denoisers.

Three oracles are provided:
  * ground-truth multi-view: renders the synthetic scene at the requested
    poses (the optimal denoiser for a delta data distribution); ignores
    z_t and t by construction,
  * perturbed multi-view: the ground truth composed with an
    azimuth-dependent corruption (hue drift, ghost content, attenuation)
    to simulate view-inconsistent text guidance,
  * novel-view: warps the conditioning image into the target pose using
    ground-truth depth, filling disoccluded pixels from the ground-truth
    render.

Every oracle is pure; ground-truth renders are memoized per
(scene, pose, resolution, samples).
"""

import threading
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

from .camera import generate_rays, pose_azimuth_deg
from .errors import ConfigurationError
from .renderer import RenderConfig, render

ORACLE_SAMPLES = 256

_gt_cache = {}
_gt_lock = threading.Lock()


def clear_gt_cache():
    with _gt_lock:
        _gt_cache.clear()


def gt_render(scene, pose, n_samples=ORACLE_SAMPLES):
    """Memoized ground-truth render (deterministic midpoint quadrature)."""
    key = (scene.key(), pose.key(), n_samples)
    with _gt_lock:
        view = _gt_cache.get(key)
    if view is None:
        view = render(scene, pose, RenderConfig(n_samples=n_samples))
        view.sample_cache = None  # scenes carry no parameters
        with _gt_lock:
            _gt_cache.setdefault(key, view)
    return view


# -- conditions -----------------------------------------------------------

@dataclass
class TextCondition:
    scene: object
    poses: list

    def __post_init__(self):
        if not self.poses:
            raise ValueError("TextCondition needs at least one pose")


@dataclass
class ImageCondition:
    reference_view: np.ndarray  # (H, W, 3) in [0, 1]
    reference_pose: object
    relative: object            # RelativeExtrinsic reference -> target


class ScoreProvider(ABC):
    """Denoiser x_hat(z_t; condition, t) plus the unconditional variant
    used by classifier-free guidance (the per-image mean here)."""

    @abstractmethod
    def denoise(self, z_t, t, condition):
        ...

    @staticmethod
    def unconditional(x_cond):
        return np.full_like(x_cond, float(np.mean(x_cond)))


# -- multi-view oracles ---------------------------------------------------

def gt_multiview_denoise(scene, poses, z_t_list, t, n_samples=ORACLE_SAMPLES):
    """Ground-truth renders at each pose, independent of z_t and t."""
    if len(z_t_list) != len(poses):
        raise ValueError("need one z_t per pose")
    return [gt_render(scene, pose, n_samples).rgb.copy() for pose in poses]


@dataclass
class PathologyConfig:
    kind: str        # hue_drift | ghost_content | attenuation
    amplitude: float  # 0 disables the corruption entirely

    def __post_init__(self):
        if self.kind not in ("hue_drift", "ghost_content", "attenuation"):
            raise ConfigurationError(f"unknown pathology {self.kind!r}")


def rgb_to_hsv(rgb):
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    mx = rgb.max(axis=-1)
    mn = rgb.min(axis=-1)
    diff = mx - mn
    safe = np.where(diff == 0.0, 1.0, diff)
    h = np.zeros_like(mx)
    h = np.where(mx == r, ((g - b) / safe) % 6.0, h)
    h = np.where(mx == g, (b - r) / safe + 2.0, h)
    h = np.where(mx == b, (r - g) / safe + 4.0, h)
    h = np.where(diff == 0.0, 0.0, h) / 6.0
    s = np.where(mx == 0.0, 0.0, diff / np.where(mx == 0.0, 1.0, mx))
    return np.stack([h, s, mx], axis=-1)


def hsv_to_rgb(hsv):
    h, s, v = hsv[..., 0], hsv[..., 1], hsv[..., 2]
    i = np.floor(h * 6.0).astype(int) % 6
    f = h * 6.0 - np.floor(h * 6.0)
    p = v * (1.0 - s)
    q = v * (1.0 - s * f)
    t = v * (1.0 - s * (1.0 - f))
    choices = [(v, t, p), (q, v, p), (p, v, t), (p, q, v), (t, p, v),
               (v, p, q)]
    rgb = np.zeros(hsv.shape)
    for k, (rr, gg, bb) in enumerate(choices):
        m = i == k
        rgb[..., 0][m] = rr[m]
        rgb[..., 1][m] = gg[m]
        rgb[..., 2][m] = bb[m]
    return rgb


def rotate_hue(img, degrees):
    """Rotate the HSV hue of an RGB image; degrees == 0 is bitwise identity."""
    if degrees == 0.0:
        return img.copy()
    hsv = rgb_to_hsv(img)
    hsv[..., 0] = (hsv[..., 0] + degrees / 360.0) % 1.0
    return hsv_to_rgb(hsv)


def wrap_azimuth_deg(az):
    return (az + 180.0) % 360.0 - 180.0


def apply_pathology(img, opacity, azimuth_deg, pathology):
    """Corrupt a ground-truth render as a function of its view azimuth.

    hue_drift:     hue rotation by amplitude * azimuth degrees
    ghost_content: alpha-blend with the horizontally mirrored image,
                   weight = amplitude * (1 - cos az)/2 (0 at front)
    attenuation:   on back-half azimuths (|az| > 90), fade toward white
                   by factor (1 - amplitude)
    """
    az = wrap_azimuth_deg(azimuth_deg)
    if pathology.amplitude == 0.0:
        return img.copy()
    if pathology.kind == "hue_drift":
        return rotate_hue(img, pathology.amplitude * az)
    if pathology.kind == "ghost_content":
        weight = pathology.amplitude * (1.0 - np.cos(np.deg2rad(az))) / 2.0
        return (1.0 - weight) * img + weight * img[:, ::-1, :]
    # attenuation
    if abs(az) <= 90.0:
        return img.copy()
    factor = 1.0 - pathology.amplitude
    return 1.0 + factor * (img - 1.0)  # white background


def default_pathology_amplitude(kind):
    """Amplitudes used by the ablation harness; hue drift is in degrees of
    hue per degree of azimuth (0.5 -> 90 deg rotation at the back view)."""
    return {"hue_drift": 0.5, "ghost_content": 0.8,
            "attenuation": 0.8}[kind]


def perturbed_multiview_denoise(scene, poses, z_t_list, t, pathology,
                                n_samples=ORACLE_SAMPLES):
    """Ground truth composed with the configured azimuth-dependent
    corruption; amplitude 0 reproduces gt_multiview_denoise bitwise."""
    out = []
    for pose, _ in zip(poses, z_t_list):
        view = gt_render(scene, pose, n_samples)
        out.append(apply_pathology(view.rgb, view.opacity,
                                   pose_azimuth_deg(pose), pathology))
    return out


# -- novel-view oracle ----------------------------------------------------

def warp_via_gt_depth(scene, src_img, src_pose, dst_pose,
                      n_samples=ORACLE_SAMPLES, opacity_cutoff=0.5):
    """Reproject src_img into dst_pose using the scene's rendered depth.

    Unprojects every foreground source pixel along its ray to the expected
    termination depth, projects it into the destination camera, and
    resolves collisions with a z-buffer (nearest-neighbor splat, 1-pixel
    footprint).  Returns (warped (H,W,3), filled mask (H,W)); unfilled
    pixels are zero in the image and False in the mask.
    """
    src_view = gt_render(scene, src_pose, n_samples)
    rays = generate_rays(src_pose)
    fg = src_view.opacity > opacity_cutoff

    W, H = dst_pose.resolution
    warped = np.zeros((H, W, 3))
    zbuf = np.full((H, W), np.inf)
    filled = np.zeros((H, W), dtype=bool)

    pts = rays.origins[fg] + src_view.depth[fg][:, None] * rays.directions[fg]
    cols = src_img[fg]
    if pts.shape[0]:
        cam = (pts - dst_pose.position) @ dst_pose.rotation.T
        z = cam[:, 2]
        ok = z > 1e-6
        cam, z, cols = cam[ok], z[ok], cols[ok]
        focal_px = (W / 2.0) / np.tan(np.deg2rad(dst_pose.fov_deg) / 2.0)
        u = np.round(cam[:, 0] / z * focal_px + W / 2.0 - 0.5).astype(int)
        v = np.round(cam[:, 1] / z * focal_px + H / 2.0 - 0.5).astype(int)
        ok = (u >= 0) & (u < W) & (v >= 0) & (v < H)
        u, v, z, cols = u[ok], v[ok], z[ok], cols[ok]
        order = np.argsort(z, kind="stable")[::-1]  # near splats last win
        warped[v[order], u[order]] = cols[order]
        zbuf[v[order], u[order]] = z[order]
        filled[v[order], u[order]] = True
    return warped, filled


def novelview_denoise(scene, condition, target_pose, z_t, t,
                      n_samples=ORACLE_SAMPLES):
    """Predicted target view consistent with what the field rendered at
    the reference pose; disoccluded pixels come from the ground truth."""
    if condition.relative.is_identity(tol=1e-9):
        return condition.reference_view.copy()
    warped, filled = warp_via_gt_depth(scene, condition.reference_view,
                                       condition.reference_pose, target_pose,
                                       n_samples)
    out = gt_render(scene, target_pose, n_samples).rgb.copy()
    out[filled] = warped[filled]
    return out


# -- providers used by the distillation loop ------------------------------

class MultiviewProvider(ScoreProvider):
    """Text-path oracle; with a pathology config it simulates the failure
    modes of view-inconsistent text guidance."""

    def __init__(self, scene, pathology=None, n_samples=ORACLE_SAMPLES):
        self.scene = scene
        self.pathology = pathology
        self.n_samples = n_samples

    def denoise(self, z_t_list, t, condition):
        if self.pathology is not None and self.pathology.amplitude != 0.0:
            return perturbed_multiview_denoise(
                self.scene, condition.poses, z_t_list, t, self.pathology,
                self.n_samples)
        return gt_multiview_denoise(self.scene, condition.poses, z_t_list, t,
                                    self.n_samples)


class NovelViewProvider(ScoreProvider):
    """Image-path oracle conditioned on a rendered reference view and the
    relative extrinsic to the target."""

    def __init__(self, scene, n_samples=ORACLE_SAMPLES):
        self.scene = scene
        self.n_samples = n_samples

    def denoise(self, z_t, t, condition, target_pose=None):
        return novelview_denoise(self.scene, condition, target_pose, z_t, t,
                                 self.n_samples)
