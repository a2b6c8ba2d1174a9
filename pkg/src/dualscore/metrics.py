"""Evaluation metrics: per-pose PSNR against ground truth, density IoU on
a lattice, and a depth-warp cross-view consistency score.  These are the
desk-scale stand-ins for benchmark quality/alignment scoring.
"""

import warnings

import numpy as np

from .camera import camera_distance, pose_from_spherical
from .renderer import RenderConfig, render
from .scores import gt_render, warp_via_gt_depth

EVAL_SAMPLES = 256


def make_eval_poses(n=4, resolution=64, fov_deg=45.0, elevation_deg=15.0,
                    base_azimuth_deg=22.5):
    """Fixed held-out ring of poses used for PSNR tracking; the off-grid
    base azimuth keeps them away from the sampled reference sets."""
    dist = camera_distance(fov_deg, 1.0)
    return [pose_from_spherical(base_azimuth_deg + k * 360.0 / n,
                                elevation_deg, dist, fov_deg, resolution)
            for k in range(n)]


def psnr(mse):
    return float("inf") if mse == 0.0 else float(10.0 * np.log10(1.0 / mse))


def eval_psnr(fld, scene, poses, n_samples=EVAL_SAMPLES):
    """Per-pose PSNR (dB) between field renders and ground-truth renders."""
    if not poses:
        raise ValueError("eval_psnr: need at least one pose")
    out = []
    cfg = RenderConfig(n_samples=n_samples)
    for pose in poses:
        pred = render(fld, pose, cfg).rgb
        gt = gt_render(scene, pose, n_samples).rgb
        out.append(psnr(float(np.mean((pred - gt) ** 2))))
    return out


def default_iou_threshold(scene):
    """Half the densest primitive, capped at 2.5: keeps the ground-truth
    occupancy non-empty for low-density scenes like the glass-analog shell."""
    peak = max(p.density for p in scene.primitives)
    return min(2.5, 0.5 * peak)


def eval_density_iou(fld, scene, resolution=32, threshold=2.5):
    """IoU between thresholded field density and ground-truth occupancy on
    a regular lattice over [-1,1]^3."""
    if resolution < 16:
        raise ValueError("lattice resolution must be >= 16")
    axis = np.linspace(-1.0, 1.0, resolution)
    xx, yy, zz = np.meshgrid(axis, axis, axis, indexing="ij")
    pts = np.stack([xx.ravel(), yy.ravel(), zz.ravel()], axis=1)
    dirs = np.zeros_like(pts)
    dirs[:, 2] = 1.0
    sigma, _ = fld.query_batch(pts, dirs)
    pred = sigma > threshold
    gt = scene.occupancy(pts, threshold)
    if not gt.any():
        raise ValueError("ground-truth occupancy empty: malformed scene "
                         "or threshold above every primitive density")
    union = np.count_nonzero(pred | gt)
    inter = np.count_nonzero(pred & gt)
    return inter / union


def eval_cross_view_consistency(fld, scene, pose_pairs,
                                n_samples=EVAL_SAMPLES):
    """Mean masked MAE between the A-render warped into pose B (via
    ground-truth depth) and the B-render, over mutually visible pixels."""
    if not pose_pairs:
        raise ValueError("eval_cross_view_consistency: need pose pairs")
    cfg = RenderConfig(n_samples=n_samples)
    scores = []
    for pose_a, pose_b in pose_pairs:
        img_a = render(fld, pose_a, cfg).rgb
        img_b = render(fld, pose_b, cfg).rgb
        if pose_a.key() == pose_b.key():
            scores.append(0.0)
            continue
        warped, mask = warp_via_gt_depth(scene, img_a, pose_a, pose_b,
                                         n_samples)
        if not mask.any():
            warnings.warn("empty visibility mask; skipping pose pair")
            continue
        scores.append(float(np.mean(np.abs(warped[mask] - img_b[mask]))))
    if not scores:
        raise ValueError("all pose pairs had empty visibility masks")
    return float(np.mean(scores))
