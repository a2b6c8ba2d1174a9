"""Differentiable volume rendering over the feature-grid field.

Forward: per ray, N stratified samples between the bounding-sphere entry
and exit points; discrete transmittance T_i = exp(-sum_{k<i} sigma_k d_k),
weights w_i = T_i (1 - exp(-sigma_i d_i)).  Pixel color composites onto a
white background.  Backward pushes per-pixel RGB gradients through the
quadrature (including the transmittance coupling along each ray) into the
field parameters.
"""

from dataclasses import dataclass, field as dc_field

import numpy as np

from .camera import generate_rays
from .errors import ShapeMismatchError

WHITE = np.array([1.0, 1.0, 1.0])
DEPTH_EPS = 1e-8


@dataclass
class RenderConfig:
    n_samples: int = 64
    background: np.ndarray = dc_field(default_factory=lambda: WHITE.copy())
    bound_radius: float = 1.0


@dataclass
class SampleCache:
    """Per-ray quadrature records retained for the backward pass."""
    field: object
    points: np.ndarray      # (n_hit, N, 3)
    dirs: np.ndarray        # (n_hit, N, 3)
    t_vals: np.ndarray      # (n_hit, N)
    deltas: np.ndarray      # (n_hit, N)
    sigma: np.ndarray       # (n_hit, N)
    color: np.ndarray       # (n_hit, N, 3)
    trans: np.ndarray       # (n_hit, N) transmittance T_i
    weights: np.ndarray     # (n_hit, N)
    hit: np.ndarray         # (H, W) bool
    background: np.ndarray
    fwd_cache: object = None  # field activations, when the field offers them


@dataclass
class RenderedView:
    rgb: np.ndarray       # (H, W, 3) in [0, 1]
    opacity: np.ndarray   # (H, W) in [0, 1]
    depth: np.ndarray     # (H, W) expected termination distance
    pose: object
    sample_cache: SampleCache | None = None


def _sample_ts(t_near, t_far, n_samples, rng):
    """Stratified samples per ray; midpoints when rng is None."""
    n_rays = t_near.shape[0]
    edges = np.linspace(0.0, 1.0, n_samples + 1)
    if rng is None:
        frac = (edges[:-1] + edges[1:]) / 2.0
        frac = np.broadcast_to(frac, (n_rays, n_samples))
    else:
        jitter = rng.uniform(size=(n_rays, n_samples))
        frac = edges[:-1] + jitter / n_samples
    return t_near[:, None] + (t_far - t_near)[:, None] * frac


def render(fld, pose, config=None, rng=None):
    """Render `fld` (anything with query_batch) from `pose`.

    Deterministic for rng=None (midpoint samples) or a given seeded rng.
    """
    config = config or RenderConfig()
    W, H = pose.resolution
    bg = np.asarray(config.background, dtype=float)
    rays = generate_rays(pose, config.bound_radius)
    hit = rays.hit
    n_hit = int(hit.sum())

    rgb = np.broadcast_to(bg, (H, W, 3)).copy()
    opacity = np.zeros((H, W))
    depth = np.zeros((H, W))
    if n_hit == 0:
        z2, z3 = np.zeros((0, 0)), np.zeros((0, 0, 3))
        cache = SampleCache(fld, z3, z3, z2, z2, z2, z3, z2, z2, hit, bg)
        return RenderedView(rgb, opacity, depth, pose, cache)

    origins = rays.origins[hit]
    dirs = rays.directions[hit]
    t_near, t_far = rays.t_near[hit], rays.t_far[hit]
    N = config.n_samples

    t_vals = _sample_ts(t_near, t_far, N, rng)
    deltas = np.empty_like(t_vals)
    deltas[:, :-1] = t_vals[:, 1:] - t_vals[:, :-1]
    deltas[:, -1] = t_far - t_vals[:, -1]
    points = origins[:, None, :] + t_vals[:, :, None] * dirs[:, None, :]
    dirs_b = np.broadcast_to(dirs[:, None, :], points.shape)

    fwd_cache = None
    if hasattr(fld, "query_batch_cached"):
        sigma, color, fwd_cache = fld.query_batch_cached(
            points.reshape(-1, 3), dirs_b.reshape(-1, 3))
    else:
        sigma, color = fld.query_batch(points.reshape(-1, 3),
                                       dirs_b.reshape(-1, 3))
    sigma = sigma.reshape(n_hit, N)
    color = color.reshape(n_hit, N, 3)

    tau = sigma * deltas
    alpha = -np.expm1(-tau)  # 1 - exp(-tau)
    trans = np.exp(-np.concatenate(
        [np.zeros((n_hit, 1)), np.cumsum(tau, axis=1)[:, :-1]], axis=1))
    weights = trans * alpha  # (n_hit, N)

    acc = weights.sum(axis=1)
    ray_rgb = np.einsum("rn,rnc->rc", weights, color) + (1.0 - acc)[:, None] * bg
    ray_depth = np.einsum("rn,rn->r", weights, t_vals) / np.maximum(acc, DEPTH_EPS)

    rgb[hit] = ray_rgb
    opacity[hit] = acc
    depth[hit] = ray_depth

    cache = SampleCache(fld, points, np.ascontiguousarray(dirs_b), t_vals,
                        deltas, sigma, color, trans, weights, hit, bg,
                        fwd_cache)
    return RenderedView(rgb, opacity, depth, pose, cache)


def render_backward(view, pixel_grad):
    """Gradient of sum(pixel_grad * rgb) with respect to field parameters.

    pixel_grad is (H, W, 3).  Background-only pixels contribute exactly
    zero; the cross-sample transmittance terms are handled with suffix sums.
    """
    cache = view.sample_cache
    if cache is None:
        raise ValueError("render_backward: sample cache missing")
    pixel_grad = np.asarray(pixel_grad, dtype=float)
    if pixel_grad.shape != view.rgb.shape:
        raise ShapeMismatchError("pixel_grad must match rendered rgb shape")
    from .field import ParamGradient

    g = pixel_grad[cache.hit]  # (n_hit, 3)
    if g.shape[0] == 0:
        return ParamGradient.zeros_like(cache.field)

    # d(pixel)/d(w_i) = c_i - bg ; dot with upstream g
    gw = np.einsum("rnc,rc->rn", cache.color - cache.background, g)
    # dL/dsigma_i = d_i * [ (T_i - w_i) gw_i - sum_{j>i} w_j gw_j ]
    wgw = cache.weights * gw
    suffix = np.cumsum(wgw[:, ::-1], axis=1)[:, ::-1] - wgw
    d_sigma = cache.deltas * ((cache.trans - cache.weights) * gw - suffix)
    d_color = cache.weights[:, :, None] * g[:, None, :]

    if cache.fwd_cache is not None:
        return cache.field.backward_from_cache(
            cache.fwd_cache, d_sigma.reshape(-1), d_color.reshape(-1, 3))
    return cache.field.query_batch_with_grad(
        cache.points.reshape(-1, 3), cache.dirs.reshape(-1, 3),
        d_sigma.reshape(-1), d_color.reshape(-1, 3))


def to_uint8(rgb):
    """Linear-to-display is a plain clamp (no gamma), by contract."""
    return (np.clip(rgb, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def save_png(rgb, path):
    from PIL import Image
    Image.fromarray(to_uint8(rgb), mode="RGB").save(path)


def load_png(path):
    from PIL import Image
    arr = np.asarray(Image.open(path).convert("RGB"), dtype=float)
    return arr / 255.0
