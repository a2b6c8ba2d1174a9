"""The dual-score distillation loop.

Each step renders a batch of orthogonal reference views and a batch of
(reference, target) novel-view pairs, forms detached denoiser residuals
on both paths after classifier-free guidance, and pushes the combined
residual through the volume-rendering backward pass:

    grad = lambda_text * mean_i (x_i - cfg(text_oracle)) dx/dphi
         + lambda_image * mean_k (x_k - cfg(novel_oracle)) dx/dphi

Schedules follow the published recipe: t_max annealed 0.98 -> 0.5 over
the first 8000 steps (t_min fixed at 0.02), render resolution 64 -> 256
and batches (8, 12) -> (4, 4) at step 5000, AdamW with lr 0.01 on the
grid and 0.001 on the MLP for 10000 steps.
"""

from dataclasses import dataclass, field as dc_field, replace

import numpy as np

from .camera import (ViewSamplingConfig, sample_novel_view_pair,
                     sample_reference_views)
from .diffusion import build_schedule, cfg_combine, forward_sample
from .errors import ConfigurationError
from .field import AdamWState, ParamGradient, RadianceField, apply_adamw_step
from .renderer import RenderConfig, render, render_backward
from .scores import (ImageCondition, MultiviewProvider, NovelViewProvider,
                     ScoreProvider, TextCondition)


@dataclass
class DistillationConfig:
    total_steps: int = 10000
    lambda_text: float = 1.0
    lambda_image: float = 1.0
    gamma_text: float = 50.0
    gamma_image: float = 3.0
    t_min: float = 0.02
    t_max_start: float = 0.98
    t_max_end: float = 0.5
    t_anneal_steps: int = 8000
    anneal_t_min: bool = False  # alternative reading of the recipe
    resolution_low: int = 64
    resolution_high: int = 256
    resolution_switch_step: int = 5000
    batch_text_early: int = 8
    batch_image_early: int = 12
    batch_text_late: int = 4
    batch_image_late: int = 4
    batch_switch_step: int = 5000
    seed: int = 0
    n_samples_train: int = 64
    n_samples_oracle: int = 256
    grad_clip_norm: float = 10.0
    diffusion_steps: int = 1000
    beta_start: float = 1e-4
    beta_end: float = 0.02
    grid_res: int = 32
    feat_dim: int = 8
    mlp_hidden: int = 32
    lr_grid: float = 0.01
    lr_mlp: float = 0.001
    weight_decay: float = 0.01
    view: ViewSamplingConfig = dc_field(default_factory=ViewSamplingConfig)
    weight_fn: object = None  # w(t); None means w == 1

    def __post_init__(self):
        if not (0.0 <= self.t_min < self.t_max_end <= self.t_max_start <= 1.0):
            raise ConfigurationError("need 0 <= t_min < t_max_end <= t_max_start <= 1")
        if min(self.batch_text_early, self.batch_image_early,
               self.batch_text_late, self.batch_image_late) < 1:
            raise ConfigurationError("batch sizes must be >= 1")


@dataclass
class ScheduleState:
    t_min: float
    t_max: float
    resolution: int
    batch_text: int
    batch_image: int


@dataclass
class StepReport:
    step: int
    text_residual_norm: float
    image_residual_norm: float
    grad_norm: float
    t_min: float
    t_max: float
    resolution: int
    batch_text: int
    batch_image: int
    clipped: bool = False


def schedule_at(config, step):
    if not (0 <= step < max(config.total_steps, 1)):
        raise ValueError(f"step {step} outside [0, {config.total_steps})")
    frac = min(step / config.t_anneal_steps, 1.0) if config.t_anneal_steps \
        else 1.0
    t_max = config.t_max_start + (config.t_max_end - config.t_max_start) * frac
    t_min = config.t_min
    if config.anneal_t_min:
        t_min = config.t_max_start + (config.t_min - config.t_max_start) * frac
    late = step >= config.batch_switch_step
    res = config.resolution_high if step >= config.resolution_switch_step \
        else config.resolution_low
    return ScheduleState(
        t_min, t_max, res,
        config.batch_text_late if late else config.batch_text_early,
        config.batch_image_late if late else config.batch_image_early)


def t_fraction_to_index(frac, T):
    return int(np.clip(round(frac * T), 1, T))


def sds_gradient(view, denoised, weight=1.0):
    """Detached score-distillation gradient: weight * (x - x_hat) dx/dphi."""
    if denoised.shape != view.rgb.shape:
        raise ValueError("sds_gradient: denoised image shape mismatch")
    residual = weight * (view.rgb - denoised)
    return render_backward(view, residual)


def default_providers(scene, config, pathology=None):
    return (MultiviewProvider(scene, pathology, config.n_samples_oracle),
            NovelViewProvider(scene, config.n_samples_oracle))


def combined_step(fld, scene, config, step, rng, schedule=None,
                  providers=None):
    """One dual-path gradient evaluation.  Consumes an identical RNG
    stream regardless of lambda values, so per-path gradients computed
    with a shared seed decompose the combined gradient exactly.  Clipping
    is applied by the run loop, not here."""
    sch = schedule_at(config, step)
    if schedule is None:
        schedule = build_schedule(config.diffusion_steps, config.beta_start,
                                  config.beta_end)
    if providers is None:
        providers = default_providers(scene, config)
    text_provider, image_provider = providers

    view_cfg = replace(config.view, resolution=sch.resolution)
    render_cfg = RenderConfig(n_samples=config.n_samples_train)
    weight_fn = config.weight_fn or (lambda t: 1.0)

    # text path: one orthogonal reference set, one shared timestep
    ref_poses = sample_reference_views(rng, sch.batch_text, view_cfg)
    ref_views = [render(fld, pose, render_cfg, rng) for pose in ref_poses]
    t_frac = rng.uniform(sch.t_min, sch.t_max)
    t_idx = t_fraction_to_index(t_frac, schedule.T)
    z_list = [forward_sample(schedule, v.rgb, t_idx, rng).z_t
              for v in ref_views]
    x_hat = text_provider.denoise(z_list, t_idx,
                                  TextCondition(scene, ref_poses))

    grad_text = ParamGradient.zeros_like(fld)
    text_res_sq = 0.0
    for view, hat in zip(ref_views, x_hat):
        guided = cfg_combine(hat, ScoreProvider.unconditional(hat),
                             config.gamma_text)
        residual = weight_fn(t_idx) * (view.rgb - guided)
        text_res_sq += float(np.sum(residual ** 2))
        grad_text.add_scaled(render_backward(view, residual),
                             1.0 / sch.batch_text)
    if not grad_text.all_finite():
        raise FloatingPointError(
            f"non-finite residual gradient on text path at step {step}")

    # image path: independent timestep per (reference, target) pair
    grad_image = ParamGradient.zeros_like(fld)
    image_res_sq = 0.0
    for _ in range(sch.batch_image):
        ref_i = int(rng.integers(sch.batch_text))
        ref_pose = ref_poses[ref_i]
        target_pose, rel = sample_novel_view_pair(rng, ref_pose, view_cfg)
        target_view = render(fld, target_pose, render_cfg, rng)
        t_frac_i = rng.uniform(sch.t_min, sch.t_max)
        t_idx_i = t_fraction_to_index(t_frac_i, schedule.T)
        z_i = forward_sample(schedule, target_view.rgb, t_idx_i, rng).z_t
        cond = ImageCondition(ref_views[ref_i].rgb, ref_pose, rel)
        hat = image_provider.denoise(z_i, t_idx_i, cond, target_pose)
        guided = cfg_combine(hat, ScoreProvider.unconditional(hat),
                             config.gamma_image)
        residual = weight_fn(t_idx_i) * (target_view.rgb - guided)
        image_res_sq += float(np.sum(residual ** 2))
        grad_image.add_scaled(render_backward(target_view, residual),
                              1.0 / sch.batch_image)
    if not grad_image.all_finite():
        raise FloatingPointError(
            f"non-finite residual gradient on image path at step {step}")

    grad = grad_text.scaled(config.lambda_text)
    grad.add_scaled(grad_image, config.lambda_image)
    report = StepReport(
        step=step,
        text_residual_norm=float(np.sqrt(text_res_sq)),
        image_residual_norm=float(np.sqrt(image_res_sq)),
        grad_norm=grad.global_norm(),
        t_min=sch.t_min, t_max=sch.t_max, resolution=sch.resolution,
        batch_text=sch.batch_text, batch_image=sch.batch_image)
    return grad, report


@dataclass
class RunSinks:
    """Optional observers of the run loop."""
    on_report: object = None          # callable(StepReport)
    on_snapshot: object = None        # callable(step, field)
    snapshot_every: int = 0           # 0 disables snapshots


def run(scene, config, providers=None, sinks=None, fld=None):
    """Full distillation: schedule -> combined_step -> AdamW, sequential
    and fully deterministic for a given seed.  Returns (field, reports)."""
    rng = np.random.default_rng(config.seed)
    if fld is None:
        fld = RadianceField.create(rng, config.grid_res, config.feat_dim,
                                   config.mlp_hidden)
    schedule = build_schedule(config.diffusion_steps, config.beta_start,
                              config.beta_end)
    if providers is None:
        providers = default_providers(scene, config)
    state = AdamWState(fld)
    sinks = sinks or RunSinks()
    reports = []
    for step in range(config.total_steps):
        grad, report = combined_step(fld, scene, config, step, rng,
                                     schedule, providers)
        grad, report.clipped = grad.clip_global_norm(config.grad_clip_norm)
        apply_adamw_step(fld, grad, state, config.lr_grid, config.lr_mlp,
                         weight_decay=config.weight_decay)
        reports.append(report)
        if sinks.on_report:
            sinks.on_report(report)
        if sinks.on_snapshot and sinks.snapshot_every \
                and (step + 1) % sinks.snapshot_every == 0:
            sinks.on_snapshot(step + 1, fld)
    return fld, reports
