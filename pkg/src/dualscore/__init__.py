"""Desk-scale dual-guidance score distillation for radiance fields."""

__version__ = "0.1.0"

from .camera import (CameraPose, Ray, RelativeExtrinsic, ViewSamplingConfig,
                     generate_rays, relative_extrinsic,
                     sample_novel_view_pair, sample_reference_views)
from .diffusion import (DiffusionSchedule, build_schedule, cfg_combine,
                        ddpm_loss, forward_sample, posterior_mean,
                        reverse_sample)
from .distill import (DistillationConfig, StepReport, combined_step, run,
                      schedule_at, sds_gradient)
from .field import (ParamGradient, RadianceField, apply_adamw_step,
                    load_checkpoint, save_checkpoint)
from .mesh import (TriangleMesh, capture_front_view, extract_mesh,
                   normalize_mesh, read_obj, write_obj)
from .metrics import (eval_cross_view_consistency, eval_density_iou,
                      eval_psnr, make_eval_poses)
from .config import load_run_config, smoke_config
from .renderer import RenderConfig, RenderedView, render, render_backward
from .scene import (SyntheticScene, load_scene, make_shell_scene,
                    make_sphere_scene, make_two_box_scene, save_scene)
from .scores import (ImageCondition, PathologyConfig, TextCondition,
                     gt_multiview_denoise, novelview_denoise,
                     perturbed_multiview_denoise)
