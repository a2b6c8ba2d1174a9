"""Command-line surface.

Subcommands: distill, mesh, eval, ablation, render-snapshot.

Exit codes: 0 success, 2 unreadable/invalid configuration or inputs,
3 runtime abort during a run, 4 empty extracted mesh.  The environment
variable DUALSCORE_OUTPUT_ROOT sets the default output root.
"""

import argparse
import json
import os
import sys
from dataclasses import replace

import numpy as np

from . import config as config_mod
from .camera import pose_from_spherical
from .distill import RunSinks, default_providers, run
from .errors import ConfigurationError
from .field import load_checkpoint, save_checkpoint
from .mesh import (DEFAULT_THRESHOLD, capture_front_view, extract_mesh,
                   normalize_mesh, write_obj)
from .metrics import (default_iou_threshold, eval_cross_view_consistency,
                      eval_density_iou, eval_psnr, make_eval_poses)
from .renderer import RenderConfig, render, save_png
from .scene import load_scene
from .scores import PathologyConfig, default_pathology_amplitude

EXIT_CONFIG = 2
EXIT_RUNTIME = 3
EXIT_EMPTY_MESH = 4


def _out_root():
    return os.environ.get("DUALSCORE_OUTPUT_ROOT", "runs")


def _atomic_save_checkpoint(fld, path):
    tmp = path + ".tmp"
    save_checkpoint(fld, tmp)
    os.replace(tmp, path)


def _load_run_inputs(args):
    if not os.path.exists(args.scene):
        raise ConfigurationError(f"scene file not found: {args.scene}")
    scene = load_scene(args.scene)
    overrides = list(args.set or [])
    if getattr(args, "lambda_t", None) is not None:
        overrides.append(f"distill.lambda_text={args.lambda_t}")
    if getattr(args, "lambda_i", None) is not None:
        overrides.append(f"distill.lambda_image={args.lambda_i}")
    if getattr(args, "seed", None) is not None:
        overrides.append(f"run.seed={args.seed}")
    if getattr(args, "steps", None) is not None:
        overrides.append(f"run.total_steps={args.steps}")
    if args.config:
        cfg, extras = config_mod.load_run_config(args.config, overrides)
    else:
        values = config_mod.apply_overrides({}, overrides)
        cfg, extras = config_mod.build_config(values)
    return scene, cfg, extras


def run_distillation(scene, cfg, extras, out_dir, scene_path=None):
    """Execute a run; writes the config echo, checkpoints, snapshot PNGs
    and the manifest.  Returns the manifest dict."""
    os.makedirs(out_dir, exist_ok=True)
    echo_path = os.path.join(out_dir, "config_echo.cfg")
    with open(echo_path, "w") as fh:
        fh.write(config_mod.config_echo_text(cfg, extras) + "\n")
    ckpt_path = os.path.join(out_dir, "field.ckpt")
    snap_dir = os.path.join(out_dir, "snapshots")
    reports_path = os.path.join(out_dir, "reports.jsonl")
    manifest = {
        "status": "running", "seed": cfg.seed,
        "scene": scene_path, "scene_name": scene.name,
        "config_echo": echo_path, "checkpoint": ckpt_path,
        "snapshots": snap_dir, "reports": reports_path,
        # conventional targets for the mesh/eval subcommands
        "mesh": os.path.join(out_dir, "mesh.obj"),
        "metrics_report": os.path.join(out_dir, "metrics.json"),
    }
    manifest_path = os.path.join(out_dir, "run_manifest.json")

    os.makedirs(snap_dir, exist_ok=True)
    report_fh = open(reports_path, "w")
    eval_poses = make_eval_poses(resolution=cfg.resolution_low)

    def on_report(rep):
        report_fh.write(json.dumps(rep.__dict__) + "\n")

    def on_snapshot(step, fld):
        _atomic_save_checkpoint(fld, ckpt_path)
        view = render(fld, eval_poses[0],
                      RenderConfig(n_samples=cfg.n_samples_oracle))
        save_png(view.rgb, os.path.join(snap_dir, f"step_{step:06d}.png"))

    sinks = RunSinks(on_report=on_report, on_snapshot=on_snapshot,
                     snapshot_every=extras.get("snapshot_every", 0))
    try:
        fld, _ = run(scene, cfg, sinks=sinks)
        _atomic_save_checkpoint(fld, ckpt_path)
        manifest["status"] = "completed"
    except Exception:
        manifest["status"] = "failed"
        with open(manifest_path, "w") as fh:
            json.dump(manifest, fh, indent=2)
        report_fh.close()
        raise
    report_fh.close()
    with open(manifest_path, "w") as fh:
        json.dump(manifest, fh, indent=2)
    return manifest


def cmd_distill(args):
    try:
        scene, cfg, extras = _load_run_inputs(args)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out_dir = args.out or os.path.join(_out_root(), scene.name)
    try:
        run_distillation(scene, cfg, extras, out_dir, scene_path=args.scene)
    except Exception as exc:
        print(f"run aborted: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"run completed; manifest at {os.path.join(out_dir, 'run_manifest.json')}")
    return 0


def cmd_mesh(args):
    try:
        fld = load_checkpoint(args.checkpoint)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    mesh = extract_mesh(fld, args.resolution, args.threshold)
    if mesh.is_empty:
        print("warning: extracted mesh is empty (no density crossing)",
              file=sys.stderr)
        return EXIT_EMPTY_MESH
    mesh = normalize_mesh(mesh)
    write_obj(mesh, args.out)
    png_path = os.path.splitext(args.out)[0] + "_front.png"
    save_png(capture_front_view(mesh), png_path)
    print(f"wrote {args.out} and {png_path}")
    return 0


def cmd_eval(args):
    try:
        fld = load_checkpoint(args.checkpoint)
        if not os.path.exists(args.scene):
            raise ConfigurationError(f"scene file not found: {args.scene}")
        scene = load_scene(args.scene)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    poses = make_eval_poses(args.poses, args.resolution)
    pairs = [(poses[i], poses[(i + 1) % len(poses)])
             for i in range(len(poses))]
    iou_threshold = default_iou_threshold(scene)
    report = {
        "psnr_db": eval_psnr(fld, scene, poses, args.samples),
        "density_iou": eval_density_iou(fld, scene,
                                        threshold=iou_threshold),
        "density_iou_threshold": iou_threshold,
        "cross_view_mae": eval_cross_view_consistency(fld, scene, pairs,
                                                      args.samples),
    }
    text = json.dumps(report, indent=2)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    print(text)
    return 0


def run_ablation(scene, base_cfg, pathologies, amplitude=None, seeds=(0,),
                 eval_resolution=48, iou_threshold=None):
    """Pairs of runs (image path off/on) per pathology, shared seeds.

    Returns (rows, grid): rows are dicts with PSNR / density IoU /
    cross-view MAE per cell; grid is an image tiling the first seed's
    trained renders (one row per case, one column per eval pose).
    The IoU threshold defaults to 1.0 (or lower for low-density scenes):
    short ablation runs rarely push densities past the full solid value,
    and the density pathologies show up as missing or spurious moderate
    density rather than as a shift at the top of the range.
    """
    if iou_threshold is None:
        iou_threshold = min(1.0, default_iou_threshold(scene))
    rows = []
    grid_rows = []
    poses = make_eval_poses(resolution=eval_resolution)
    pairs = [(poses[i], poses[(i + 1) % len(poses)])
             for i in range(len(poses))]
    cases = [("clean", None)]
    for name in pathologies:
        amp = amplitude if amplitude is not None \
            else default_pathology_amplitude(name)
        cases.append((name, PathologyConfig(name, amp)))
    for name, pathology in cases:
        lambdas = (1.0,) if pathology is None else (0.0, 1.0)
        for lam_i in lambdas:
            for seed in seeds:
                cfg = replace(base_cfg, lambda_image=lam_i, seed=seed)
                providers = default_providers(scene, cfg, pathology)
                fld, _ = run(scene, cfg, providers=providers)
                if seed == seeds[0]:
                    grid_rows.append(np.concatenate(
                        [render(fld, p, RenderConfig(n_samples=64)).rgb
                         for p in poses], axis=1))
                rows.append({
                    "pathology": name, "lambda_image": lam_i, "seed": seed,
                    "mean_psnr_db": float(np.mean(
                        eval_psnr(fld, scene, poses, 128))),
                    "density_iou": eval_density_iou(
                        fld, scene, threshold=iou_threshold),
                    "cross_view_mae": eval_cross_view_consistency(
                        fld, scene, pairs, 128),
                })
    return rows, np.concatenate(grid_rows, axis=0)


def format_ablation_table(rows):
    header = f"{'pathology':<14}{'lambda_i':>9}{'seed':>6}" \
             f"{'PSNR(dB)':>11}{'IoU':>8}{'xview MAE':>11}"
    lines = [header, "-" * len(header)]
    for r in rows:
        lines.append(f"{r['pathology']:<14}{r['lambda_image']:>9.1f}"
                     f"{r['seed']:>6d}{r['mean_psnr_db']:>11.2f}"
                     f"{r['density_iou']:>8.3f}{r['cross_view_mae']:>11.4f}")
    return "\n".join(lines)


def cmd_ablation(args):
    try:
        scene, cfg, extras = _load_run_inputs(args)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    pathologies = [p for p in (args.pathologies or "").split(",") if p]
    seeds = [int(s) for s in args.seeds.split(",")]
    try:
        rows, grid = run_ablation(scene, cfg, pathologies, args.amplitude,
                                  seeds)
    except Exception as exc:
        print(f"ablation aborted: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    table = format_ablation_table(rows)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "ablation.json"), "w") as fh:
            json.dump(rows, fh, indent=2)
        with open(os.path.join(args.out, "ablation.txt"), "w") as fh:
            fh.write(table + "\n")
        save_png(grid, os.path.join(args.out, "ablation_views.png"))
    print(table)
    return 0


def cmd_render_snapshot(args):
    try:
        fld = load_checkpoint(args.checkpoint)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    pose = pose_from_spherical(args.azimuth, args.elevation, args.distance,
                               args.fov, args.resolution)
    view = render(fld, pose, RenderConfig(n_samples=args.samples))
    save_png(view.rgb, args.out)
    print(f"wrote {args.out}")
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="dualscore",
                                description="Dual-guidance score "
                                "distillation for desk-scale radiance fields")
    sub = p.add_subparsers(dest="command", required=True)

    def add_run_args(sp):
        sp.add_argument("--scene", required=True, help="scene JSON file")
        sp.add_argument("--config", help="run-config file")
        sp.add_argument("--set", action="append", metavar="SECTION.KEY=VAL",
                        help="override a config entry")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--steps", type=int)
        sp.add_argument("--lambda-t", dest="lambda_t", type=float)
        sp.add_argument("--lambda-i", dest="lambda_i", type=float)

    sp = sub.add_parser("distill", help="run a full distillation")
    add_run_args(sp)
    sp.add_argument("--out", help="output directory")
    sp.set_defaults(func=cmd_distill)

    sp = sub.add_parser("mesh", help="extract and emit an OBJ mesh")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--out", required=True, help="OBJ output path")
    sp.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD)
    sp.add_argument("--resolution", type=int, default=64)
    sp.set_defaults(func=cmd_mesh)

    sp = sub.add_parser("eval", help="metrics report for a checkpoint")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--scene", required=True)
    sp.add_argument("--poses", type=int, default=4)
    sp.add_argument("--resolution", type=int, default=64)
    sp.add_argument("--samples", type=int, default=256)
    sp.add_argument("--out", help="write the JSON report here too")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("ablation", help="image-path on/off comparison")
    add_run_args(sp)
    sp.add_argument("--pathologies",
                    default="attenuation,ghost_content,hue_drift")
    sp.add_argument("--amplitude", type=float)
    sp.add_argument("--seeds", default="0")
    sp.add_argument("--out", help="output directory for table files")
    sp.set_defaults(func=cmd_ablation)

    sp = sub.add_parser("render-snapshot", help="render one view of a "
                        "checkpoint to PNG")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--azimuth", type=float, default=0.0)
    sp.add_argument("--elevation", type=float, default=15.0)
    sp.add_argument("--distance", type=float, default=2.2)
    sp.add_argument("--fov", type=float, default=45.0)
    sp.add_argument("--resolution", type=int, default=128)
    sp.add_argument("--samples", type=int, default=256)
    sp.set_defaults(func=cmd_render_snapshot)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
