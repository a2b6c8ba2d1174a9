"""Run-config files: a flat key-value format with [section] headers.

Unknown sections or keys are errors (typo protection), and every parse
error carries the offending line number.  CLI overrides use the same
"section.key=value" addressing.  A fully resolved echo of the config is
written into each run's output directory.
"""

from dataclasses import replace

from .camera import ViewSamplingConfig
from .distill import DistillationConfig
from .errors import ConfigurationError


def _bool(s):
    if s.lower() in ("true", "yes", "1", "on"):
        return True
    if s.lower() in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


# (section, key) -> (type, DistillationConfig attribute or view-tuple slot)
SCHEMA = {
    ("run", "seed"): (int, "seed"),
    ("run", "total_steps"): (int, "total_steps"),
    ("run", "snapshot_every"): (int, None),
    ("view", "fov_min"): (float, ("fov_deg", 0)),
    ("view", "fov_max"): (float, ("fov_deg", 1)),
    ("view", "ref_elevation_min"): (float, ("ref_elevation_deg", 0)),
    ("view", "ref_elevation_max"): (float, ("ref_elevation_deg", 1)),
    ("view", "novel_elevation_min"): (float, ("novel_elevation_deg", 0)),
    ("view", "novel_elevation_max"): (float, ("novel_elevation_deg", 1)),
    ("view", "distance_scale_min"): (float, ("distance_scale", 0)),
    ("view", "distance_scale_max"): (float, ("distance_scale", 1)),
    ("distill", "lambda_text"): (float, "lambda_text"),
    ("distill", "lambda_image"): (float, "lambda_image"),
    ("distill", "gamma_text"): (float, "gamma_text"),
    ("distill", "gamma_image"): (float, "gamma_image"),
    ("distill", "t_min"): (float, "t_min"),
    ("distill", "t_max_start"): (float, "t_max_start"),
    ("distill", "t_max_end"): (float, "t_max_end"),
    ("distill", "t_anneal_steps"): (int, "t_anneal_steps"),
    ("distill", "anneal_t_min"): (_bool, "anneal_t_min"),
    ("distill", "resolution_low"): (int, "resolution_low"),
    ("distill", "resolution_high"): (int, "resolution_high"),
    ("distill", "resolution_switch_step"): (int, "resolution_switch_step"),
    ("distill", "batch_text_early"): (int, "batch_text_early"),
    ("distill", "batch_image_early"): (int, "batch_image_early"),
    ("distill", "batch_text_late"): (int, "batch_text_late"),
    ("distill", "batch_image_late"): (int, "batch_image_late"),
    ("distill", "batch_switch_step"): (int, "batch_switch_step"),
    ("distill", "grad_clip_norm"): (float, "grad_clip_norm"),
    ("field", "grid_res"): (int, "grid_res"),
    ("field", "feat_dim"): (int, "feat_dim"),
    ("field", "mlp_hidden"): (int, "mlp_hidden"),
    ("field", "lr_grid"): (float, "lr_grid"),
    ("field", "lr_mlp"): (float, "lr_mlp"),
    ("field", "weight_decay"): (float, "weight_decay"),
    ("render", "n_samples_train"): (int, "n_samples_train"),
    ("render", "n_samples_oracle"): (int, "n_samples_oracle"),
    ("diffusion", "timesteps"): (int, "diffusion_steps"),
    ("diffusion", "beta_start"): (float, "beta_start"),
    ("diffusion", "beta_end"): (float, "beta_end"),
}

SECTIONS = sorted({sec for sec, _ in SCHEMA})


def parse_config_text(text, origin="<config>"):
    """-> dict {(section, key): typed value}; raises ConfigurationError
    with line numbers on any malformed or unknown entry."""
    values = {}
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section not in SECTIONS:
                raise ConfigurationError(
                    f"{origin}:{lineno}: unknown section [{section}]")
            continue
        if "=" not in line:
            raise ConfigurationError(
                f"{origin}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        if section is None:
            raise ConfigurationError(
                f"{origin}:{lineno}: key outside any [section]")
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if (section, key) not in SCHEMA:
            raise ConfigurationError(
                f"{origin}:{lineno}: unknown key {key!r} in section [{section}]")
        typ, _ = SCHEMA[(section, key)]
        try:
            values[(section, key)] = typ(val)
        except ValueError as exc:
            raise ConfigurationError(
                f"{origin}:{lineno}: bad value for {section}.{key}: {exc}") from exc
    return values


def apply_overrides(values, overrides):
    """Overrides are "section.key=value" strings (CLI flags win over file)."""
    for item in overrides or []:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigurationError(
                f"override must look like section.key=value, got {item!r}")
        addr, _, val = item.partition("=")
        section, _, key = addr.strip().partition(".")
        key, val = key.strip(), val.strip()
        if (section, key) not in SCHEMA:
            raise ConfigurationError(
                f"unknown override target {section}.{key}")
        typ, _ = SCHEMA[(section, key)]
        try:
            values[(section, key)] = typ(val)
        except ValueError as exc:
            raise ConfigurationError(
                f"bad value for override {section}.{key}: {exc}") from exc
    return values


def build_config(values):
    """-> (DistillationConfig, extras dict with e.g. snapshot_every)."""
    view_kwargs = {}
    cfg_kwargs = {}
    extras = {"snapshot_every": 0}
    for (section, key), value in values.items():
        _, target = SCHEMA[(section, key)]
        if target is None:
            extras[key] = value
        elif isinstance(target, tuple):
            name, slot = target
            cur = list(view_kwargs.get(name) or
                       getattr(ViewSamplingConfig(), name))
            cur[slot] = value
            view_kwargs[name] = tuple(cur)
        else:
            cfg_kwargs[target] = value
    view = ViewSamplingConfig(**view_kwargs)
    return DistillationConfig(view=view, **cfg_kwargs), extras


def load_run_config(path, overrides=None):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    values = parse_config_text(text, origin=str(path))
    values = apply_overrides(values, overrides)
    return build_config(values)


def config_echo_text(config, extras=None):
    """Fully resolved config in the same file format (reproducibility)."""
    extras = extras or {}
    view = config.view
    lines = ["# resolved run configuration"]

    def emit(section, pairs):
        lines.append(f"[{section}]")
        lines.extend(f"{k} = {v}" for k, v in pairs)
        lines.append("")

    emit("run", [("seed", config.seed),
                 ("total_steps", config.total_steps),
                 ("snapshot_every", extras.get("snapshot_every", 0))])
    emit("view", [("fov_min", view.fov_deg[0]),
                  ("fov_max", view.fov_deg[1]),
                  ("ref_elevation_min", view.ref_elevation_deg[0]),
                  ("ref_elevation_max", view.ref_elevation_deg[1]),
                  ("novel_elevation_min", view.novel_elevation_deg[0]),
                  ("novel_elevation_max", view.novel_elevation_deg[1]),
                  ("distance_scale_min", view.distance_scale[0]),
                  ("distance_scale_max", view.distance_scale[1])])
    emit("distill", [(k, getattr(config, a)) for k, a in [
        ("lambda_text", "lambda_text"), ("lambda_image", "lambda_image"),
        ("gamma_text", "gamma_text"), ("gamma_image", "gamma_image"),
        ("t_min", "t_min"), ("t_max_start", "t_max_start"),
        ("t_max_end", "t_max_end"), ("t_anneal_steps", "t_anneal_steps"),
        ("anneal_t_min", "anneal_t_min"),
        ("resolution_low", "resolution_low"),
        ("resolution_high", "resolution_high"),
        ("resolution_switch_step", "resolution_switch_step"),
        ("batch_text_early", "batch_text_early"),
        ("batch_image_early", "batch_image_early"),
        ("batch_text_late", "batch_text_late"),
        ("batch_image_late", "batch_image_late"),
        ("batch_switch_step", "batch_switch_step"),
        ("grad_clip_norm", "grad_clip_norm")]])
    emit("field", [(k, getattr(config, k)) for k in
                   ("grid_res", "feat_dim", "mlp_hidden", "lr_grid",
                    "lr_mlp", "weight_decay")])
    emit("render", [("n_samples_train", config.n_samples_train),
                    ("n_samples_oracle", config.n_samples_oracle)])
    emit("diffusion", [("timesteps", config.diffusion_steps),
                       ("beta_start", config.beta_start),
                       ("beta_end", config.beta_end)])
    return "\n".join(lines)


def smoke_config(seed=0, steps=300, resolution=32):
    """Small CPU-friendly profile used for smoke runs and CI."""
    return replace(
        DistillationConfig(),
        total_steps=steps, seed=seed,
        # delta-distribution oracles: guidance at 1.0 is the CFG identity,
        # so the guided target stays the oracle prediction itself
        gamma_text=1.0, gamma_image=1.0,
        resolution_low=resolution, resolution_high=resolution,
        resolution_switch_step=steps + 1,
        batch_text_early=2, batch_image_early=2,
        batch_text_late=2, batch_image_late=2,
        batch_switch_step=steps + 1,
        t_anneal_steps=max(1, (steps * 8) // 10),
        n_samples_train=32, n_samples_oracle=64,
        grid_res=24, feat_dim=8, mlp_hidden=32,
        # short runs need a hotter optimizer than the 10k-step recipe
        lr_grid=0.02, lr_mlp=0.002,
        view=ViewSamplingConfig(resolution=resolution))
