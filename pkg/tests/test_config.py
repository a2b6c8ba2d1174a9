import pytest

from dualscore.config import (apply_overrides, build_config,
                              config_echo_text, load_run_config,
                              parse_config_text, smoke_config)
from dualscore.errors import ConfigurationError

SAMPLE = """\
# comment line
[run]
seed = 7
total_steps = 42
snapshot_every = 10

[distill]
lambda_image = 0.5
gamma_text = 12.5

[view]
fov_min = 20.0
"""


def test_parse_and_build():
    cfg, extras = build_config(parse_config_text(SAMPLE))
    assert cfg.seed == 7
    assert cfg.total_steps == 42
    assert cfg.lambda_image == 0.5
    assert cfg.gamma_text == 12.5
    assert cfg.view.fov_deg == (20.0, 60.0)
    assert extras["snapshot_every"] == 10
    # untouched fields keep their published defaults
    assert cfg.gamma_image == 3.0
    assert cfg.lambda_text == 1.0


def test_unknown_key_reports_line_number():
    with pytest.raises(ConfigurationError, match=r"<config>:3: unknown key"):
        parse_config_text("\n[run]\nseedd = 7\n")


def test_unknown_section_reports_line_number():
    with pytest.raises(ConfigurationError, match=r":1: unknown section"):
        parse_config_text("[running]\n")


def test_bad_value_reports_line_number():
    with pytest.raises(ConfigurationError, match=r":2: bad value"):
        parse_config_text("[run]\nseed = banana\n")


def test_key_outside_section_rejected():
    with pytest.raises(ConfigurationError, match="outside any"):
        parse_config_text("seed = 1\n")


def test_missing_equals_rejected():
    with pytest.raises(ConfigurationError, match="expected"):
        parse_config_text("[run]\nseed 1\n")


def test_overrides_win_over_file():
    values = parse_config_text(SAMPLE)
    values = apply_overrides(values, ["run.seed=99", "distill.gamma_text=1.0"])
    cfg, _ = build_config(values)
    assert cfg.seed == 99
    assert cfg.gamma_text == 1.0


def test_override_validation():
    with pytest.raises(ConfigurationError, match="unknown override"):
        apply_overrides({}, ["run.sed=1"])
    with pytest.raises(ConfigurationError, match="section.key=value"):
        apply_overrides({}, ["seed=1"])
    with pytest.raises(ConfigurationError, match="bad value"):
        apply_overrides({}, ["run.seed=x"])


def test_invalid_combination_caught_at_build():
    values = parse_config_text("[distill]\nt_min = 0.9\nt_max_end = 0.5\n")
    with pytest.raises(ConfigurationError):
        build_config(values)


def test_boolean_parsing():
    values = parse_config_text("[distill]\nanneal_t_min = true\n")
    cfg, _ = build_config(values)
    assert cfg.anneal_t_min is True
    with pytest.raises(ConfigurationError):
        parse_config_text("[distill]\nanneal_t_min = maybe\n")


def test_echo_round_trip():
    cfg, extras = build_config(parse_config_text(SAMPLE))
    echoed = config_echo_text(cfg, extras)
    cfg2, extras2 = build_config(parse_config_text(echoed))
    assert cfg2 == cfg
    assert extras2["snapshot_every"] == extras["snapshot_every"]


def test_load_run_config(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text(SAMPLE)
    cfg, _ = load_run_config(path, ["run.total_steps=5"])
    assert cfg.total_steps == 5
    with pytest.raises(ConfigurationError, match="cannot read"):
        load_run_config(tmp_path / "missing.cfg")


def test_smoke_profile_shape():
    cfg = smoke_config(seed=3, steps=100, resolution=16)
    assert cfg.seed == 3
    assert cfg.total_steps == 100
    assert cfg.resolution_low == cfg.resolution_high == 16
    assert cfg.gamma_text == 1.0 and cfg.gamma_image == 1.0
    assert cfg.batch_text_early == cfg.batch_image_early == 2
