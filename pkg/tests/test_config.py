from pathlib import Path

import pytest

from dcrupture.config import ConfigError, RunConfig, config_from_dict, dumps_config, load_config, save_config

CONFIGS = sorted(Path(__file__).resolve().parents[1].joinpath("configs").rglob("*.toml"))


def test_defaults_hold_reference_values():
    cfg = RunConfig()
    fr = cfg.friction
    assert (fr.a_vw, fr.a_vs, fr.b, fr.dc_vw, fr.dc_vs) == (0.009, 0.013, 0.011, 0.2, 1.0)
    assert (fr.f0, fr.v0, fr.sigma_n, fr.sigma_yz0, fr.psi0) == (0.6, 1e-6, 120.0, 72.0, 0.7243)
    assert tuple(fr.vw_region) == (-5.0, 6.0)
    assert (cfg.loading.amplitude, cfg.loading.center, cfg.loading.width) == (25.0, 3.0, 2.0)
    assert (cfg.material.density, cfg.material.shear_modulus) == (2.67, 32.0381)


def test_round_trip(tmp_path):
    cfg = RunConfig().with_overrides(discretization={"m": 61, "dt": 0.01}, inversion={"lower": 1e-3}, output={"snapshot_times": (1.0, 2.5)})
    path = tmp_path / "run.toml"
    save_config(cfg, path)
    again = load_config(path)
    assert again == cfg
    assert again.hash() == cfg.hash()
    assert dumps_config(again) == dumps_config(cfg)


def test_hash_ignores_key_order(tmp_path):
    a = tmp_path / "a.toml"
    b = tmp_path / "b.toml"
    a.write_text('[discretization]\nm = 61\ndt = 0.01\n\n[friction]\nb = 0.012\n')
    b.write_text('[friction]\nb = 0.012\n\n[discretization]\ndt = 0.01\nm = 61\n')
    assert load_config(a).hash() == load_config(b).hash()
    assert load_config(a).hash() != RunConfig().hash()


def test_unknown_key_named_in_error():
    with pytest.raises(ConfigError, match=r"\[friction\]: unknown key 'aa'"):
        config_from_dict({"friction": {"aa": 0.01}})
    with pytest.raises(ConfigError, match="unknown section"):
        config_from_dict({"physics": {}})


def test_wrong_types_named_in_error():
    with pytest.raises(ConfigError, match=r"\[discretization\]\.m"):
        config_from_dict({"discretization": {"m": 61.5}})
    with pytest.raises(ConfigError, match=r"\[friction\]\.b"):
        config_from_dict({"friction": {"b": "large"}})
    with pytest.raises(ConfigError, match=r"\[receivers\]\.outer"):
        config_from_dict({"receivers": {"outer": [1, 2]}})


def test_semantic_validation():
    with pytest.raises(ConfigError, match="order"):
        config_from_dict({"discretization": {"order": 8}})
    with pytest.raises(ConfigError, match="reflection"):
        config_from_dict({"discretization": {"reflection": 0.5}})
    with pytest.raises(ConfigError, match="kind"):
        config_from_dict({"receivers": {"kind": "strain"}})


def test_toml_syntax_error_reports_location(tmp_path):
    path = tmp_path / "bad.toml"
    path.write_text("[discretization]\nm = \n")
    with pytest.raises(ConfigError, match="line 2"):
        load_config(path)


def test_infinite_bounds_survive_round_trip(tmp_path):
    cfg = RunConfig()
    path = tmp_path / "inf.toml"
    save_config(cfg, path)
    assert load_config(path).inversion.upper == float("inf")


@pytest.mark.parametrize("path", CONFIGS, ids=lambda p: p.name)
def test_shipped_configs_load(path):
    load_config(path)
