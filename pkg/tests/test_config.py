import math

import pytest

from dpsra.config import ScenarioConfig, config_from_mapping, load_config
from dpsra.exceptions import ConfigError


def test_defaults_match_reference_table():
    cfg = ScenarioConfig()
    assert cfg.cell_radius_m == 1000.0
    assert cfg.pathloss_alpha == 15.3
    assert cfg.pathloss_beta == 37.6
    assert cfg.shadowing_var == 8.0
    assert cfg.noise_power_dbm == -99.0
    assert cfg.n_users == 10000
    assert cfg.n_clusters == 4
    assert cfg.group_size == 5
    assert cfg.groups_per_cluster == 1000
    assert cfg.cluster_preamble_len == 32
    assert cfg.tx_power_dbm == 23.0
    assert cfg.symbols_per_slot == 839
    assert cfg.safety_factor == 1.1
    assert cfg.target_pf == 0.05 and cfg.target_pm == 0.05


def test_default_rings_equal_width():
    cfg2 = ScenarioConfig(n_clusters=2)
    assert cfg2.cluster_rings == [(0.0, 500.0), (500.0, 1000.0)]
    cfg4 = ScenarioConfig(n_clusters=4)
    assert cfg4.cluster_rings == [(0.0, 250.0), (250.0, 500.0),
                                  (500.0, 750.0), (750.0, 1000.0)]


def test_linear_power_conversions():
    cfg = ScenarioConfig()
    assert math.isclose(cfg.noise_power_mw, 10 ** (-9.9))
    assert math.isclose(cfg.tx_power_mw, 10 ** 2.3)
    assert math.isclose(cfg.tx_power2_mw, cfg.tx_power_mw)
    assert math.isclose(cfg.symbol_seconds, 0.5e-3 / 839)


@pytest.mark.parametrize("bad", [
    dict(group_size=0),
    dict(sparsity=1.0),
    dict(sparsity=-0.1),
    dict(safety_factor=0.9),
    dict(cell_radius_m=0.0),
    dict(target_pf=0.0),
    dict(estimator="magic"),
    dict(cluster_rings=[(0.0, 400.0), (500.0, 1000.0)]),      # gap
    dict(cluster_rings=[(0.0, 500.0), (500.0, 900.0)]),        # no cover
    dict(n_clusters=2, cluster_rings=[(0.0, 1000.0)]),         # count mismatch
])
def test_invalid_configs_rejected(bad):
    with pytest.raises(ConfigError):
        ScenarioConfig(**bad)


def test_degenerate_no_grouping_layout_allowed():
    cfg = ScenarioConfig(n_clusters=1, cluster_rings=[(0.0, 1000.0)], group_size=1)
    assert cfg.group_size == 1


def test_mapping_rejects_unknown_keys():
    with pytest.raises(ConfigError):
        config_from_mapping({"not_a_key": "1"})


def test_file_loader_roundtrip(tmp_path):
    path = tmp_path / "scenario.cfg"
    path.write_text(
        "# comment line\n"
        "n_users = 4321\n"
        "sparsity = 0.03   # trailing comment\n"
        "n_clusters = 2\n"
        "cluster_rings = 0:500,500:1000\n"
        "shadowing_enabled = false\n"
        "\n")
    cfg = load_config(str(path))
    assert cfg.n_users == 4321
    assert cfg.sparsity == 0.03
    assert cfg.cluster_rings == [(0.0, 500.0), (500.0, 1000.0)]
    assert cfg.shadowing_enabled is False
    # unspecified keys keep defaults
    assert cfg.tx_power_dbm == 23.0


def test_file_loader_unknown_key(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("warp_factor = 9\n")
    with pytest.raises(ConfigError):
        load_config(str(path))


def test_file_loader_bad_syntax(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("just some words\n")
    with pytest.raises(ConfigError):
        load_config(str(path))


def test_overrides_do_not_mutate():
    cfg = ScenarioConfig()
    cfg2 = cfg.with_overrides(sparsity=0.07)
    assert cfg.sparsity == 0.05 and cfg2.sparsity == 0.07
