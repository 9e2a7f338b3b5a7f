import pytest

from candflow.config import CONFIG_ENV, ConfigError, RunConfig


def test_defaults_validate():
    cfg = RunConfig().validate()
    assert cfg.patches.sizes == (16, 44, 104)
    assert cfg.patches.overlap == 0.75 and cfg.patches.n_matches == 2
    p = cfg.aggregation.energy_params()
    assert (p.lambda1, p.lambda2, p.lambda3, p.lambda4) == (5.0, 50.0, 500.0, 20.0)


def test_round_trip():
    cfg = RunConfig.from_profile("middlebury")
    cfg.matching.strategy = "randomized"
    cfg.matching.seed = 17
    cfg.occlusion.sigma = 3.5
    cfg.median.enabled = False
    cfg.patches.sizes = (12, 24)
    back = RunConfig.from_ini(cfg.to_ini())
    assert back == cfg


def test_partial_file_overrides_only_given_keys():
    cfg = RunConfig.from_ini("[aggregation]\nlambda3 = 100\n[median]\nradius = 3\n")
    assert cfg.aggregation.lambda3 == 100.0 and cfg.median.radius == 3
    assert cfg.aggregation.energy_params().lambda3 == 100.0
    assert cfg.patches == RunConfig().patches


@pytest.mark.parametrize("text", [
    "[aggregation]\nlamda3 = 1\n",
    "[bogus]\nx = 1\n",
    "[patches]\noverlap = 1.5\n",
    "[patches]\nn_matches = two\n",
    "[aggregation]\nprofile = kitti\n",
    "[aggregation]\nocclusion = maybe\n",
    "[occlusion]\nkernel = box\n",
    "[occlusion]\nexemplar_patch = 10\n",
    "not an ini file",
])
def test_invalid_configs_rejected(text):
    with pytest.raises(ConfigError):
        RunConfig.from_ini(text)


def test_ablation_switch():
    cfg = RunConfig.from_ini("[aggregation]\nocclusion = false\n")
    p = cfg.aggregation.energy_params()
    assert (p.lambda1, p.lambda2, p.lambda4) == (0.0, 0.0, 0.0) and p.lambda3 == 500.0


def test_load_from_env(tmp_path, monkeypatch):
    path = tmp_path / "c.ini"
    path.write_text("[matching]\nseed = 5\n")
    monkeypatch.setenv(CONFIG_ENV, str(path))
    assert RunConfig.load().matching.seed == 5
    monkeypatch.delenv(CONFIG_ENV)
    assert RunConfig.load() == RunConfig()
