import pytest

from grainfl.config import (ConfigError, ExperimentConfig, build_config,
                            config_to_text, load_config_file)


def test_defaults():
    config = ExperimentConfig()
    assert config.gray_thr == 0.08
    assert config.purity_thr == 0.9
    assert config.var_thr == 0.01
    assert config.phi == 3e6
    assert config.iterations == 300
    assert config.rounds == 20 and config.clients == 5


def test_config_file_overrides(tmp_path):
    path = tmp_path / "exp.cfg"
    path.write_text("""
# a comment
purity_thr = 0.95
rounds=7
figures = false
model = mlp
""")
    config = build_config(str(path))
    assert config.purity_thr == 0.95
    assert config.rounds == 7
    assert config.figures is False
    assert config.model == "mlp"
    assert config.gray_thr == 0.08  # untouched default


def test_cli_flags_beat_config_file(tmp_path):
    path = tmp_path / "exp.cfg"
    path.write_text("rounds = 7\nlr = 0.5\n")
    config = build_config(str(path), {"rounds": 11, "lr": None})
    assert config.rounds == 11   # flag wins
    assert config.lr == 0.5      # None means "flag not given"


def test_unknown_key_rejected(tmp_path):
    path = tmp_path / "exp.cfg"
    path.write_text("no_such_option = 3\n")
    with pytest.raises(ConfigError):
        load_config_file(path)


def test_bad_value_rejected(tmp_path):
    path = tmp_path / "exp.cfg"
    path.write_text("rounds = many\n")
    with pytest.raises(ConfigError):
        load_config_file(path)
    path.write_text("figures = maybe\n")
    with pytest.raises(ConfigError):
        load_config_file(path)
    path.write_text("just a line\n")
    with pytest.raises(ConfigError):
        load_config_file(path)


def test_snapshot_round_trip(tmp_path):
    config = ExperimentConfig(rounds=9, lr=0.25, figures=False, model="mlp")
    path = tmp_path / "snap.cfg"
    path.write_text(config_to_text(config))
    again = build_config(str(path))
    assert again == config


def test_bench_sizes_parsing():
    assert ExperimentConfig(sizes="10, 20,30").bench_sizes() == [10, 20, 30]
    with pytest.raises(ConfigError):
        ExperimentConfig(sizes="").bench_sizes()
    with pytest.raises(ConfigError):
        ExperimentConfig(sizes="10,abc").bench_sizes()
    with pytest.raises(ConfigError):
        ExperimentConfig(sizes="0,10").bench_sizes()


def test_subconfig_views():
    config = ExperimentConfig(purity_thr=0.85, mu=0.1, iterations=50, phi=10.0)
    assert config.granulation().purity_thr == 0.85
    assert config.federation().mu == 0.1
    assert config.attack().iterations == 50
    assert config.metric().phi == 10.0
