import pytest

from privfit.config import (
    ConfigError,
    ExperimentConfig,
    RunManifest,
    build_config,
    parse_config_file,
)


def write(tmp_path, text):
    path = tmp_path / "exp.cfg"
    path.write_text(text)
    return path


class TestParseFile:
    def test_basic_keys_and_comments(self, tmp_path):
        path = write(
            tmp_path,
            """
            # experiment settings
            master_seed = 99
            records = 400          # total records
            sigma_list = 2, 4.5
            eval_every = none
            """,
        )
        values = parse_config_file(path)
        assert values == {
            "master_seed": 99,
            "records": 400,
            "sigma_list": (2.0, 4.5),
            "eval_every": None,
        }

    def test_unknown_key_rejected(self, tmp_path):
        path = write(tmp_path, "no_such_key = 1\n")
        with pytest.raises(ConfigError, match="unknown key"):
            parse_config_file(path)

    def test_duplicate_key_rejected(self, tmp_path):
        path = write(tmp_path, "records = 1\nrecords = 2\n")
        with pytest.raises(ConfigError, match="duplicate"):
            parse_config_file(path)

    def test_bad_value_names_line(self, tmp_path):
        path = write(tmp_path, "records = 1\nfolds = ten\n")
        with pytest.raises(ConfigError, match=":2"):
            parse_config_file(path)

    def test_missing_equals_rejected(self, tmp_path):
        path = write(tmp_path, "just a line\n")
        with pytest.raises(ConfigError, match="key = value"):
            parse_config_file(path)


class TestBuildConfig:
    def test_desk_defaults(self):
        config = build_config("desk")
        assert config.records == 20_000
        assert config.lot_size == 96
        assert config.folds == 10

    def test_paper_defaults(self):
        config = build_config("paper")
        assert config.records == 1_000_000
        assert config.lot_size == 960

    def test_file_overrides_defaults(self, tmp_path):
        path = write(tmp_path, "records = 2000\nlot_size = 50\n")
        config = build_config("desk", path)
        assert config.records == 2000
        assert config.lot_size == 50

    def test_flags_override_file(self, tmp_path):
        path = write(tmp_path, "master_seed = 5\n")
        config = build_config("desk", path, {"master_seed": 11})
        assert config.master_seed == 11

    def test_invalid_bias_rejected(self, tmp_path):
        path = write(tmp_path, "bias_offset = 0.6\n")
        with pytest.raises(ConfigError, match="bias"):
            build_config("desk", path)

    def test_lot_bigger_than_fold_rejected(self, tmp_path):
        path = write(tmp_path, "records = 200\nlot_size = 50\n")  # fold size 20
        with pytest.raises(ConfigError, match="lot_size"):
            build_config("desk", path)

    def test_indivisible_folds_rejected(self, tmp_path):
        path = write(tmp_path, "records = 1002\n")
        with pytest.raises(ConfigError):
            build_config("desk", path)

    def test_unknown_scale_rejected(self):
        with pytest.raises(ConfigError):
            build_config("galactic")

    def test_hash_stable_and_sensitive(self):
        a = build_config("desk")
        b = build_config("desk")
        c = build_config("desk", overrides={"master_seed": 2})
        assert a.hash() == b.hash()
        assert a.hash() != c.hash()


class TestManifest:
    def test_lifecycle(self, tmp_path):
        config = build_config("desk")
        manifest = RunManifest.start("overfit", config, ["a.csv"])
        manifest.write(tmp_path)
        assert (tmp_path / "manifest.json").exists()
        (tmp_path / "a.csv").write_text("x\n")
        manifest.finish(tmp_path)
        text = (tmp_path / "manifest.json").read_text()
        assert '"finished_unix"' in text
        assert '"a.csv"' in text

    def test_finish_requires_outputs(self, tmp_path):
        config = build_config("desk")
        manifest = RunManifest.start("overfit", config, ["missing.csv"])
        manifest.write(tmp_path)
        with pytest.raises(RuntimeError, match="missing.csv"):
            manifest.finish(tmp_path)


def test_train_configs_derived():
    config = ExperimentConfig()
    sgd = config.sgd_config()
    assert sgd.mode == "sgd"
    assert sgd.lot_size == 96
    dpsgd = config.dpsgd_config(2.0)
    assert dpsgd.noise_scale == 2.0
    assert dpsgd.clip_norm == 4.0
    conv = config.conv_dpsgd_config(8.5)
    assert conv.epochs == config.conv_epochs
    assert conv.eval_every == config.conv_eval_every
