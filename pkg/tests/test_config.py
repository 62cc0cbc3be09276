import pytest

from patchssl.config import (ConfigFileError, build_experiment, config_hash,
                             dump_toml, load_toml, metadata_line, resolve)


def test_resolve_defaults_complete():
    resolved = resolve({}, {})
    assert resolved["train"]["runs"] == 10
    assert resolved["train"]["epochs"] == 7
    assert resolved["pseudo"]["positive_above"] == 0.9
    assert resolved["pseudo"]["negative_below"] == 0.1
    assert resolved["train"]["lr_max"] == 0.00055
    assert resolved["data"]["labeled_frac"] == 0.05


def test_resolve_file_and_flag_precedence():
    resolved = resolve({"train": {"runs": 4}}, {"train.runs": 2})
    assert resolved["train"]["runs"] == 2  # flags win
    resolved = resolve({"train": {"runs": 4}}, {"train.runs": None})
    assert resolved["train"]["runs"] == 4  # unset flags fall through


def test_resolve_rejects_unknown_keys():
    with pytest.raises(ConfigFileError, match="unknown config key"):
        resolve({"train": {"nope": 1}}, {})
    with pytest.raises(ConfigFileError, match="unknown config section"):
        resolve({"wat": {}}, {})
    with pytest.raises(ConfigFileError):
        resolve({}, {"train.nope": 1})


def test_resolve_type_checks():
    with pytest.raises(ConfigFileError, match="train.runs"):
        resolve({"train": {"runs": "ten"}}, {})
    with pytest.raises(ConfigFileError, match="train.augment"):
        resolve({"train": {"augment": 1}}, {})
    assert resolve({"train": {"lr_max": 1}}, {})["train"]["lr_max"] == 1.0


def test_config_hash_stable_and_sensitive():
    a = resolve({}, {})
    b = resolve({}, {})
    assert config_hash(a) == config_hash(b)
    assert len(config_hash(a)) == 12
    c = resolve({}, {"train.runs": 3})
    assert config_hash(a) != config_hash(c)


def test_metadata_line_format():
    line = metadata_line(7, resolve({}, {}))
    assert line.startswith("patchssl 0.1.0 seed=7 config=")


def test_dump_toml_roundtrips(tmp_path):
    resolved = resolve({}, {"train.runs": 3, "data.noise": 0.3})
    path = tmp_path / "cfg.toml"
    path.write_text(dump_toml(resolved, seed=11))
    loaded = load_toml(path)
    seed = loaded.pop("experiment")["seed"]
    assert seed == 11
    assert resolve(loaded, {}) == resolved


def test_load_toml_errors(tmp_path):
    with pytest.raises(ConfigFileError, match="does not exist"):
        load_toml(tmp_path / "missing.toml")
    bad = tmp_path / "bad.toml"
    bad.write_text("not toml ][")
    with pytest.raises(ConfigFileError):
        load_toml(bad)


def test_build_experiment_synthetic_pools():
    resolved = resolve({}, {"data.n": 200, "data.holdout_n": 40, "data.noise": 0.2,
                            "data.labeled_frac": 0.1})
    exp = build_experiment(resolved, seed=5)
    assert len(exp.train_pool) + len(exp.val_pool) == 20
    assert len(exp.unlabeled_pool) == 180
    assert all(e.label == "unlabeled" for e in exp.unlabeled_pool)
    assert len(exp.holdout) == 40
    assert exp.input_shape == (1, 16, 16)
    ids = {e.id for e in exp.train_pool} | {e.id for e in exp.val_pool} | \
          {e.id for e in exp.unlabeled_pool}
    assert len(ids) == 200


def test_build_experiment_manifest_mode(tmp_path):
    from patchssl.data import generate_synthetic, save_dataset
    from patchssl.numerics import Rng

    d = generate_synthetic(30, 0.5, 8, 0.2, Rng(8))
    d.examples = [e.with_label("unlabeled") if i >= 20 else e
                  for i, e in enumerate(d.examples)]
    manifest = save_dataset(d, tmp_path)
    resolved = resolve({"data": {"mode": "manifest", "manifest": str(manifest)}}, {})
    exp = build_experiment(resolved, seed=1)
    assert len(exp.train_pool) + len(exp.val_pool) == 20
    assert len(exp.unlabeled_pool) == 10
    assert exp.holdout is None
    assert exp.input_shape == (1, 8, 8)
