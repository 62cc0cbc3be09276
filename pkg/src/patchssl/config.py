"""Experiment configuration: TOML files, flag overrides, resolution, hashing.

A config file holds [data], [train] and [pseudo] sections; every key has a
default, so an empty file is a valid experiment. Flags win over file values.
resolve() materializes every default into one nested dict, which is what gets
hashed (seed excluded) and written back out next to the run's outputs.
"""

from __future__ import annotations

import hashlib
import json
import sys

if sys.version_info >= (3, 11):
    import tomllib as _toml
else:
    import tomli as _toml

from .data import Dataset, UNLABELED, filter_outliers, generate_synthetic, is_labeled, load_dataset, split
from .numerics import Rng, derive_seed
from .pseudolabel import PseudoSettings, SslExperiment, TrainSettings

TOOL_VERSION = "0.1.0"


class ConfigFileError(ValueError):
    """Config file missing, unparsable, or holding unknown/invalid keys."""


DEFAULTS: dict[str, dict] = {
    "data": {
        "mode": "synthetic",        # "synthetic" or "manifest"
        "n": 2000,
        "positive_frac": 0.5,
        "patch_size": 16,
        "channels": 1,
        "noise": 0.25,
        "labeled_frac": 0.05,
        "holdout_n": 400,
        "filter_outliers": True,
        "manifest": "",
        "holdout_manifest": "",
        "val_frac": 0.2,
    },
    "train": {
        "runs": 10,
        "epochs": 7,
        "batch_size": 16,
        "lr_max": 0.00055,
        "lr_min": 0.0,              # 0 derives lr_max / 10
        "final_lr": 0.0,            # 0 derives lr_min / 100
        "step_frac": 0.4,
        "momentum_high": 0.95,
        "momentum_low": 0.85,
        "augment": False,
        "epoch_scope": "corpus",
    },
    "pseudo": {
        "positive_above": 0.9,
        "negative_below": 0.1,
        "alpha_final": 1.0,
        "alpha_t1": 1,
        "alpha_t2": 5,
        "tta_prediction": False,
        "entropy_every_epoch": True,
    },
}


def load_toml(path) -> dict:
    try:
        with open(path, "rb") as f:
            return _toml.load(f)
    except FileNotFoundError:
        raise ConfigFileError(f"config file {path} does not exist") from None
    except _toml.TOMLDecodeError as err:
        raise ConfigFileError(f"config file {path}: {err}") from None


def resolve(file_cfg: dict | None = None, overrides: dict | None = None) -> dict:
    """Merge defaults <- file <- overrides into a fully explicit config dict.

    overrides maps "section.key" to values; unknown sections or keys raise.
    """
    resolved = {s: dict(v) for s, v in DEFAULTS.items()}
    for section, values in (file_cfg or {}).items():
        if section not in resolved:
            raise ConfigFileError(f"unknown config section [{section}]")
        if not isinstance(values, dict):
            raise ConfigFileError(f"[{section}] must be a table of keys")
        for key, value in values.items():
            if key not in resolved[section]:
                raise ConfigFileError(f"unknown config key {section}.{key}")
            resolved[section][key] = value
    for dotted, value in (overrides or {}).items():
        if value is None:
            continue
        section, _, key = dotted.partition(".")
        if section not in resolved or key not in resolved[section]:
            raise ConfigFileError(f"unknown config key {dotted}")
        resolved[section][key] = value
    for section in resolved:
        for key, default in DEFAULTS[section].items():
            value = resolved[section][key]
            if isinstance(default, bool) != isinstance(value, bool) or not isinstance(
                    value, type(default) if not isinstance(default, float) else (int, float)):
                raise ConfigFileError(
                    f"config key {section}.{key} must be {type(default).__name__}, "
                    f"got {value!r}")
            if isinstance(default, float):
                resolved[section][key] = float(value)
    return resolved


def config_hash(resolved: dict) -> str:
    blob = json.dumps(resolved, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def metadata_line(seed: int, resolved: dict) -> str:
    return f"patchssl {TOOL_VERSION} seed={seed} config={config_hash(resolved)}"


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float)):
        return repr(v)
    return '"' + str(v).replace("\\", "\\\\").replace('"', '\\"') + '"'


def dump_toml(resolved: dict, seed: int | None = None) -> str:
    """Serialize a resolved config (plus the seed) back to TOML text."""
    lines = []
    if seed is not None:
        lines += ["[experiment]", f"seed = {int(seed)}", ""]
    for section in sorted(resolved):
        lines.append(f"[{section}]")
        for key in sorted(resolved[section]):
            lines.append(f"{key} = {_toml_value(resolved[section][key])}")
        lines.append("")
    return "\n".join(lines)


def train_settings(resolved: dict) -> TrainSettings:
    return TrainSettings(**resolved["train"])


def pseudo_settings(resolved: dict) -> PseudoSettings:
    return PseudoSettings(**resolved["pseudo"])


def build_experiment(resolved: dict, seed: int) -> SslExperiment:
    """Materialize the datasets named by the config and wire up the driver input."""
    d = resolved["data"]
    if d["mode"] == "synthetic":
        full = generate_synthetic(
            int(d["n"]), d["positive_frac"], int(d["patch_size"]), d["noise"],
            Rng(derive_seed(seed, "data")), channels=int(d["channels"]))
        if d["filter_outliers"]:
            full, _ = filter_outliers(full)
        rest, labeled = split(full, d["labeled_frac"], Rng(derive_seed(seed, "label-split")))
        unlabeled = [e.with_label(UNLABELED) for e in rest]
        holdout = list(generate_synthetic(
            int(d["holdout_n"]), d["positive_frac"], int(d["patch_size"]), d["noise"],
            Rng(derive_seed(seed, "holdout")), channels=int(d["channels"])))
        channels, patch = int(d["channels"]), int(d["patch_size"])
    elif d["mode"] == "manifest":
        if not d["manifest"]:
            raise ConfigFileError("data.mode='manifest' needs data.manifest")
        loaded = load_dataset(d["manifest"])
        labeled = loaded.where(lambda e: is_labeled(e.label))
        unlabeled = [e for e in loaded if not is_labeled(e.label)]
        holdout = list(load_dataset(d["holdout_manifest"])) if d["holdout_manifest"] else None
        if len(labeled) < 2:
            raise ConfigFileError(f"manifest {d['manifest']} holds {len(labeled)} labeled rows")
        shape = labeled.examples[0].patch.shape
        channels, patch = shape[0], shape[1]
    else:
        raise ConfigFileError(f"data.mode must be 'synthetic' or 'manifest', got {d['mode']!r}")

    train_pool, val_pool = split(Dataset(list(labeled), "train"), d["val_frac"],
                                 Rng(derive_seed(seed, "val-split")))
    return SslExperiment(
        train_pool=list(train_pool),
        val_pool=list(val_pool),
        unlabeled_pool=unlabeled,
        holdout=holdout,
        input_shape=(channels, patch, patch),
        seed=seed,
        val_frac=d["val_frac"],
        train=train_settings(resolved),
        pseudo=pseudo_settings(resolved),
    )
