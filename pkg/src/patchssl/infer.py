"""Test-time augmentation averaging and equal-weight model ensembling.

A TTA preset is a named list of transforms, each a short chain of
deterministically parameterized augmentations. tta_predict averages the
model's prediction on the original patch and on every transformed copy, so a
preset of k transforms yields the mean of k+1 predictions.

Presets shipped:

* ``tta_dense10`` — the ten-transform set (flip both ways, rotate +30deg,
  crop 10% per side, scale 110%, translate +10% both axes, sharpen and
  emboss blends at alpha 0.5, gaussian noise sigma 0.02, hue/saturation
  shift). Eleven predictions per example.
* ``tta_ens15`` — fifteen transforms for ensembling: the seven exact
  right-angle flips/rotations plus brightness, contrast, saturation and hue
  jitters and four combinations of them. Color jitters degrade to identity
  or brightness-like shifts on grayscale patches.

The noise transform draws from a stream seeded by (preset, transform index,
example id), so repeated calls agree bit for bit.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .data import AugmentSpec, Example, augment, aug
from .model import Network, ValidationError, forward
from .numerics import Rng, derive_seed

PRESET_COUNTS = {"tta_dense10": 10, "tta_ens15": 15}


@dataclass(frozen=True)
class TtaPreset:
    name: str
    transforms: tuple[tuple[AugmentSpec, ...], ...]

    def __post_init__(self):
        expected = PRESET_COUNTS.get(self.name)
        if expected is not None and len(self.transforms) != expected:
            raise ValidationError(
                f"preset {self.name} must hold {expected} transforms, got {len(self.transforms)}")


def _dense10() -> TtaPreset:
    return TtaPreset("tta_dense10", (
        (aug("hflip"),),
        (aug("vflip"),),
        (aug("rotate", degrees=30.0),),
        (aug("crop_pad", frac=0.1),),
        (aug("scale", factor=1.1),),
        (aug("translate", tx=0.1, ty=0.1),),
        (aug("sharpen_blend", alpha=0.5, amount=1.0),),
        (aug("emboss_blend", alpha=0.5),),
        (aug("gaussian_noise", sigma=0.02),),
        (aug("hue_saturation", dh=0.05, sat=1.1),),
    ))


def _ens15() -> TtaPreset:
    return TtaPreset("tta_ens15", (
        (aug("vflip"),),
        (aug("hflip"),),
        (aug("rotate", degrees=90.0),),
        (aug("rotate", degrees=180.0),),
        (aug("rotate", degrees=270.0),),
        (aug("hflip"), aug("rotate", degrees=90.0)),
        (aug("hflip"), aug("rotate", degrees=270.0)),
        (aug("brightness", delta=0.1),),
        (aug("contrast", factor=1.2),),
        (aug("hue_saturation", dh=0.0, sat=1.2),),
        (aug("hue_saturation", dh=0.05, sat=1.0),),
        (aug("brightness", delta=0.1), aug("contrast", factor=1.2)),
        (aug("contrast", factor=0.8), aug("hue_saturation", dh=0.0, sat=0.8)),
        (aug("brightness", delta=-0.1), aug("hue_saturation", dh=-0.05, sat=1.0)),
        (aug("brightness", delta=0.05), aug("contrast", factor=1.1),
         aug("hue_saturation", dh=0.03, sat=1.1)),
    ))


_PRESETS = {"tta_dense10": _dense10, "tta_ens15": _ens15}


def get_preset(name: str) -> TtaPreset:
    if name not in _PRESETS:
        raise ValidationError(f"unknown TTA preset {name!r}; have {sorted(_PRESETS)}")
    return _PRESETS[name]()


def _predict_one(net: Network, patch: np.ndarray) -> float:
    p, _ = forward(net, patch[None])
    return float(p[0, 0])


def tta_predict(net: Network, e: Example, preset: TtaPreset) -> float:
    """Blend of the predictions on the original patch and every preset
    transform, with equal weights: k transforms give a mean of k+1 values."""
    if net.mode != "eval":
        raise ValidationError("tta_predict needs the network in eval mode")
    preds = [_predict_one(net, e.patch)]
    for idx, chain in enumerate(preset.transforms):
        ex = e
        rng = Rng(derive_seed(0, "tta", preset.name, str(idx), e.id))
        for spec in chain:
            ex = augment(ex, spec, rng)
        preds.append(_predict_one(net, ex.patch))
    return ensemble_predict(preds)


def ensemble_predict(preds, weights=None) -> float:
    """Weighted mean of model predictions; equal weights by default."""
    p = np.asarray(list(preds), dtype=np.float64)
    if p.size == 0:
        raise ValidationError("ensemble_predict needs at least one prediction")
    if weights is None:
        return float(p.mean())
    w = np.asarray(list(weights), dtype=np.float64)
    if w.shape != p.shape:
        raise ValidationError(f"{w.size} weights for {p.size} predictions")
    if np.any(w < 0) or w.sum() <= 0:
        raise ValidationError("weights must be nonnegative with positive sum")
    return float((p * w).sum() / w.sum())


# ---------------------------------------------------------------------------
# predictions CSV: the on-disk interchange for predict / ensemble / eval

def predictions_csv(preds: dict[str, float], metadata_line: str | None = None) -> str:
    buf = io.StringIO()
    if metadata_line:
        buf.write("# " + metadata_line.rstrip("\n") + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["id", "probability"])
    for eid in preds:
        writer.writerow([eid, repr(float(preds[eid]))])
    return buf.getvalue()


def load_predictions(path) -> dict[str, float]:
    preds: dict[str, float] = {}
    with open(path, newline="") as f:
        header_seen = False
        for lineno, line in enumerate(f, start=1):
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            row = next(csv.reader([line]))
            if not header_seen:
                if [c.strip() for c in row] != ["id", "probability"]:
                    raise ValidationError(f"{path} row {lineno}: header must be id,probability")
                header_seen = True
                continue
            if len(row) != 2:
                raise ValidationError(f"{path} row {lineno}: expected 2 fields")
            eid, val = row[0].strip(), row[1].strip()
            if eid in preds:
                raise ValidationError(f"{path} row {lineno}: duplicate id {eid!r}")
            try:
                preds[eid] = float(val)
            except ValueError:
                raise ValidationError(f"{path} row {lineno}: bad probability {val!r}") from None
    if not header_seen:
        raise ValidationError(f"{path}: missing header row")
    return preds
