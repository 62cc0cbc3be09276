"""Datasets of labeled / unlabeled image patches and their transformations.

Patches are float64 arrays of shape (C, H, W) with values in [0, 1], stored
on disk as 8-bit PGM (1 channel) or PPM (3 channels) next to a CSV manifest.
The synthetic generator produces a desk-scale stand-in for real patch data:
positives carry a bright textured blob inside the center third of the patch,
negatives are background texture only, so a center-intensity statistic
separates the classes perfectly at zero noise.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, replace

import numpy as np

from .numerics import Rng

POSITIVE = "positive"
NEGATIVE = "negative"
UNLABELED = "unlabeled"
PSEUDO_POSITIVE = "pseudo_positive"
PSEUDO_NEGATIVE = "pseudo_negative"

LABELS = (POSITIVE, NEGATIVE, UNLABELED, PSEUDO_POSITIVE, PSEUDO_NEGATIVE)

AUGMENT_KINDS = (
    "hflip", "vflip", "rotate", "crop_pad", "scale", "translate",
    "sharpen_blend", "emboss_blend", "gaussian_noise", "hue_saturation",
    "brightness", "contrast",
)

# documented sampling bounds per kind; fixed right-angle rotations are also
# allowed so the exact 90/180/270-degree transforms can be expressed
_BOUNDS = {
    "rotate": (-45.0, 45.0),
    "crop_pad": (0.0, 0.2),
    "scale": (0.8, 1.2),
    "translate": (-0.2, 0.2),
}


class DatasetError(ValueError):
    """Malformed manifest, patch file or dataset operation input."""


def label_value(label: str) -> float:
    if label in (POSITIVE, PSEUDO_POSITIVE):
        return 1.0
    if label in (NEGATIVE, PSEUDO_NEGATIVE):
        return 0.0
    raise DatasetError(f"label {label!r} carries no class value")


def is_labeled(label: str) -> bool:
    return label != UNLABELED


@dataclass(frozen=True, eq=False)
class Example:
    id: str
    patch: np.ndarray  # (C, H, W), values in [0, 1]
    label: str

    def __post_init__(self):
        if self.label not in LABELS:
            raise DatasetError(f"unknown label {self.label!r}")

    def with_label(self, label: str) -> "Example":
        return replace(self, label=label)


@dataclass
class Dataset:
    examples: list[Example]
    split_tag: str = "train"

    def __post_init__(self):
        seen = set()
        for e in self.examples:
            if e.id in seen:
                raise DatasetError(f"duplicate id {e.id!r} in dataset")
            seen.add(e.id)

    def __len__(self):
        return len(self.examples)

    def __iter__(self):
        return iter(self.examples)

    def ids(self) -> list[str]:
        return [e.id for e in self.examples]

    def where(self, pred) -> "Dataset":
        return Dataset([e for e in self.examples if pred(e)], self.split_tag)


def stack_patches(examples) -> np.ndarray:
    return np.stack([e.patch for e in examples])


# ---------------------------------------------------------------------------
# synthetic generation

def center_window(patch_size: int) -> tuple[int, int]:
    """Start (inclusive) and stop (exclusive) of the labeled center region,
    one third of the patch side, at least 3 pixels."""
    w = max(3, round(patch_size / 3))
    lo = (patch_size - w) // 2
    return lo, lo + w


def generate_synthetic(n: int, positive_frac: float, patch_size: int,
                       noise: float, rng: Rng, channels: int = 1) -> Dataset:
    """Deterministic synthetic patch dataset with exact labels.

    round(positive_frac * n) examples are positive. Positives add a bright
    super-gaussian blob (radius 0.12 * patch_size, textured, amplitude
    0.30-0.38) whose center sits in the center window; all patches share the
    same background distribution and get N(0, noise^2) pixel noise. Pixels
    are clipped to [0, 1] and quantized to the 8-bit grid so that saving and
    reloading reproduces them bit-exactly.
    """
    if n <= 0:
        raise DatasetError(f"need n > 0, got {n}")
    if not 0.0 < positive_frac < 1.0:
        raise DatasetError(f"positive_frac must lie in (0,1), got {positive_frac}")
    n_pos = round(positive_frac * n)
    labels = np.array([1] * n_pos + [0] * (n - n_pos))
    labels = labels[rng.permutation(n)]

    h = w = patch_size
    lo, hi = center_window(patch_size)
    win_center = lo + (hi - lo - 1) / 2.0
    radius = 0.12 * patch_size
    jitter = max(0.0, (hi - lo - 1) / 2.0 - radius)
    ii, jj = np.meshgrid(np.arange(h, dtype=np.float64),
                         np.arange(w, dtype=np.float64), indexing="ij")

    examples = []
    for k in range(n):
        base = rng.uniform(0.43, 0.47)
        patch = base + 0.02 * rng.uniform(-1.0, 1.0, (channels, h, w))
        if labels[k]:
            cy = win_center + rng.uniform(-jitter, jitter)
            cx = win_center + rng.uniform(-jitter, jitter)
            amp = rng.uniform(0.30, 0.38)
            texture = 1.0 + 0.25 * rng.uniform(-1.0, 1.0, (h, w))
            d2 = ((ii - cy) ** 2 + (jj - cx) ** 2) / radius**2
            patch = patch + (amp * np.exp(-(d2**2)) * texture)[None, :, :]
        if noise > 0:
            patch = patch + rng.normal(0.0, noise, patch.shape)
        patch = np.round(np.clip(patch, 0.0, 1.0) * 255.0) / 255.0
        label = POSITIVE if labels[k] else NEGATIVE
        examples.append(Example(id=f"syn-{k:06d}", patch=patch, label=label))
    return Dataset(examples)


# ---------------------------------------------------------------------------
# patch files (8-bit PGM / PPM, plain or raw) and CSV manifests

def save_patch(path, patch: np.ndarray, comment: str | None = None) -> None:
    patch = np.asarray(patch, dtype=np.float64)
    if patch.ndim != 3 or patch.shape[0] not in (1, 3):
        raise DatasetError(f"patch must be (1|3, H, W), got {patch.shape}")
    c, h, w = patch.shape
    magic = b"P5" if c == 1 else b"P6"
    raw = np.round(np.clip(patch, 0.0, 1.0) * 255.0).astype(np.uint8)
    interleaved = np.moveaxis(raw, 0, 2).tobytes()  # H,W,C order per PNM
    with open(path, "wb") as f:
        f.write(magic + b"\n")
        if comment:
            f.write(b"# " + comment.encode("utf-8") + b"\n")
        f.write(f"{w} {h}\n255\n".encode("ascii"))
        f.write(interleaved)


def _pnm_tokens(data: bytes, count: int, start: int):
    """Yield `count` whitespace-separated header tokens, skipping comments."""
    tokens = []
    i = start
    while len(tokens) < count:
        if i >= len(data):
            raise DatasetError("truncated PNM header")
        ch = data[i:i + 1]
        if ch == b"#":
            while i < len(data) and data[i:i + 1] != b"\n":
                i += 1
        elif ch.isspace():
            i += 1
        else:
            j = i
            while j < len(data) and not data[j:j + 1].isspace() and data[j:j + 1] != b"#":
                j += 1
            tokens.append(data[i:j])
            i = j
    return tokens, i


def load_patch(path) -> np.ndarray:
    """Read a plain or raw 8-bit PGM/PPM file into a (C, H, W) float patch."""
    with open(path, "rb") as f:
        data = f.read()
    magic = data[:2]
    if magic not in (b"P2", b"P3", b"P5", b"P6"):
        raise DatasetError(f"{path}: unsupported PNM magic {magic!r}")
    channels = 3 if magic in (b"P3", b"P6") else 1
    tokens, pos = _pnm_tokens(data, 3, 2)
    w, h, maxval = (int(t) for t in tokens)
    if not 0 < maxval < 256:
        raise DatasetError(f"{path}: only 8-bit PNM supported, maxval {maxval}")
    n_values = w * h * channels
    if magic in (b"P5", b"P6"):
        pos += 1  # exactly one whitespace byte after maxval
        body = np.frombuffer(data, dtype=np.uint8, count=n_values, offset=pos)
        if body.size < n_values:
            raise DatasetError(f"{path}: truncated pixel data")
    else:
        values = data[pos:].split()
        if len(values) < n_values:
            raise DatasetError(f"{path}: truncated pixel data")
        body = np.array([int(v) for v in values[:n_values]], dtype=np.float64)
    patch = np.asarray(body, dtype=np.float64).reshape(h, w, channels)
    return np.ascontiguousarray(np.moveaxis(patch, 2, 0)) / float(maxval)


_MANIFEST_HEADER = ["id", "label", "path"]
_LABEL_TO_FIELD = {POSITIVE: "1", NEGATIVE: "0", UNLABELED: "unlabeled",
                   PSEUDO_POSITIVE: "1", PSEUDO_NEGATIVE: "0"}
_FIELD_TO_LABEL = {"1": POSITIVE, "0": NEGATIVE, "unlabeled": UNLABELED}


def save_dataset(dataset: Dataset, out_dir, manifest_name="manifest.csv",
                 metadata_line: str | None = None) -> str:
    """Write patches under out_dir/patches and a manifest CSV; returns its path."""
    patches_dir = os.path.join(out_dir, "patches")
    os.makedirs(patches_dir, exist_ok=True)
    manifest_path = os.path.join(out_dir, manifest_name)
    with open(manifest_path, "w", newline="") as f:
        if metadata_line:
            f.write("# " + metadata_line.rstrip("\n") + "\n")
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(_MANIFEST_HEADER)
        for e in dataset:
            ext = "pgm" if e.patch.shape[0] == 1 else "ppm"
            rel = f"patches/{e.id}.{ext}"
            save_patch(os.path.join(out_dir, rel), e.patch, comment=metadata_line)
            writer.writerow([e.id, _LABEL_TO_FIELD[e.label], rel])
    return manifest_path


def load_dataset(manifest_path, split_tag: str = "train") -> Dataset:
    """Load a manifest CSV and its patch files; pixel values land in [0, 1]."""
    base = os.path.dirname(os.path.abspath(manifest_path))
    if not os.path.exists(manifest_path):
        raise DatasetError(f"manifest {manifest_path} does not exist")
    examples = []
    seen: set[str] = set()
    header_seen = False
    shape = None
    with open(manifest_path, newline="") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            row = next(csv.reader([line]))
            if not header_seen:
                if [c.strip() for c in row] != _MANIFEST_HEADER:
                    raise DatasetError(
                        f"{manifest_path} row {lineno}: header must be id,label,path")
                header_seen = True
                continue
            if len(row) != 3:
                raise DatasetError(f"{manifest_path} row {lineno}: expected 3 fields, got {len(row)}")
            eid, label_field, rel = (c.strip() for c in row)
            if label_field not in _FIELD_TO_LABEL:
                raise DatasetError(
                    f"{manifest_path} row {lineno}: label must be 0, 1 or unlabeled, got {label_field!r}")
            if eid in seen:
                raise DatasetError(f"{manifest_path} row {lineno}: duplicate id {eid!r}")
            seen.add(eid)
            patch_path = os.path.join(base, rel)
            if not os.path.exists(patch_path):
                raise DatasetError(f"{manifest_path} row {lineno}: patch file {rel} missing")
            patch = load_patch(patch_path)
            if shape is None:
                shape = patch.shape
            elif patch.shape != shape:
                raise DatasetError(
                    f"{manifest_path} row {lineno}: patch shape {patch.shape} != {shape}")
            examples.append(Example(id=eid, patch=patch, label=_FIELD_TO_LABEL[label_field]))
    if not header_seen:
        raise DatasetError(f"{manifest_path}: missing header row")
    return Dataset(examples, split_tag)


# ---------------------------------------------------------------------------
# outlier filtering and splitting

def filter_outliers(d: Dataset, white_thresh: float = 0.95, black_thresh: float = 0.95,
                    white_level: float = 0.96, black_level: float = 0.04):
    """Drop structureless patches: too many near-white or near-black pixels.

    An example is removed iff the fraction of pixels >= white_level exceeds
    white_thresh, or the fraction <= black_level exceeds black_thresh.
    Returns (kept, removed), a partition of the input.
    """
    for name, v in (("white_thresh", white_thresh), ("black_thresh", black_thresh)):
        if not 0.0 < v <= 1.0:
            raise DatasetError(f"{name} must lie in (0,1], got {v}")
    kept, removed = [], []
    for e in d:
        white_frac = float(np.mean(e.patch >= white_level))
        black_frac = float(np.mean(e.patch <= black_level))
        (removed if white_frac > white_thresh or black_frac > black_thresh else kept).append(e)
    return Dataset(kept, d.split_tag), Dataset(removed, d.split_tag)


def split(d: Dataset, val_frac: float, rng: Rng):
    """Disjoint, exhaustive, label-stratified split into (train, val)."""
    if not 0.0 < val_frac < 1.0:
        raise DatasetError(f"val_frac must lie in (0,1), got {val_frac}")
    by_label: dict[str, list[int]] = {}
    for idx, e in enumerate(d):
        by_label.setdefault(e.label, []).append(idx)
    val_idx = set()
    for label in sorted(by_label):
        idxs = by_label[label]
        if len(idxs) < 2:
            raise DatasetError(f"class {label!r} has {len(idxs)} example(s), cannot split")
        order = rng.permutation(len(idxs))
        n_val = round(val_frac * len(idxs))
        val_idx.update(idxs[i] for i in order[:n_val])
    train = [e for i, e in enumerate(d) if i not in val_idx]
    val = [e for i, e in enumerate(d) if i in val_idx]
    return Dataset(train, "train"), Dataset(val, "val")


# ---------------------------------------------------------------------------
# augmentations

@dataclass(frozen=True)
class AugmentSpec:
    """One augmentation with either fixed parameters or (lo, hi) ranges.

    Range parameters are sampled per application from the supplied rng;
    scalar parameters make the transform deterministic (how the TTA presets
    are built). Geometric parameter values must stay inside the documented
    bounds; rotate additionally accepts exact right angles.
    """

    kind: str
    params: tuple = ()

    def __post_init__(self):
        if self.kind not in AUGMENT_KINDS:
            raise DatasetError(f"unknown augmentation kind {self.kind!r}")
        bound = _BOUNDS.get(self.kind)
        if bound is None:
            return
        lo, hi = bound
        for _, v in self.params:
            for x in (v if isinstance(v, tuple) else (v,)):
                if self.kind == "rotate" and float(x) % 90.0 == 0.0:
                    continue
                if not lo <= float(x) <= hi:
                    raise DatasetError(
                        f"{self.kind} parameter {x} outside documented bounds [{lo}, {hi}]")

    def get(self, name, default):
        for k, v in self.params:
            if k == name:
                return v
        return default


def aug(kind: str, **params) -> AugmentSpec:
    return AugmentSpec(kind, tuple(sorted(params.items())))


def train_augmentations(noise_sigma: float = 0.05) -> list[AugmentSpec]:
    """The ten online training transforms, each with its sampling range."""
    return [
        aug("hflip"),
        aug("vflip"),
        aug("rotate", degrees=(-45.0, 45.0)),
        aug("crop_pad", frac=(0.0, 0.2)),
        aug("scale", factor=(0.8, 1.2)),
        aug("translate", tx=(-0.2, 0.2), ty=(-0.2, 0.2)),
        aug("sharpen_blend", alpha=(0.0, 1.0)),
        aug("emboss_blend", alpha=(0.0, 1.0)),
        aug("gaussian_noise", sigma=(0.0, noise_sigma)),
        aug("hue_saturation", dh=(-0.1, 0.1), sat=(0.8, 1.2)),
    ]


def _sample(v, rng: Rng) -> float:
    if isinstance(v, tuple):
        lo, hi = v
        if rng is None:
            raise DatasetError("sampling an augmentation range needs an rng")
        return float(rng.uniform(lo, hi))
    return float(v)


def _reflect_index(idx: np.ndarray, n: int) -> np.ndarray:
    if n == 1:
        return np.zeros_like(idx)
    period = 2 * n
    m = np.remainder(idx, period)
    return np.where(m < n, m, period - 1 - m)


def _bilinear(patch: np.ndarray, src_i: np.ndarray, src_j: np.ndarray) -> np.ndarray:
    """Sample patch channels at float coordinates with reflection padding."""
    h, w = patch.shape[1:]
    i0 = np.floor(src_i).astype(np.int64)
    j0 = np.floor(src_j).astype(np.int64)
    fi = src_i - i0
    fj = src_j - j0
    i0r = _reflect_index(i0, h)
    i1r = _reflect_index(i0 + 1, h)
    j0r = _reflect_index(j0, w)
    j1r = _reflect_index(j0 + 1, w)
    out = np.empty_like(patch)
    for c in range(patch.shape[0]):
        ch = patch[c]
        out[c] = (ch[i0r, j0r] * (1 - fi) * (1 - fj)
                  + ch[i0r, j1r] * (1 - fi) * fj
                  + ch[i1r, j0r] * fi * (1 - fj)
                  + ch[i1r, j1r] * fi * fj)
    return out


def _grid(h: int, w: int):
    return np.meshgrid(np.arange(h, dtype=np.float64),
                       np.arange(w, dtype=np.float64), indexing="ij")


def _conv3x3_reflect(patch: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    padded = np.pad(patch, ((0, 0), (1, 1), (1, 1)), mode="symmetric")
    h, w = patch.shape[1:]
    out = np.zeros_like(patch)
    for di in range(3):
        for dj in range(3):
            out += kernel[di, dj] * padded[:, di:di + h, dj:dj + w]
    return out


_EMBOSS_KERNEL = np.array([[-2.0, -1.0, 0.0], [-1.0, 1.0, 1.0], [0.0, 1.0, 2.0]])
_BOX_KERNEL = np.full((3, 3), 1.0 / 9.0)


def _rgb_to_hsv(p: np.ndarray) -> np.ndarray:
    r, g, b = p[0], p[1], p[2]
    maxc = np.max(p, axis=0)
    minc = np.min(p, axis=0)
    v = maxc
    span = maxc - minc
    s = np.where(maxc > 0, span / np.maximum(maxc, 1e-12), 0.0)
    safe = np.maximum(span, 1e-12)
    rc = (maxc - r) / safe
    gc = (maxc - g) / safe
    bc = (maxc - b) / safe
    h = np.where(maxc == r, bc - gc, np.where(maxc == g, 2.0 + rc - bc, 4.0 + gc - rc))
    h = np.where(span > 0, (h / 6.0) % 1.0, 0.0)
    return np.stack([h, s, v])


def _hsv_to_rgb(p: np.ndarray) -> np.ndarray:
    h, s, v = p[0], p[1], p[2]
    i = np.floor(h * 6.0)
    f = h * 6.0 - i
    i = i.astype(np.int64) % 6
    q = v * (1.0 - s * f)
    t = v * (1.0 - s * (1.0 - f))
    low = v * (1.0 - s)
    r = np.choose(i, [v, q, low, low, t, v])
    g = np.choose(i, [t, v, v, q, low, low])
    b = np.choose(i, [low, low, t, v, v, q])
    return np.stack([r, g, b])


def augment(e: Example, spec: AugmentSpec, rng: Rng | None) -> Example:
    """Apply one augmentation; label and shape are preserved, pixels clipped.

    Geometric transforms resample with bilinear interpolation and reflection
    padding; rotations by exact multiples of 90 degrees take a lossless
    array-rotation path. hue_saturation is the identity on 1-channel patches.
    """
    patch = e.patch
    c, h, w = patch.shape
    kind = spec.kind

    if kind == "hflip":
        patch = patch[:, :, ::-1].copy()
    elif kind == "vflip":
        patch = patch[:, ::-1, :].copy()
    elif kind == "rotate":
        degrees = _sample(spec.get("degrees", (-45.0, 45.0)), rng)
        if degrees % 90.0 == 0.0:
            patch = np.ascontiguousarray(np.rot90(patch, int(degrees // 90) % 4, axes=(1, 2)))
        else:
            theta = np.deg2rad(degrees)
            cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
            oi, oj = _grid(h, w)
            di, dj = oi - cy, oj - cx
            src_i = cy + np.cos(theta) * di + np.sin(theta) * dj
            src_j = cx - np.sin(theta) * di + np.cos(theta) * dj
            patch = _bilinear(patch, src_i, src_j)
    elif kind == "crop_pad":
        frac = spec.get("frac", (0.0, 0.2))
        top, bottom, left, right = (_sample(frac, rng) for _ in range(4))
        oi, oj = _grid(h, w)
        ti, bi = top * (h - 1), bottom * (h - 1)
        li, ri = left * (w - 1), right * (w - 1)
        src_i = ti + oi * (h - 1 - ti - bi) / (h - 1)
        src_j = li + oj * (w - 1 - li - ri) / (w - 1)
        patch = _bilinear(patch, src_i, src_j)
    elif kind == "scale":
        factor = _sample(spec.get("factor", (0.8, 1.2)), rng)
        cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
        oi, oj = _grid(h, w)
        patch = _bilinear(patch, cy + (oi - cy) / factor, cx + (oj - cx) / factor)
    elif kind == "translate":
        tx = _sample(spec.get("tx", (-0.2, 0.2)), rng)
        ty = _sample(spec.get("ty", (-0.2, 0.2)), rng)
        oi, oj = _grid(h, w)
        patch = _bilinear(patch, oi - ty * h, oj - tx * w)
    elif kind == "sharpen_blend":
        alpha = _sample(spec.get("alpha", (0.0, 1.0)), rng)
        amount = _sample(spec.get("amount", 1.0), rng)
        sharp = patch + amount * (patch - _conv3x3_reflect(patch, _BOX_KERNEL))
        patch = (1.0 - alpha) * patch + alpha * sharp
    elif kind == "emboss_blend":
        alpha = _sample(spec.get("alpha", (0.0, 1.0)), rng)
        patch = (1.0 - alpha) * patch + alpha * _conv3x3_reflect(patch, _EMBOSS_KERNEL)
    elif kind == "gaussian_noise":
        sigma = _sample(spec.get("sigma", (0.0, 0.05)), rng)
        if rng is None:
            raise DatasetError("gaussian_noise needs an rng")
        patch = patch + rng.normal(0.0, 1.0, patch.shape) * sigma
    elif kind == "hue_saturation":
        if c == 3:
            dh = _sample(spec.get("dh", (-0.1, 0.1)), rng)
            sat = _sample(spec.get("sat", (0.8, 1.2)), rng)
            hsv = _rgb_to_hsv(patch)
            hsv[0] = (hsv[0] + dh) % 1.0
            hsv[1] = np.clip(hsv[1] * sat, 0.0, 1.0)
            patch = _hsv_to_rgb(hsv)
        else:
            patch = patch.copy()
    elif kind == "brightness":
        delta = _sample(spec.get("delta", (-0.15, 0.15)), rng)
        patch = patch + delta
    elif kind == "contrast":
        factor = _sample(spec.get("factor", (0.7, 1.3)), rng)
        pivot = patch.mean()
        patch = pivot + (patch - pivot) * factor

    patch = np.clip(patch, 0.0, 1.0)
    return Example(id=e.id, patch=patch, label=e.label)
