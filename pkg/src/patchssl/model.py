"""The micro network: layer graph, forward pass, hand-derived gradients.

Layers are described by LayerSpec records; build_network chains their shapes,
initializes parameters and returns a Network. forward/backward carry an
explicit activation cache between them, so both stay pure functions of their
arguments apart from batch-norm running statistics (updated in train mode
unless told otherwise).

Gradients are derived per layer by hand; grad_check verifies every one of
them against central finite differences.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .numerics import NumericError, Rng, ShapeError, check_finite, derive_seed

BCE_EPS = 1e-7
BN_EPS = 1e-5
BN_MOMENTUM = 0.9

LAYER_KINDS = (
    "dense",
    "conv3x3",
    "batchnorm",
    "relu",
    "sigmoid",
    "gap_gmp_concat",
    "dropout",
    "dense_block",
    "transition",
)

CHECKPOINT_MAGIC = "PATCHSSL-CKPT v1"


class ValidationError(ValueError):
    """Bad labels, weights or layer configuration."""


class ConfigError(ValueError):
    """Layer sequence cannot be assembled into a network."""


class StaleCacheError(RuntimeError):
    """Activation cache does not belong to the network's current parameters."""


@dataclass(frozen=True)
class LayerSpec:
    """One layer of the network; only the fields its kind uses are meaningful.

    units: output width of a dense layer.
    channels: output feature maps of conv3x3.
    depth/growth: dense_block layer count L and feature maps added per layer.
    p: dropout probability.
    """

    kind: str
    units: int = 0
    channels: int = 0
    depth: int = 0
    growth: int = 0
    p: float = 0.6

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ValidationError(f"unknown layer kind {self.kind!r}")
        if self.kind == "dense" and self.units < 1:
            raise ValidationError("dense layer needs units >= 1")
        if self.kind == "conv3x3" and self.channels < 1:
            raise ValidationError("conv3x3 layer needs channels >= 1")
        if self.kind == "dense_block" and (self.depth < 1 or self.growth < 1):
            raise ValidationError("dense_block needs depth >= 1 and growth >= 1")
        if self.kind == "dropout" and not 0.0 <= self.p < 1.0:
            raise ValidationError("dropout probability must lie in [0, 1)")

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        for name in ("units", "channels", "depth", "growth"):
            v = getattr(self, name)
            if v:
                d[name] = v
        if self.kind == "dropout":
            d["p"] = self.p
        return d

    @staticmethod
    def from_dict(d: dict) -> "LayerSpec":
        return LayerSpec(**d)


def dense_block_connections(depth: int) -> int:
    """Feature-reuse connections inside a block of the given depth."""
    return depth * (depth + 1) // 2


def transition_out_channels(m: int) -> int:
    """Feature maps a transition layer emits for m incoming maps."""
    return m // 2


@dataclass
class ParamSet:
    """All network state: trainable tensors, momentum buffers, BN statistics."""

    tensors: dict[str, np.ndarray] = field(default_factory=dict)
    momentum: dict[str, np.ndarray] = field(default_factory=dict)
    state: dict[str, np.ndarray] = field(default_factory=dict)
    version: int = 0

    def add(self, key: str, value: np.ndarray):
        self.tensors[key] = value
        self.momentum[key] = np.zeros_like(value)

    def n_params(self) -> int:
        return sum(v.size for v in self.tensors.values())

    def copy(self) -> "ParamSet":
        return ParamSet(
            tensors={k: v.copy() for k, v in self.tensors.items()},
            momentum={k: v.copy() for k, v in self.momentum.items()},
            state={k: v.copy() for k, v in self.state.items()},
            version=self.version,
        )


class Network:
    """Layer sequence plus parameters and a train/eval mode switch."""

    def __init__(self, layers, input_shape, shapes, params):
        self.layers = list(layers)
        self.input_shape = tuple(input_shape)
        self.shapes = shapes  # per-layer output shape (sample shape, no batch dim)
        self.params = params
        self.mode = "eval"

    def train(self) -> "Network":
        self.mode = "train"
        return self

    def eval(self) -> "Network":
        self.mode = "eval"
        return self

    def n_params(self) -> int:
        return self.params.n_params()


def default_config() -> list[LayerSpec]:
    """The stock micro architecture used by training runs."""
    return [
        LayerSpec("conv3x3", channels=8),
        LayerSpec("dense_block", depth=2, growth=4),
        LayerSpec("transition"),
        LayerSpec("gap_gmp_concat"),
        LayerSpec("batchnorm"),
        LayerSpec("dropout", p=0.6),
        LayerSpec("dense", units=1),
        LayerSpec("sigmoid"),
    ]


def _he_normal(rng: Rng, shape, fan_in: int) -> np.ndarray:
    return rng.normal(0.0, np.sqrt(2.0 / fan_in), shape)


def build_network(config, rng: Rng, input_shape=(1, 16, 16)) -> Network:
    """Chain layer shapes from input_shape and initialize all parameters.

    Conv and dense weights get He-scaled normal init, batch norm starts at
    scale 1 / shift 0 with unit running variance. The last layer must be the
    only sigmoid, fed exactly one unit.
    """
    layers = [l if isinstance(l, LayerSpec) else LayerSpec.from_dict(l) for l in config]
    if not layers:
        raise ConfigError("empty layer config")
    sig_positions = [i for i, l in enumerate(layers) if l.kind == "sigmoid"]
    if sig_positions != [len(layers) - 1]:
        raise ConfigError("network must end in exactly one sigmoid output head")

    params = ParamSet()
    shapes = []
    shape = tuple(int(s) for s in input_shape)
    for i, spec in enumerate(layers):
        kind = spec.kind
        if kind == "conv3x3":
            if len(shape) != 3:
                raise ConfigError(f"layer {i}: conv3x3 needs C,H,W input, got {shape}")
            c, h, w = shape
            params.add(f"{i}.w", _he_normal(rng, (spec.channels, c, 3, 3), c * 9))
            params.add(f"{i}.b", np.zeros(spec.channels))
            shape = (spec.channels, h, w)
        elif kind == "dense_block":
            if len(shape) != 3:
                raise ConfigError(f"layer {i}: dense_block needs C,H,W input, got {shape}")
            c, h, w = shape
            for ell in range(spec.depth):
                cin = c + ell * spec.growth
                params.add(f"{i}.l{ell}.w", _he_normal(rng, (spec.growth, cin, 3, 3), cin * 9))
                params.add(f"{i}.l{ell}.b", np.zeros(spec.growth))
            shape = (c + spec.depth * spec.growth, h, w)
        elif kind == "transition":
            if len(shape) != 3:
                raise ConfigError(f"layer {i}: transition needs C,H,W input, got {shape}")
            c, h, w = shape
            cout = transition_out_channels(c)
            if cout < 1:
                raise ConfigError(f"layer {i}: transition of {c} maps would emit {cout}")
            if h % 2 or w % 2:
                raise ConfigError(f"layer {i}: transition pooling needs even H,W, got {h}x{w}")
            params.add(f"{i}.w", _he_normal(rng, (cout, c), c))
            params.add(f"{i}.b", np.zeros(cout))
            shape = (cout, h // 2, w // 2)
        elif kind == "gap_gmp_concat":
            if len(shape) != 3:
                raise ConfigError(f"layer {i}: gap_gmp_concat needs C,H,W input, got {shape}")
            shape = (2 * shape[0],)
        elif kind == "batchnorm":
            n_feat = shape[0]
            params.add(f"{i}.gamma", np.ones(n_feat))
            params.add(f"{i}.beta", np.zeros(n_feat))
            params.state[f"{i}.running_mean"] = np.zeros(n_feat)
            params.state[f"{i}.running_var"] = np.ones(n_feat)
        elif kind == "dense":
            if len(shape) != 1:
                raise ConfigError(f"layer {i}: dense needs a flat input, got {shape}")
            d = shape[0]
            params.add(f"{i}.w", _he_normal(rng, (d, spec.units), d))
            params.add(f"{i}.b", np.zeros(spec.units))
            shape = (spec.units,)
        elif kind in ("relu", "dropout"):
            pass
        elif kind == "sigmoid":
            if shape != (1,):
                raise ConfigError(f"layer {i}: sigmoid head needs one unit, got {shape}")
        shapes.append(shape)

    if shapes[-1] != (1,):
        raise ConfigError(f"network output shape is {shapes[-1]}, expected (1,)")
    return Network(layers, input_shape, shapes, params)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _bn_axes(x: np.ndarray):
    return (0,) if x.ndim == 2 else (0, 2, 3)


def _bn_reshape(v: np.ndarray, x: np.ndarray) -> np.ndarray:
    return v if x.ndim == 2 else v[None, :, None, None]


def forward(net: Network, batch: np.ndarray, rng: Rng | None = None, *,
            dropout_masks: dict | None = None, update_stats: bool = True):
    """Run the network on a batch; returns (probabilities, cache).

    In train mode dropout draws masks from rng (inverted scaling) and batch
    norm uses batch statistics; in eval mode dropout is the identity and
    batch norm uses running statistics. dropout_masks overrides the draw per
    layer index, which grad_check uses to replay a fixed mask.
    """
    x = np.ascontiguousarray(np.asarray(batch, dtype=np.float64))
    if x.shape[1:] != net.input_shape:
        raise ShapeError(f"batch shape {x.shape[1:]} does not match input {net.input_shape}")
    train = net.mode == "train"
    p = net.params
    layer_caches = []
    for i, spec in enumerate(net.layers):
        kind = spec.kind
        lc = {}
        if kind == "dense":
            lc["x"] = x
            x = kernels.matmul(np.ascontiguousarray(x), p.tensors[f"{i}.w"]) + p.tensors[f"{i}.b"]
        elif kind == "conv3x3":
            lc["x"] = x
            x = kernels.conv3x3_forward(x, p.tensors[f"{i}.w"], p.tensors[f"{i}.b"])
        elif kind == "transition":
            lc["x"] = x
            z = kernels.conv1x1_forward(x, p.tensors[f"{i}.w"], p.tensors[f"{i}.b"])
            lc["hw"] = z.shape[2:]
            x = kernels.avgpool2x2_forward(z)
        elif kind == "dense_block":
            feats = [x]
            sub = []
            for ell in range(spec.depth):
                xin = feats[0] if ell == 0 else np.concatenate(feats, axis=1)
                z = kernels.conv3x3_forward(xin, p.tensors[f"{i}.l{ell}.w"], p.tensors[f"{i}.l{ell}.b"])
                mask = z > 0
                feats.append(np.where(mask, z, 0.0))
                sub.append({"xin": xin, "mask": mask})
            lc["sub"] = sub
            lc["group_channels"] = [f.shape[1] for f in feats]
            x = np.concatenate(feats, axis=1)
        elif kind == "relu":
            lc["mask"] = x > 0
            x = np.where(lc["mask"], x, 0.0)
        elif kind == "sigmoid":
            x = _sigmoid(x)
            lc["y"] = x
        elif kind == "gap_gmp_concat":
            n, c, h, w = x.shape
            flat = x.reshape(n, c, h * w)
            lc["in_shape"] = x.shape
            lc["argmax"] = flat.argmax(axis=2)
            x = np.concatenate([flat.mean(axis=2), flat.max(axis=2)], axis=1)
        elif kind == "batchnorm":
            gamma, beta = p.tensors[f"{i}.gamma"], p.tensors[f"{i}.beta"]
            if train:
                axes = _bn_axes(x)
                mu = x.mean(axis=axes)
                var = x.var(axis=axes)
                ivar = 1.0 / np.sqrt(var + BN_EPS)
                xhat = (x - _bn_reshape(mu, x)) * _bn_reshape(ivar, x)
                if update_stats:
                    rm, rv = p.state[f"{i}.running_mean"], p.state[f"{i}.running_var"]
                    rm *= BN_MOMENTUM
                    rm += (1 - BN_MOMENTUM) * mu
                    rv *= BN_MOMENTUM
                    rv += (1 - BN_MOMENTUM) * var
                lc["xhat"], lc["ivar"] = xhat, ivar
            else:
                rm, rv = p.state[f"{i}.running_mean"], p.state[f"{i}.running_var"]
                ivar = 1.0 / np.sqrt(rv + BN_EPS)
                xhat = (x - _bn_reshape(rm, x)) * _bn_reshape(ivar, x)
            x = _bn_reshape(gamma, xhat) * xhat + _bn_reshape(beta, xhat)
        elif kind == "dropout":
            if train:
                if dropout_masks is not None and i in dropout_masks:
                    mask = dropout_masks[i]
                else:
                    if rng is None:
                        raise ValidationError("train-mode forward through dropout needs an rng")
                    mask = (rng.random(x.shape) >= spec.p) / (1.0 - spec.p)
                lc["mask"] = mask
                x = x * mask
        if not np.all(np.isfinite(x)):
            raise NumericError(f"non-finite activation after layer {i} ({kind})")
        layer_caches.append(lc)

    cache = {
        "version": p.version,
        "mode": net.mode,
        "layers": layer_caches,
        "batch_shape": batch.shape,
    }
    return x, cache


@dataclass
class LossValue:
    value: float
    grad_wrt_output: np.ndarray


def bce_loss(p: np.ndarray, labels: np.ndarray, weights: np.ndarray | None = None) -> LossValue:
    """Weighted binary cross entropy over a batch of probabilities.

    value is (1/B) sum_i w_i * (-l_i log p_i - (1-l_i) log(1-p_i)) with the
    probabilities clamped away from 0 and 1; grad_wrt_output is its exact
    derivative w.r.t. each p_i, ready to chain into backward().
    """
    p = np.asarray(p, dtype=np.float64).reshape(-1, 1)
    labels = np.asarray(labels, dtype=np.float64).reshape(-1, 1)
    if p.shape != labels.shape:
        raise ShapeError(f"probabilities {p.shape} vs labels {labels.shape}")
    if not np.all((labels == 0.0) | (labels == 1.0)):
        raise ValidationError("labels must all be 0 or 1")
    n = p.shape[0]
    if weights is None:
        w = np.ones((n, 1))
    else:
        w = np.asarray(weights, dtype=np.float64).reshape(-1, 1)
        if w.shape[0] != n:
            raise ShapeError(f"{w.shape[0]} weights for batch of {n}")
        if np.any(w < 0):
            raise ValidationError("weights must be nonnegative")
    pc = np.clip(p, BCE_EPS, 1.0 - BCE_EPS)
    per_example = -(labels * np.log(pc) + (1.0 - labels) * np.log1p(-pc))
    value = float(np.sum(w * per_example) / n)
    grad = w * (pc - labels) / (pc * (1.0 - pc)) / n
    check_finite(grad, "bce_loss gradient")
    return LossValue(value, grad)


def backward(net: Network, cache: dict, grad_loss: np.ndarray) -> dict[str, np.ndarray]:
    """Propagate d(loss)/d(output) back through the cached forward pass.

    Returns one gradient array per trainable tensor, keyed like
    ParamSet.tensors. The cache must come from a train-mode forward on the
    current parameters.
    """
    if cache["version"] != net.params.version:
        raise StaleCacheError("cache was built for different parameter values")
    if cache["mode"] != "train":
        raise StaleCacheError("backward needs a cache from a train-mode forward")
    p = net.params
    grads = {k: np.zeros_like(v) for k, v in p.tensors.items()}
    g = np.asarray(grad_loss, dtype=np.float64)

    for i in range(len(net.layers) - 1, -1, -1):
        spec = net.layers[i]
        kind = spec.kind
        lc = cache["layers"][i]
        if kind == "dense":
            x = lc["x"]
            grads[f"{i}.w"] += kernels.matmul(np.ascontiguousarray(x.T), np.ascontiguousarray(g))
            grads[f"{i}.b"] += g.sum(axis=0)
            g = kernels.matmul(np.ascontiguousarray(g), np.ascontiguousarray(p.tensors[f"{i}.w"].T))
        elif kind == "conv3x3":
            g, dw, db = kernels.conv3x3_backward(lc["x"], p.tensors[f"{i}.w"], np.ascontiguousarray(g))
            grads[f"{i}.w"] += dw
            grads[f"{i}.b"] += db
        elif kind == "transition":
            h, w = lc["hw"]
            dz = kernels.avgpool2x2_backward(np.ascontiguousarray(g), h, w)
            g, dw, db = kernels.conv1x1_backward(lc["x"], p.tensors[f"{i}.w"], dz)
            grads[f"{i}.w"] += dw
            grads[f"{i}.b"] += db
        elif kind == "dense_block":
            splits = np.cumsum(lc["group_channels"])[:-1]
            group_grads = [np.ascontiguousarray(a) for a in np.split(g, splits, axis=1)]
            for ell in range(spec.depth - 1, -1, -1):
                sub = lc["sub"][ell]
                dz = group_grads[ell + 1] * sub["mask"]
                dxin, dw, db = kernels.conv3x3_backward(
                    sub["xin"], p.tensors[f"{i}.l{ell}.w"], np.ascontiguousarray(dz))
                grads[f"{i}.l{ell}.w"] += dw
                grads[f"{i}.l{ell}.b"] += db
                in_splits = np.cumsum(lc["group_channels"][:ell + 1])[:-1]
                for gi, part in enumerate(np.split(dxin, in_splits, axis=1)):
                    group_grads[gi] = group_grads[gi] + part
            g = group_grads[0]
        elif kind == "relu":
            g = g * lc["mask"]
        elif kind == "sigmoid":
            y = lc["y"]
            g = g * y * (1.0 - y)
        elif kind == "gap_gmp_concat":
            n, c, h, w = lc["in_shape"]
            dmean = g[:, :c]
            dmax = g[:, c:]
            dx = np.broadcast_to(dmean[:, :, None, None] / (h * w), (n, c, h, w)).copy()
            flat = dx.reshape(n, c, h * w)
            idx = lc["argmax"][:, :, None]
            np.put_along_axis(flat, idx, np.take_along_axis(flat, idx, axis=2) + dmax[:, :, None], axis=2)
            g = dx
        elif kind == "batchnorm":
            xhat, ivar = lc["xhat"], lc["ivar"]
            axes = _bn_axes(xhat)
            m = xhat.size // xhat.shape[1]
            gamma = p.tensors[f"{i}.gamma"]
            grads[f"{i}.beta"] += g.sum(axis=axes)
            grads[f"{i}.gamma"] += (g * xhat).sum(axis=axes)
            dxhat = g * _bn_reshape(gamma, xhat)
            s1 = _bn_reshape(dxhat.sum(axis=axes), xhat)
            s2 = _bn_reshape((dxhat * xhat).sum(axis=axes), xhat)
            g = _bn_reshape(ivar, xhat) / m * (m * dxhat - s1 - xhat * s2)
        elif kind == "dropout":
            if "mask" in lc:
                g = g * lc["mask"]
    return grads


def sgd_momentum_step(params: ParamSet, grads: dict[str, np.ndarray],
                      lr: float, momentum: float) -> ParamSet:
    """buffer <- momentum*buffer + grad; param <- param - lr*buffer (in place)."""
    if lr <= 0:
        raise ValidationError(f"learning rate must be positive, got {lr}")
    if not 0.0 <= momentum < 1.0:
        raise ValidationError(f"momentum must lie in [0, 1), got {momentum}")
    for key in sorted(params.tensors):
        g = grads[key]
        if g.shape != params.tensors[key].shape:
            raise ShapeError(f"gradient shape {g.shape} vs parameter {params.tensors[key].shape} for {key}")
        buf = params.momentum[key]
        buf *= momentum
        buf += g
        params.tensors[key] -= lr * buf
    params.version += 1
    return params


def zero_grads(params: ParamSet) -> dict[str, np.ndarray]:
    return {k: np.zeros_like(v) for k, v in params.tensors.items()}


def relative_errors(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    """|a-n| / (|a|+|n|) elementwise, with the denominator floored at 1e-5
    so finite-difference noise around zero gradients cannot dominate."""
    denom = np.maximum(np.abs(analytic) + np.abs(numeric), 1e-5)
    return np.abs(analytic - numeric) / denom


@dataclass
class GradCheckReport:
    per_tensor: dict[str, float]
    max_rel_err: float
    n_params: int

    def per_layer(self) -> dict[str, float]:
        out: dict[str, float] = {}
        for key, err in self.per_tensor.items():
            layer = key.split(".")[0]
            out[layer] = max(out.get(layer, 0.0), err)
        return out


def grad_check(net: Network, batch, labels, eps: float = 1e-5,
               rng: Rng | None = None) -> GradCheckReport:
    """Compare backward() against central finite differences of the BCE loss.

    The same dropout masks are replayed for every perturbed evaluation and
    batch-norm running statistics are left untouched; batch statistics are
    recomputed per evaluation, exactly as backward differentiates them.
    """
    if not 1e-6 <= eps <= 1e-4:
        raise ValidationError(f"grad_check eps must lie in [1e-6, 1e-4], got {eps}")
    if net.n_params() > 10_000:
        raise ValidationError(f"grad_check is for small nets, got {net.n_params()} params")
    if rng is None:
        rng = Rng(derive_seed(0, "grad-check"))
    labels = np.asarray(labels, dtype=np.float64).reshape(-1, 1)
    prev_mode = net.mode
    net.train()
    try:
        probs, cache = forward(net, batch, rng, update_stats=False)
        masks = {i: lc["mask"] for i, lc in enumerate(cache["layers"])
                 if net.layers[i].kind == "dropout" and "mask" in lc}
        analytic = backward(net, cache, bce_loss(probs, labels).grad_wrt_output)

        def loss_now() -> float:
            pr, _ = forward(net, batch, dropout_masks=masks, update_stats=False)
            return bce_loss(pr, labels).value

        per_tensor = {}
        for key in sorted(net.params.tensors):
            t = net.params.tensors[key]
            flat = t.ravel()
            numeric = np.zeros(flat.size)
            for j in range(flat.size):
                orig = flat[j]
                flat[j] = orig + eps
                up = loss_now()
                flat[j] = orig - eps
                down = loss_now()
                flat[j] = orig
                numeric[j] = (up - down) / (2.0 * eps)
            per_tensor[key] = float(relative_errors(analytic[key].ravel(), numeric).max())
    finally:
        net.mode = prev_mode
    return GradCheckReport(per_tensor, max(per_tensor.values()), net.n_params())


# ---------------------------------------------------------------------------
# checkpoint container: text header (json) + raw little-endian float64 data

def save_checkpoint(net: Network, path, meta: dict | None = None) -> None:
    """Write the network to a single versioned file.

    Layout: magic line, decimal byte length of the JSON header on its own
    line, the header itself, then the flat parameter data as little-endian
    float64 in the order listed under header["tensors"].
    """
    entries = []
    blobs = []
    p = net.params
    for group, table in (("tensors", p.tensors), ("momentum", p.momentum), ("state", p.state)):
        for key in sorted(table):
            entries.append({"group": group, "key": key, "shape": list(table[key].shape)})
            blobs.append(np.ascontiguousarray(table[key], dtype="<f8").tobytes())
    header = {
        "input_shape": list(net.input_shape),
        "layers": [l.to_dict() for l in net.layers],
        "mode": net.mode,
        "tensors": entries,
        "meta": meta or {},
    }
    hj = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC.encode("ascii") + b"\n")
        f.write(str(len(hj)).encode("ascii") + b"\n")
        f.write(hj)
        f.write(b"\n")
        for blob in blobs:
            f.write(blob)


def load_checkpoint(path) -> Network:
    with open(path, "rb") as f:
        magic = f.readline().rstrip(b"\n").decode("ascii", "replace")
        if magic != CHECKPOINT_MAGIC:
            raise ValidationError(f"not a checkpoint file (magic {magic!r})")
        hlen = int(f.readline().strip())
        header = json.loads(f.read(hlen).decode("utf-8"))
        f.read(1)
        data = f.read()
    layers = [LayerSpec.from_dict(d) for d in header["layers"]]
    net = build_network(layers, Rng(0), tuple(header["input_shape"]))
    net.mode = header["mode"]
    offset = 0
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        size = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(data, dtype="<f8", count=size, offset=offset).reshape(shape)
        offset += size * 8
        table = getattr(net.params, entry["group"])
        if entry["key"] not in table:
            raise ValidationError(f"checkpoint tensor {entry['key']} not in rebuilt network")
        table[entry["key"]] = arr.astype(np.float64).copy()
    return net


def checkpoint_meta(path) -> dict:
    """Read just the header metadata of a checkpoint."""
    with open(path, "rb") as f:
        magic = f.readline().rstrip(b"\n").decode("ascii", "replace")
        if magic != CHECKPOINT_MAGIC:
            raise ValidationError(f"not a checkpoint file (magic {magic!r})")
        hlen = int(f.readline().strip())
        header = json.loads(f.read(hlen).decode("utf-8"))
    return header["meta"]
