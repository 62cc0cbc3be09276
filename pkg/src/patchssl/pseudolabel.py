"""Pseudo-labeling: confidence thresholds, 1:1 balancing, the ramped loss
coefficient alpha, entropy diagnostics, and the repeated fine-tuning driver.

The driver trains for a number of runs. Run 0 sees labeled data only. Before
every later run the current model re-predicts the whole unlabeled pool and
the pseudo set is rebuilt from scratch — nothing carries over, so stale
assignments disappear as soon as the model stops being confident about them.
Accepted pseudo examples are appended to the training corpus (and a share
matching the val split ratio to the validation pool); mini-batches are drawn
from the shuffled union, and each batch's loss weights its labeled part by
1/n and its pseudo part by alpha(run)/n', with n and n' the counts inside
the batch. Each run gets a fresh one-cycle schedule sized to the corpus.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import schedule
from .data import (PSEUDO_NEGATIVE, PSEUDO_POSITIVE, Example, augment,
                   label_value, stack_patches, train_augmentations)
from .metrics import auc
from .model import (LayerSpec, LossValue, Network, ParamSet, ValidationError,
                    backward, bce_loss, build_network, default_config,
                    forward, sgd_momentum_step)
from .numerics import NumericError, Rng, derive_seed

ENTROPY_EPS = 1e-7


@dataclass(frozen=True)
class PseudoThresholds:
    positive_above: float = 0.9
    negative_below: float = 0.1

    def __post_init__(self):
        if not 0.0 < self.negative_below < self.positive_above < 1.0:
            raise ValidationError(
                f"need 0 < negative_below < positive_above < 1, got "
                f"{self.negative_below} / {self.positive_above}")


@dataclass(frozen=True)
class AlphaSchedule:
    alpha_final: float = 1.0
    t1: int = 1
    t2: int = 5

    def __post_init__(self):
        if not 0 <= self.t1 < self.t2:
            raise ValidationError(f"need 0 <= t1 < t2, got {self.t1} / {self.t2}")
        if self.alpha_final <= 0:
            raise ValidationError(f"alpha_final must be positive, got {self.alpha_final}")


@dataclass
class PseudoLabelSet:
    examples: list[Example]
    source_run: int
    counts: tuple[int, int]  # (n_pos, n_neg)

    def __post_init__(self):
        n_pos, n_neg = self.counts
        if n_pos != n_neg:
            raise ValidationError(f"pseudo set must be balanced, got {self.counts}")

    def __len__(self):
        return len(self.examples)


def assign_pseudo_labels(probs: dict[str, float], th: PseudoThresholds) -> dict[str, tuple[str, float]]:
    """Threshold predicted probabilities into raw pseudo-label candidates.

    Returns id -> (pseudo label, probability) for every id confident enough;
    everything between the thresholds is excluded.
    """
    out = {}
    for eid, p in probs.items():
        if not 0.0 <= p <= 1.0:
            raise ValidationError(f"probability {p} for {eid!r} outside [0, 1]")
        if p > th.positive_above:
            out[eid] = (PSEUDO_POSITIVE, p)
        elif p < th.negative_below:
            out[eid] = (PSEUDO_NEGATIVE, p)
    return out


def balance_pseudo(candidates: dict[str, tuple[str, float]],
                   examples_by_id: dict[str, Example],
                   source_run: int = 0,
                   rng: Rng | None = None) -> PseudoLabelSet:
    """Keep equally many positives and negatives, most confident first.

    k = min(candidate count per class); within a class the k candidates with
    the largest |p - 0.5| are kept, ties broken toward the smaller id. The
    selection is fully deterministic; rng is accepted for interface parity
    and never drawn from.
    """
    pos = [(eid, p) for eid, (lab, p) in candidates.items() if lab == PSEUDO_POSITIVE]
    neg = [(eid, p) for eid, (lab, p) in candidates.items() if lab == PSEUDO_NEGATIVE]
    k = min(len(pos), len(neg))
    chosen: list[Example] = []
    for group, label in ((pos, PSEUDO_POSITIVE), (neg, PSEUDO_NEGATIVE)):
        group.sort(key=lambda t: (-abs(t[1] - 0.5), t[0]))
        for eid, _ in group[:k]:
            chosen.append(examples_by_id[eid].with_label(label))
    return PseudoLabelSet(examples=chosen, source_run=source_run, counts=(k, k))


def alpha_at(sched: AlphaSchedule, run: int) -> float:
    """Pseudo-loss weight for a given fine-tuning run index."""
    if run < 0:
        raise ValidationError(f"run index must be >= 0, got {run}")
    if run < sched.t1:
        return 0.0
    if run < sched.t2:
        return sched.alpha_final * (run - sched.t1) / (sched.t2 - sched.t1)
    return sched.alpha_final


def combined_loss(labeled_batch, pseudo_batch, net: Network, alpha: float,
                  rng: Rng | None = None) -> LossValue:
    """Labeled BCE plus alpha-weighted pseudo BCE, each mean over its batch.

    Batches are (patches, labels) pairs; pseudo_batch may be None or empty,
    contributing exactly zero. The returned gradient is the concatenation of
    both streams' per-output gradients, labeled first.
    """
    lab_empty = labeled_batch is None or len(labeled_batch[0]) == 0
    pse_empty = pseudo_batch is None or len(pseudo_batch[0]) == 0
    if lab_empty and pse_empty:
        raise ValidationError("combined_loss needs at least one nonempty batch")
    if lab_empty:
        value, grads = 0.0, []
    else:
        p, _ = forward(net, labeled_batch[0], rng)
        lv = bce_loss(p, labeled_batch[1])
        value, grads = lv.value, [lv.grad_wrt_output]
    if not pse_empty and alpha != 0.0:
        p, _ = forward(net, pseudo_batch[0], rng)
        lv = bce_loss(p, pseudo_batch[1])
        value = value + alpha * lv.value
        grads.append(alpha * lv.grad_wrt_output)
    grad = grads[0] if len(grads) == 1 else np.concatenate(grads, axis=0)
    return LossValue(value, grad)


def unlabeled_entropy(probs) -> float:
    """Mean binary entropy -[p ln p + (1-p) ln(1-p)] of the predictions."""
    p = np.asarray(list(probs), dtype=np.float64)
    if p.size == 0:
        raise ValidationError("unlabeled_entropy needs at least one probability")
    pc = np.clip(p, ENTROPY_EPS, 1.0 - ENTROPY_EPS)
    return float(np.mean(-(pc * np.log(pc) + (1.0 - pc) * np.log1p(-pc))))


# ---------------------------------------------------------------------------
# experiment driver

@dataclass
class TrainSettings:
    runs: int = 10
    epochs: int = 7
    batch_size: int = 16
    lr_max: float = 0.00055
    lr_min: float = 0.0  # 0 means lr_max / 10
    final_lr: float = 0.0  # 0 means lr_min / 100
    step_frac: float = 0.4
    momentum_high: float = 0.95
    momentum_low: float = 0.85
    augment: bool = False
    # "corpus": an epoch covers labeled + accepted pseudo examples, so runs
    # with more pseudo data train longer; "labeled": epoch length stays fixed
    # at the labeled pool size
    epoch_scope: str = "corpus"


@dataclass
class PseudoSettings:
    positive_above: float = 0.9
    negative_below: float = 0.1
    alpha_final: float = 1.0
    alpha_t1: int = 1
    alpha_t2: int = 5
    tta_prediction: bool = False
    entropy_every_epoch: bool = True


@dataclass
class SslExperiment:
    train_pool: list[Example]
    val_pool: list[Example]
    unlabeled_pool: list[Example]
    holdout: list[Example] | None = None
    network: list[LayerSpec] | None = None
    input_shape: tuple = (1, 16, 16)
    seed: int = 0
    val_frac: float = 0.2
    train: TrainSettings = field(default_factory=TrainSettings)
    pseudo: PseudoSettings = field(default_factory=PseudoSettings)


@dataclass
class EpochRecord:
    run: int
    epoch: int
    train_loss: float
    val_loss: float
    val_auc: float
    holdout_auc: float | None
    unlabeled_entropy: float | None
    pseudo_pos: int
    pseudo_neg: int
    alpha: float
    lr_last: float


@dataclass
class RunHistory:
    records: list[EpochRecord] = field(default_factory=list)
    pseudo_counts: list[tuple[int, int]] = field(default_factory=list)
    labeled_train_ids: list[str] = field(default_factory=list)
    labeled_val_ids: list[str] = field(default_factory=list)
    best_val_auc: float = float("-inf")
    best_run: int = -1
    best_epoch: int = -1
    final_val_auc: float | None = None
    final_holdout_auc: float | None = None

    def summary(self) -> dict:
        return {
            "type": "summary",
            "runs": len(self.pseudo_counts),
            "epochs_total": len(self.records),
            "pseudo_counts": [list(c) for c in self.pseudo_counts],
            "best_val_auc": self.best_val_auc,
            "best_run": self.best_run,
            "best_epoch": self.best_epoch,
            "final_val_auc": self.final_val_auc,
            "final_holdout_auc": self.final_holdout_auc,
        }

    def to_jsonl(self, metadata: dict | None = None) -> str:
        lines = []
        if metadata is not None:
            lines.append(json.dumps({"type": "metadata", **metadata}, sort_keys=True))
        for r in self.records:
            lines.append(json.dumps({"type": "epoch", **asdict(r)}, sort_keys=True))
        lines.append(json.dumps(self.summary(), sort_keys=True))
        return "\n".join(lines) + "\n"


@dataclass
class SslResult:
    network: Network
    history: RunHistory
    pseudo_sets: list[PseudoLabelSet]
    best_params: ParamSet


def predict_examples(net: Network, examples, batch_size: int = 256) -> np.ndarray:
    """Eval-mode probabilities for a list of examples, in list order."""
    prev = net.mode
    net.eval()
    try:
        out = np.empty(len(examples))
        for start in range(0, len(examples), batch_size):
            chunk = examples[start:start + batch_size]
            p, _ = forward(net, stack_patches(chunk))
            out[start:start + len(chunk)] = p[:, 0]
    finally:
        net.mode = prev
    return out


def _predict_pool(net, pool, use_tta) -> dict[str, float]:
    if use_tta:
        probs = tta_predict_pool(net, pool)
    else:
        probs = predict_examples(net, pool)
    return {e.id: float(p) for e, p in zip(pool, probs)}


def tta_predict_pool(net, pool, preset_name: str = "tta_dense10") -> np.ndarray:
    """Batched equivalent of infer.tta_predict over a whole pool.

    Transforms all examples per preset entry and forwards them as batches;
    per-example noise streams are seeded identically to tta_predict, so the
    results match it bit for bit.
    """
    from .infer import get_preset
    preset = get_preset(preset_name)
    rows = [predict_examples(net, pool)]
    for idx, chain in enumerate(preset.transforms):
        transformed = []
        for e in pool:
            ex = e
            rng = Rng(derive_seed(0, "tta", preset.name, str(idx), e.id))
            for spec in chain:
                ex = augment(ex, spec, rng)
            transformed.append(ex)
        rows.append(predict_examples(net, transformed))
    return np.stack(rows).mean(axis=0)


def _allocate(pset: PseudoLabelSet, val_frac: float, rng: Rng):
    """Split a balanced pseudo set into train/val shares per class."""
    train, val = [], []
    for label in (PSEUDO_POSITIVE, PSEUDO_NEGATIVE):
        group = [e for e in pset.examples if e.label == label]
        n_val = round(val_frac * len(group))
        order = rng.permutation(len(group))
        chosen = set(int(i) for i in order[:n_val])
        for i, e in enumerate(group):
            (val if i in chosen else train).append(e)
    return train, val


def _batch_arrays(examples, idxs, augment_specs, rng_args):
    xs, ys = [], []
    for i in idxs:
        e = examples[i]
        if augment_specs is not None:
            a_rng = Rng(derive_seed(*rng_args, e.id))
            spec = augment_specs[int(a_rng.integers(0, len(augment_specs)))]
            e = augment(e, spec, a_rng)
        xs.append(e.patch)
        ys.append(label_value(e.label))
    return np.stack(xs), np.array(ys)


def _eval_auc(net, examples) -> float:
    scores = predict_examples(net, examples)
    labels = [label_value(e.label) for e in examples]
    return auc(scores, labels)


def run_ssl(cfg: SslExperiment) -> SslResult:
    """Execute the full pseudo-label fine-tuning experiment.

    Returns the final network, the per-epoch history (with the best
    validation-AUC parameter snapshot retained), and the pseudo set rebuilt
    for each run. An empty unlabeled pool degenerates to plain supervised
    training over the same runs and epochs.
    """
    ts, ps = cfg.train, cfg.pseudo
    if not cfg.train_pool or not cfg.val_pool:
        raise ValidationError("run_ssl needs nonempty labeled train and val pools")
    if min(ts.runs, ts.epochs, ts.batch_size) < 1:
        raise ValidationError("runs, epochs and batch_size must all be >= 1")
    th = PseudoThresholds(ps.positive_above, ps.negative_below)
    # alpha_final == 0 disables the pseudo loss term outright
    alpha_sched = (AlphaSchedule(ps.alpha_final, ps.alpha_t1, ps.alpha_t2)
                   if ps.alpha_final > 0 else None)
    net_config = cfg.network if cfg.network is not None else default_config()
    net = build_network(net_config, Rng(derive_seed(cfg.seed, "init")), cfg.input_shape)

    labeled_train = list(cfg.train_pool)
    labeled_val = list(cfg.val_pool)
    unlabeled = sorted(cfg.unlabeled_pool, key=lambda e: e.id)
    by_id = {e.id: e for e in unlabeled}
    aug_specs = train_augmentations() if ts.augment else None

    history = RunHistory(
        labeled_train_ids=[e.id for e in labeled_train],
        labeled_val_ids=[e.id for e in labeled_val],
    )
    pseudo_sets: list[PseudoLabelSet] = []
    best_params = net.params.copy()

    if ts.epoch_scope not in ("corpus", "labeled"):
        raise ValidationError(f"epoch_scope must be 'corpus' or 'labeled', got {ts.epoch_scope!r}")

    def run_schedule(iters: int) -> schedule.OneCycleConfig:
        return schedule.for_total(
            iters * ts.epochs, ts.step_frac,
            lr_max=ts.lr_max,
            lr_min=ts.lr_min or None,
            final_lr=ts.final_lr or None,
            momentum_high=ts.momentum_high,
            momentum_low=ts.momentum_low,
        )

    pseudo_train: list[Example] = []
    pseudo_val: list[Example] = []
    run_entropy: float | None = None

    for run in range(ts.runs):
        if run > 0 and unlabeled:
            probs = _predict_pool(net, unlabeled, ps.tta_prediction)
            if not ps.entropy_every_epoch:
                run_entropy = unlabeled_entropy(probs.values())
            candidates = assign_pseudo_labels(probs, th)
            pset = balance_pseudo(candidates, by_id, source_run=run)
            pseudo_train, pseudo_val = _allocate(
                pset, cfg.val_frac, Rng(derive_seed(cfg.seed, "pseudo-alloc", run)))
        else:
            pset = PseudoLabelSet([], source_run=run, counts=(0, 0))
            pseudo_train, pseudo_val = [], []
        pseudo_sets.append(pset)
        alpha = alpha_at(alpha_sched, run) if alpha_sched is not None else 0.0
        n_pos, n_neg = pset.counts
        use_pseudo = bool(pseudo_train) and alpha > 0.0
        # mini-batches mix labeled and pseudo examples drawn from one
        # shuffled corpus; the loss weights each batch's labeled share by
        # 1/n and its pseudo share by alpha/n', n and n' being the counts
        # inside the batch
        corpus = labeled_train + pseudo_train if use_pseudo else labeled_train
        n_labeled = len(labeled_train)
        if ts.epoch_scope == "corpus":
            iters_per_epoch = math.ceil(len(corpus) / ts.batch_size)
        else:
            iters_per_epoch = math.ceil(n_labeled / ts.batch_size)
        sched_cfg = run_schedule(iters_per_epoch)

        t = 0
        for epoch in range(ts.epochs):
            net.train()
            order = Rng(derive_seed(cfg.seed, "shuffle", run, epoch)).permutation(len(corpus))
            epoch_loss = 0.0
            lr = 0.0
            for it in range(iters_per_epoch):
                idxs = order[it * ts.batch_size:(it + 1) * ts.batch_size]
                xb, yb = _batch_arrays(corpus, idxs,
                                       aug_specs, (cfg.seed, "augment", run, epoch, it))
                n_lab_b = int(np.sum(idxs < n_labeled))
                n_pse_b = len(idxs) - n_lab_b
                weights = np.empty(len(idxs))
                for row, idx in enumerate(idxs):
                    if idx < n_labeled:
                        weights[row] = len(idxs) / n_lab_b
                    else:
                        weights[row] = alpha * len(idxs) / n_pse_b
                try:
                    probs_b, cache = forward(net, xb, Rng(derive_seed(cfg.seed, "dropout", run, epoch, it)))
                    lv = bce_loss(probs_b, yb, weights)
                    grads = backward(net, cache, lv.grad_wrt_output)
                except NumericError as err:
                    raise NumericError(
                        f"training diverged at run {run} epoch {epoch} iteration {it}: {err}"
                    ) from err
                lr = schedule.lr_at(sched_cfg, t)
                mom = schedule.momentum_at(sched_cfg, t)
                sgd_momentum_step(net.params, grads, lr, mom)
                epoch_loss += lv.value
                t += 1

            net.eval()
            val_all = labeled_val + pseudo_val
            val_lv = combined_loss(
                (stack_patches(labeled_val), np.array([label_value(e.label) for e in labeled_val])),
                (stack_patches(pseudo_val), np.array([label_value(e.label) for e in pseudo_val]))
                if pseudo_val else None,
                net, alpha)
            val_auc = _eval_auc(net, val_all)
            holdout_auc = _eval_auc(net, cfg.holdout) if cfg.holdout else None
            if unlabeled:
                if ps.entropy_every_epoch:
                    entropy = unlabeled_entropy(predict_examples(net, unlabeled))
                else:
                    entropy = run_entropy
            else:
                entropy = None
            history.records.append(EpochRecord(
                run=run, epoch=epoch,
                train_loss=epoch_loss / iters_per_epoch,
                val_loss=val_lv.value, val_auc=val_auc,
                holdout_auc=holdout_auc, unlabeled_entropy=entropy,
                pseudo_pos=n_pos, pseudo_neg=n_neg,
                alpha=alpha, lr_last=lr,
            ))
            if val_auc >= history.best_val_auc:
                history.best_val_auc = val_auc
                history.best_run, history.best_epoch = run, epoch
                best_params = net.params.copy()
        history.pseudo_counts.append(pset.counts)

    history.final_val_auc = history.records[-1].val_auc if history.records else None
    if cfg.holdout:
        history.final_holdout_auc = history.records[-1].holdout_auc
    net.eval()
    return SslResult(network=net, history=history, pseudo_sets=pseudo_sets,
                     best_params=best_params)
