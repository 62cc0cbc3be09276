from types import SimpleNamespace

import numpy as np
import pytest

from patchssl import infer
from patchssl.data import aug, generate_synthetic
from patchssl.infer import (TtaPreset, ensemble_predict, get_preset,
                            load_predictions, predictions_csv, tta_predict)
from patchssl.model import LayerSpec, ValidationError, build_network
from patchssl.numerics import Rng
from patchssl.pseudolabel import run_ssl


@pytest.fixture
def example():
    return generate_synthetic(1, 0.5, 16, 0.2, Rng(60)).examples[0]


@pytest.fixture
def net():
    cfg = [LayerSpec("conv3x3", channels=3), LayerSpec("gap_gmp_concat"),
           LayerSpec("dense", units=1), LayerSpec("sigmoid")]
    return build_network(cfg, Rng(61), (1, 16, 16)).eval()


def test_preset_counts():
    assert len(get_preset("tta_dense10").transforms) == 10
    assert len(get_preset("tta_ens15").transforms) == 15
    with pytest.raises(ValidationError):
        get_preset("nope")


def test_preset_count_invariant_enforced():
    with pytest.raises(ValidationError):
        TtaPreset("tta_dense10", ())


def test_empty_preset_equals_plain_forward(net, example):
    from patchssl.model import forward
    plain = float(forward(net, example.patch[None])[0][0, 0])
    assert tta_predict(net, example, TtaPreset("custom", ())) == plain


def test_constant_net_invariant_under_tta(net, example):
    for key in net.params.tensors:
        net.params.tensors[key][:] = 0.0
    for preset in ("tta_dense10", "tta_ens15"):
        assert tta_predict(net, example, get_preset(preset)) == 0.5


def test_tta_mean_of_eleven(net, example):
    preset = get_preset("tta_dense10")
    single = tta_predict(net, example, preset)
    again = tta_predict(net, example, preset)
    assert single == again  # deterministic incl. the noise transform
    assert 0.0 <= single <= 1.0


def test_tta_requires_eval_mode(net, example):
    net.train()
    with pytest.raises(ValidationError):
        tta_predict(net, example, get_preset("tta_dense10"))


def test_tta_mean_arithmetic(monkeypatch, example):
    # original + 2 transforms predicting 0.6, 0.8, 1.0 must average to 0.8
    values = iter([0.6, 0.8, 1.0])
    monkeypatch.setattr(infer, "_predict_one", lambda net, patch: next(values))
    preset = TtaPreset("custom", ((aug("hflip"),), (aug("vflip"),)))
    stub = SimpleNamespace(mode="eval")
    assert tta_predict(stub, example, preset) == pytest.approx(0.8, rel=1e-15)


def test_ensemble_equal_weights():
    assert ensemble_predict([0.8, 0.6]) == pytest.approx(0.7, rel=1e-15)


def test_ensemble_single_model_identity():
    assert ensemble_predict([0.42]) == 0.42


def test_ensemble_idempotent_on_identical_inputs():
    assert ensemble_predict([0.37] * 7) == pytest.approx(0.37, rel=1e-15)


def test_ensemble_weighted():
    assert ensemble_predict([1.0, 0.0], weights=[3.0, 1.0]) == pytest.approx(0.75)


def test_ensemble_rejects_bad_input():
    with pytest.raises(ValidationError):
        ensemble_predict([])
    with pytest.raises(ValidationError):
        ensemble_predict([0.5], weights=[-1.0])


def test_ensemble_permutation_invariant():
    rng = Rng(62)
    preds = list(rng.random(9))
    shuffled = [preds[i] for i in rng.permutation(9)]
    assert ensemble_predict(preds) == pytest.approx(ensemble_predict(shuffled), abs=1e-15)


def test_ensemble_bounded_by_min_max():
    rng = Rng(63)
    for _ in range(20):
        preds = list(rng.random(5))
        out = ensemble_predict(preds)
        assert min(preds) <= out <= max(preds)


def test_tta_output_in_unit_interval(net, example):
    for preset in ("tta_dense10", "tta_ens15"):
        assert 0.0 <= tta_predict(net, example, get_preset(preset)) <= 1.0


def test_predictions_csv_roundtrip(tmp_path):
    preds = {"a": 0.125, "b": 0.875, "c": 1.0 / 3.0}
    path = tmp_path / "p.csv"
    path.write_text(predictions_csv(preds, metadata_line="meta"))
    assert load_predictions(path) == preds


def test_seed_ensemble_variance_reduction():
    """Averaging 5 single-seed models shrinks prediction variance."""
    from patchssl.pseudolabel import PseudoSettings, SslExperiment, TrainSettings

    d = generate_synthetic(60, 0.5, 8, 0.25, Rng(64))
    test_points = list(generate_synthetic(20, 0.5, 8, 0.25, Rng(65)))
    net_cfg = [LayerSpec("conv3x3", channels=2), LayerSpec("gap_gmp_concat"),
               LayerSpec("dense", units=1), LayerSpec("sigmoid")]
    models = []
    for seed in range(15):
        cfg = SslExperiment(
            train_pool=d.examples[:40], val_pool=d.examples[40:],
            unlabeled_pool=[], holdout=None, network=net_cfg,
            input_shape=(1, 8, 8), seed=seed,
            train=TrainSettings(runs=1, epochs=2, batch_size=8, lr_max=0.05),
            pseudo=PseudoSettings(),
        )
        models.append(run_ssl(cfg).network)

    from patchssl.pseudolabel import predict_examples
    preds = np.stack([predict_examples(net, test_points) for net in models])  # (15, 20)
    single_var = preds.var(axis=0)
    groups = preds.reshape(3, 5, 20).mean(axis=1)  # three 5-seed ensembles
    ens_var = groups.var(axis=0)
    assert np.median(ens_var) <= np.median(single_var)
