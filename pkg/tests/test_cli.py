import json
import os

import pytest

from patchssl.cli import main


def run(argv):
    return main(argv)


def read_bytes(path):
    with open(path, "rb") as f:
        return f.read()


def tree_bytes(root):
    out = {}
    for dirpath, _, files in os.walk(root):
        for name in files:
            p = os.path.join(dirpath, name)
            out[os.path.relpath(p, root)] = read_bytes(p)
    return out


GEN = ["gen-data", "--n", "60", "--positive-frac", "0.5", "--patch-size", "8",
       "--noise", "0.2", "--seed", "9"]


def test_gen_data_and_rerun_bit_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(GEN + ["--out", str(a)]) == 0
    assert run(GEN + ["--out", str(b)]) == 0
    ta, tb = tree_bytes(a), tree_bytes(b)
    assert ta.keys() == tb.keys() and len(ta) == 61  # manifest + 60 patches
    assert all(ta[k] == tb[k] for k in ta)


def test_gen_data_unlabeled_frac(tmp_path):
    out = tmp_path / "d"
    assert run(GEN + ["--unlabeled-frac", "0.5", "--out", str(out)]) == 0
    text = (out / "manifest.csv").read_text()
    assert text.splitlines()[0].startswith("# patchssl 0.1.0 seed=9 config=")
    assert sum(1 for line in text.splitlines() if line.endswith(",unlabeled")
               or ",unlabeled," in line) == 30


def test_filter_command(tmp_path):
    data = tmp_path / "d"
    run(GEN + ["--out", str(data)])
    assert run(["filter", "--manifest", str(data / "manifest.csv"),
                "--out", str(tmp_path / "f")]) == 0
    kept = (tmp_path / "f" / "kept" / "manifest.csv").read_text()
    assert len([l for l in kept.splitlines() if l and not l.startswith("#")]) == 61


def test_dump_schedule_paper_anchor(tmp_path):
    out = tmp_path / "sched.csv"
    assert run(["dump-schedule", "--lr-max", "0.00055", "--step", "100",
                "--total", "300", "--seed", "0", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0].startswith("# patchssl 0.1.0 seed=0 config=")
    header_at = 1
    row100 = lines[header_at + 1 + 100].split(",")
    assert int(row100[0]) == 100
    assert float(row100[1]) == 0.00055
    assert run(["dump-schedule", "--lr-max", "0.00055", "--step", "100",
                "--total", "300", "--seed", "0", "--out", str(tmp_path / "s2.csv")]) == 0
    assert read_bytes(out) == read_bytes(tmp_path / "s2.csv")


@pytest.fixture(scope="module")
def experiment_config(tmp_path_factory):
    path = tmp_path_factory.mktemp("cfg") / "exp.toml"
    path.write_text(
        "[data]\nn = 80\nnoise = 0.2\npatch_size = 8\nlabeled_frac = 0.3\n"
        "holdout_n = 40\n\n"
        "[train]\nruns = 2\nepochs = 2\nbatch_size = 8\nlr_max = 0.05\n\n"
        "[pseudo]\nentropy_every_epoch = false\n"
    )
    return path


def test_ssl_train_rerun_bit_identical(tmp_path, experiment_config):
    a, b = tmp_path / "a", tmp_path / "b"
    cmd = ["ssl-train", "--config", str(experiment_config), "--seed", "7"]
    assert run(cmd + ["--out", str(a)]) == 0
    assert run(cmd + ["--out", str(b)]) == 0
    ta, tb = tree_bytes(a), tree_bytes(b)
    assert set(ta) == {"resolved_config.toml", "history.jsonl", "final.ckpt", "best.ckpt"}
    assert all(ta[k] == tb[k] for k in ta)


def test_ssl_train_runs1_alpha0_equals_train(tmp_path, experiment_config):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(["ssl-train", "--config", str(experiment_config), "--seed", "3",
                "--runs", "1", "--alpha-final", "0", "--out", str(a)]) == 0
    assert run(["train", "--config", str(experiment_config), "--seed", "3",
                "--out", str(b)]) == 0
    ta, tb = tree_bytes(a), tree_bytes(b)
    assert ta.keys() == tb.keys()
    assert all(ta[k] == tb[k] for k in ta)


def test_history_metadata_record(tmp_path, experiment_config):
    out = tmp_path / "run"
    run(["ssl-train", "--config", str(experiment_config), "--seed", "5",
         "--out", str(out)])
    lines = (out / "history.jsonl").read_text().strip().splitlines()
    meta = json.loads(lines[0])
    assert meta["type"] == "metadata"
    assert meta["tool_version"] == "0.1.0"
    assert meta["seed"] == 5
    assert len(meta["config"]) == 12
    resolved = (out / "resolved_config.toml").read_text()
    assert "seed = 5" in resolved
    assert resolved.splitlines()[0].startswith("# patchssl 0.1.0 seed=5 config=")


def test_predict_eval_roundtrip(tmp_path, experiment_config):
    data = tmp_path / "d"
    run(["gen-data", "--n", "30", "--positive-frac", "0.5", "--patch-size", "8",
         "--noise", "0.2", "--seed", "11", "--out", str(data)])
    model_dir = tmp_path / "m"
    run(["train", "--config", str(experiment_config), "--seed", "2",
         "--out", str(model_dir)])
    preds = tmp_path / "preds.csv"
    assert run(["predict", "--ckpt", str(model_dir / "final.ckpt"),
                "--manifest", str(data / "manifest.csv"),
                "--out", str(preds)]) == 0
    eval_dir = tmp_path / "eval"
    assert run(["eval", "--preds", str(preds), "--manifest", str(data / "manifest.csv"),
                "--out", str(eval_dir)]) == 0
    summary = json.loads((eval_dir / "summary.json").read_text())
    assert summary["n_pos"] == 15 and summary["n_neg"] == 15
    assert 0.0 <= summary["auc"] <= 1.0
    roc = (eval_dir / "roc.csv").read_text().splitlines()
    assert roc[1] == "fpr,tpr"
    assert roc[2] == "0.0,0.0" and roc[-1] == "1.0,1.0"


def test_eval_perfect_predictions(tmp_path):
    data = tmp_path / "d"
    run(["gen-data", "--n", "20", "--positive-frac", "0.5", "--patch-size", "8",
         "--noise", "0.1", "--seed", "13", "--out", str(data)])
    manifest = data / "manifest.csv"
    rows = [l for l in manifest.read_text().splitlines()
            if l and not l.startswith("#") and not l.startswith("id,")]
    preds = tmp_path / "p.csv"
    lines = ["id,probability"]
    for row in rows:
        eid, label, _ = row.split(",")
        lines.append(f"{eid},{0.9 if label == '1' else 0.1}")
    preds.write_text("\n".join(lines) + "\n")
    assert run(["eval", "--preds", str(preds), "--manifest", str(manifest),
                "--out", str(tmp_path / "e")]) == 0
    summary = json.loads((tmp_path / "e" / "summary.json").read_text())
    assert summary["auc"] == 1.0


def test_tta_predict_command(tmp_path, experiment_config):
    data = tmp_path / "d"
    run(["gen-data", "--n", "6", "--positive-frac", "0.5", "--patch-size", "8",
         "--noise", "0.2", "--seed", "17", "--out", str(data)])
    model_dir = tmp_path / "m"
    run(["train", "--config", str(experiment_config), "--seed", "2",
         "--out", str(model_dir)])
    out = tmp_path / "tta.csv"
    assert run(["tta-predict", "--ckpt", str(model_dir / "final.ckpt"),
                "--manifest", str(data / "manifest.csv"), "--preset", "tta_ens15",
                "--out", str(out)]) == 0
    assert len(out.read_text().strip().splitlines()) == 8  # meta + header + 6


def test_ensemble_command(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    a.write_text("id,probability\nx,0.8\ny,0.2\n")
    b.write_text("id,probability\nx,0.6\ny,0.4\n")
    out = tmp_path / "ens.csv"
    assert run(["ensemble", "--preds", str(a), str(b), "--seed", "0",
                "--out", str(out)]) == 0
    from patchssl.infer import load_predictions
    got = load_predictions(out)
    assert got["x"] == pytest.approx(0.7) and got["y"] == pytest.approx(0.3)


def test_ensemble_rejects_id_mismatch(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    a.write_text("id,probability\nx,0.8\n")
    b.write_text("id,probability\nz,0.6\n")
    assert run(["ensemble", "--preds", str(a), str(b), "--seed", "0",
                "--out", str(tmp_path / "o.csv")]) == 2


def test_usage_errors_exit_2(tmp_path):
    assert run(["no-such-command"]) == 2
    assert run(["eval", "--preds", "missing.csv", "--manifest", "missing.csv",
                "--out", str(tmp_path)]) == 2
    assert run(["dump-schedule", "--step", "50", "--total", "100", "--seed", "0",
                "--out", str(tmp_path / "s.csv")]) == 2  # cycle not < total
    assert run(["ssl-train", "--unknown-flag", "--out", str(tmp_path)]) == 2
