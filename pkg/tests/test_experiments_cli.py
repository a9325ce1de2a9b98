import json

import numpy as np
import pytest

from shapemate.cli import main
from shapemate.dataset import load_manifest
from shapemate.experiments import (
    BASELINES, evaluate_baseline, load_split, register, relative_to_poses, run_experiment,
)
from shapemate.geometry import quat_to_matrix, random_quaternion
from shapemate.metrics import read_csv
from shapemate.registration import RigidTransform


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("data")
    code = main(["generate", "--out", str(root), "--n-dense", "1500", "--n-sdf", "200", "--seed", "1"])
    assert code == 0
    assert main(["split", "--data", str(root), "--seed", "0"]) == 0
    return root


def test_generate_and_split(dataset, capsys):
    m = load_manifest(dataset)
    assert len(m.pairs) == 15
    assert {e.cut_family for e in m.pairs} == {"planar", "sine", "parabolic", "square", "pulse"}
    counts = {s: list(m.splits.values()).count(s) for s in ("train", "val", "test")}
    assert counts == {"train": 12, "val": 2, "test": 1}
    assert main(["stats", "--data", str(dataset)]) == 0
    stats = json.loads(capsys.readouterr().out)
    assert stats["n_pairs"] == 15


def test_generate_is_idempotent(dataset):
    before = load_manifest(dataset).ids()
    assert main(["generate", "--out", str(dataset), "--meshes", "cube", "--families", "planar",
                 "--n-dense", "1500", "--n-sdf", "200", "--seed", "1"]) == 0
    assert load_manifest(dataset).ids() == before


def test_relative_split_composes_back():
    rng = np.random.default_rng(0)
    x = RigidTransform(quat_to_matrix(random_quaternion(rng)), rng.normal(size=3))
    pa, pb = relative_to_poses(x)
    comp = pa.inverse().compose(pb)
    assert np.allclose(comp.rotation, x.rotation) and np.allclose(comp.translation, x.translation)


def test_identity_baseline_on_posed_clouds_is_zero(dataset):
    pairs = load_split(dataset, "standard")["train"]
    row = evaluate_baseline("identity", pairs, gt_posed=True)
    assert row.MAE_R < 1e-9 and row.MAE_T < 1e-9


def test_standard_uses_test_fold_only(dataset):
    rows = run_experiment("standard", dataset, ("identity", "icp-point"))
    assert [r.method for r in rows] == ["identity", "icp-point"]
    assert all(r.n_pairs == 1 and r.experiment == "standard" for r in rows)


def test_unseen_cut_test_rows_all_parabolic(dataset):
    test = load_split(dataset, "unseen-cut")["test"]
    assert test and all(p.meta["cut_family"] == "parabolic" for p in test)
    row = run_experiment("unseen-cut", dataset, ("sparse-icp",))[0]
    assert row.n_pairs == len(test)


def test_unknown_kind_and_method(dataset):
    with pytest.raises(ValueError):
        run_experiment("tiny-world", dataset)
    with pytest.raises(ValueError):
        register("magic", np.zeros((4, 3)), np.zeros((4, 3)))
    assert set(BASELINES) == {"identity", "icp-point", "icp-plane", "sparse-icp"}


def test_train_eval_baseline_cli(dataset, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"model": "tiny", "steps": 2, "batch_size": 2, "points_per_part": 32,
                               "sdf_queries": 8, "val_every": 1, "checkpoint_every": 1}))
    out = tmp_path / "run"
    assert main(["train", "--data", str(dataset), "--config", str(cfg), "--out", str(out)]) == 0
    assert (out / "best.bin").exists() and (out / "trace.csv").exists()
    assert main(["train", "--data", str(dataset), "--config", str(cfg), "--out", str(out),
                 "--resume", str(out / "last")]) == 0
    csv_path = tmp_path / "eval.csv"
    assert main(["eval", "--data", str(dataset), "--checkpoint", str(out / "best"), "--out", str(csv_path)]) == 0
    assert read_csv(csv_path)[0].method == "nsm"
    noisy = tmp_path / "noisy.csv"
    assert main(["baseline", "--data", str(dataset), "--method", "identity", "icp-plane",
                 "--experiment", "noisy", "--out", str(noisy)]) == 0
    rows = read_csv(noisy)
    assert [r.method for r in rows] == ["identity", "icp-plane"] and rows[0].experiment == "noisy"


def test_cli_errors_exit_nonzero(tmp_path):
    assert main(["stats", "--data", str(tmp_path / "missing")]) != 0
    with pytest.raises(SystemExit) as exc:
        main(["generate", "--out", str(tmp_path), "--families", "zigzag"])
    assert exc.value.code != 0
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"batch_size": 1}))
    assert main(["train", "--data", str(tmp_path), "--config", str(bad), "--out", str(tmp_path / "o")]) != 0
