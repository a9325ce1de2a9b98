import json

import numpy as np
import pytest

from shapemate.cutting import make_pair
from shapemate.dataset import (
    FORMAT_VERSION, DatasetError, DatasetManifest, PairEntry, SplitSpec, add_noise, dataset_stats, entry_for,
    load_manifest, make_splits, read_pair, save_manifest, write_pair,
)


@pytest.fixture(scope="module")
def record(meshes, bvhs):
    return make_pair(meshes["torus"], "pulse", 1, bvh=bvhs["torus"], n_dense=3000, n_sdf=40_000,
                     meta={"category": "ring", "mesh_id": "torus"})


def synthetic_manifest(n=100, families=("planar", "sine", "parabolic", "square", "pulse")) -> DatasetManifest:
    cats = ("box", "bag", "mug", "vase")
    entries = [
        PairEntry(f"p{i:03d}", cats[i % 4], families[(i // 4) % len(families)], "solid", f"pairs/p{i:03d}", i)
        for i in range(n)
    ]
    return DatasetManifest(FORMAT_VERSION, entries)


def test_round_trip_bitwise(tmp_path, record):
    pid = write_pair(record, tmp_path)
    back = read_pair(tmp_path, pid)
    for a, b in ((record.part_a, back.part_a), (record.part_b, back.part_b)):
        assert np.array_equal(a.points.astype("<f4"), b.points)
        assert np.array_equal(a.normals.astype("<f4"), b.normals)
    assert np.array_equal(record.sdf_a.sdf.astype("<f4"), back.sdf_a.sdf)
    assert back.meta["cut_family"] == "pulse"
    # a second cycle is exact in float32
    write_pair(back, tmp_path / "again", pid)
    again = read_pair(tmp_path / "again", pid)
    assert np.array_equal(again.part_a.points, back.part_a.points)
    assert np.array_equal(again.sdf_b.points, back.sdf_b.points)


def test_file_sizes(tmp_path, record):
    pid = write_pair(record, tmp_path)
    d = tmp_path / "pairs" / pid
    assert (d / "points_a.f32le").stat().st_size == 12_288
    assert (d / "sdf_b.f32le").stat().st_size == 40_000 * 4 * 4
    meta = json.loads((d / "meta.json").read_text())
    assert abs(np.linalg.norm(meta["pose_a"]["q"]) - 1) < 1e-9


def test_non_finite_rejected(tmp_path, record):
    bad = record.part_a.points.copy()
    bad[0, 0] = np.nan
    import dataclasses
    broken = dataclasses.replace(record, part_a=dataclasses.replace(record.part_a, points=bad))
    with pytest.raises(ValueError):
        write_pair(broken, tmp_path)


def test_bad_quaternion_rejected(tmp_path, record):
    pid = write_pair(record, tmp_path)
    path = tmp_path / "pairs" / pid / "meta.json"
    meta = json.loads(path.read_text())
    meta["pose_a"]["q"] = [1.0, 0.1, 0.0, 0.0]
    path.write_text(json.dumps(meta))
    with pytest.raises(DatasetError):
        read_pair(tmp_path, pid)


def test_manifest_round_trip_and_checks(tmp_path, record):
    pid = write_pair(record, tmp_path)
    m = DatasetManifest()
    m.add(entry_for(record, pid))
    with pytest.raises(DatasetError):
        m.add(entry_for(record, pid))
    save_manifest(m, tmp_path)
    assert load_manifest(tmp_path).pairs == m.pairs
    m.add(PairEntry("ghost", "x", "planar", "solid", "pairs/ghost", 0))
    save_manifest(m, tmp_path)
    with pytest.raises(DatasetError):
        load_manifest(tmp_path)


def test_version_checked():
    with pytest.raises(DatasetError):
        DatasetManifest.from_json({"version": "gsm-v0", "pairs": []})


def test_split_counts_and_determinism():
    m = synthetic_manifest()
    s1 = make_splits(m, SplitSpec(seed=3))
    counts = {k: list(s1.splits.values()).count(k) for k in ("train", "val", "test")}
    assert counts == {"train": 80, "val": 10, "test": 10}
    assert make_splits(m, SplitSpec(seed=3)).splits == s1.splits
    assert make_splits(m, SplitSpec(seed=4)).splits != s1.splits
    # order of the manifest does not matter
    shuffled = DatasetManifest(m.version, list(reversed(m.pairs)))
    assert make_splits(shuffled, SplitSpec(seed=3)).splits == s1.splits


def test_split_is_stratified():
    s = make_splits(synthetic_manifest(200), SplitSpec(seed=0))
    test = [e for e in s.pairs if s.splits[e.id] == "test"]
    cats = {e.category for e in test}
    assert cats == {"box", "bag", "mug", "vase"}


def test_unseen_modes():
    m = synthetic_manifest()
    cut = make_splits(m, SplitSpec(mode="unseen-cut"))
    test = [e for e in m.pairs if cut.splits[e.id] == "test"]
    assert test and all(e.cut_family == "parabolic" for e in test)
    assert all(cut.splits[e.id] != "test" for e in m.pairs if e.cut_family != "parabolic")
    cat = make_splits(m, SplitSpec(mode="unseen-category"))
    assert {e.category for e in m.pairs if cat.splits[e.id] == "test"} == {"box", "bag"}


def test_split_warns_on_empty_holdout():
    m = synthetic_manifest(families=("planar", "sine"))
    with pytest.warns(UserWarning):
        make_splits(m, SplitSpec(mode="unseen-cut"))


def test_split_needs_ten_pairs():
    with pytest.raises(ValueError):
        make_splits(synthetic_manifest(9))


def test_split_fractions_validated():
    with pytest.raises(ValueError):
        SplitSpec(fractions=(0.5, 0.3, 0.3))


def test_stats_counts():
    s = dataset_stats(make_splits(synthetic_manifest(), SplitSpec()))
    assert s["n_pairs"] == 100 and sum(s["per_family"].values()) == 100
    assert s["splits"] == {"train": 80, "val": 10, "test": 10}


def test_noise_statistics():
    rng = np.random.default_rng(0)
    cloud = np.zeros((1_000_000, 3))
    noisy = add_noise(cloud, 0.05, rng)
    assert noisy.shape == cloud.shape
    assert np.all(np.abs(noisy.std(axis=0) - 0.05) < 0.001)
    assert np.all(np.abs(noisy.mean(axis=0)) < 3 * 0.05 / 1000)
    assert np.array_equal(add_noise(cloud[:10] + 1, 0.0, rng), cloud[:10] + 1)
    with pytest.raises(ValueError):
        add_noise(cloud, -1.0, rng)
