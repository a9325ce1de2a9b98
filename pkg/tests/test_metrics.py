import numpy as np
import pytest
from hypothesis import given, strategies as st

from shapemate.geometry import euler_zyx, euler_zyx_to_matrix, quat_to_matrix, random_quaternion
from shapemate.metrics import (
    CSV_COLUMNS, evaluate_poses, geodesic_degrees, read_csv, rotation_metrics, translation_metrics, wrap_degrees,
    write_csv,
)

from oracles import euler_reference, metrics_reference


def random_rotations(rng, n):
    return np.stack([quat_to_matrix(random_quaternion(rng)) for _ in range(n)])


def test_wrap_range():
    d = np.array([-540.0, -180.0, -179.0, 0.0, 180.0, 181.0, 359.0, 360.0, 720.5])
    w = wrap_degrees(d)
    assert np.all((w > -180) & (w <= 180))
    assert np.allclose(np.mod(w - d, 360.0), 0.0)
    assert wrap_degrees(-180.0) == 180.0


def test_identical_is_zero():
    r = random_rotations(np.random.default_rng(0), 5)
    assert rotation_metrics(r, r) == (0.0, 0.0, 0.0)
    t = np.random.default_rng(1).normal(size=(5, 3))
    assert translation_metrics(t, t) == (0.0, 0.0, 0.0)


def test_two_degree_offset():
    rng = np.random.default_rng(2)
    angles = rng.uniform(-60, 60, size=(10, 3))
    gt = np.stack([euler_zyx_to_matrix(a) for a in angles])
    pred = np.stack([euler_zyx_to_matrix(a + 2.0) for a in angles])
    mse, rmse, mae = rotation_metrics(pred, gt)
    assert mae == pytest.approx(2.0, abs=1e-9)
    assert mse == pytest.approx(4.0, abs=1e-8)
    assert rmse == pytest.approx(2.0, abs=1e-9)


def test_translation_offset_on_x():
    t = np.zeros((4, 3))
    mse, rmse, mae = translation_metrics(t + [0.01, 0, 0], t)
    assert mae == pytest.approx(0.01 / 3)
    assert mse == pytest.approx(1e-4 / 3)
    assert rmse == pytest.approx(np.sqrt(mse))


@given(st.integers(0, 2**32 - 1))
def test_euler_round_trip_and_reference(seed):
    r = random_rotations(np.random.default_rng(seed), 1)[0]
    assert np.allclose(euler_zyx(r), euler_reference(r), atol=1e-8)
    assert np.allclose(euler_zyx_to_matrix(euler_zyx(r)), r, atol=1e-12)


@pytest.mark.parametrize("pitch", [90.0, -90.0])
def test_gimbal_lock_branch(pitch):
    r = euler_zyx_to_matrix([30.0, pitch, 10.0])
    e = euler_zyx(r)
    assert e[1] == pytest.approx(pitch)
    assert np.allclose(euler_zyx_to_matrix(e), r, atol=1e-12)


def test_random_vs_identity_matches_reference():
    rng = np.random.default_rng(3)
    r = random_rotations(rng, 20)
    eye = np.repeat(np.eye(3)[None], 20, 0)
    ref = metrics_reference(r, eye, np.zeros((20, 3)), np.zeros((20, 3)))
    mse, rmse, mae = rotation_metrics(r, eye)
    assert abs(mse - ref["MSE_R"]) < 1e-9 and abs(mae - ref["MAE_R"]) < 1e-9 and abs(rmse - ref["RMSE_R"]) < 1e-9


def test_order_invariance_and_pooling():
    rng = np.random.default_rng(4)
    args = [random_rotations(rng, 6), rng.normal(size=(6, 3)), random_rotations(rng, 6), rng.normal(size=(6, 3))]
    gts = [random_rotations(rng, 6), rng.normal(size=(6, 3)), random_rotations(rng, 6), rng.normal(size=(6, 3))]
    a = evaluate_poses(*args, *gts)
    perm = rng.permutation(6)
    b = evaluate_poses(*[x[perm] for x in args], *[x[perm] for x in gts])
    for k in ("MSE_R", "MAE_R", "MSE_T", "MAE_T", "geodesic_MAE"):
        assert getattr(a, k) == pytest.approx(getattr(b, k), rel=1e-12)
    pooled = rotation_metrics(np.concatenate([args[0], args[2]]), np.concatenate([gts[0], gts[2]]))
    assert a.MSE_R == pytest.approx(pooled[0]) and a.n_pairs == 6


def test_geodesic_degrees():
    r = euler_zyx_to_matrix([37.0, 0.0, 0.0])
    assert geodesic_degrees(r, np.eye(3))[0] == pytest.approx(37.0)


def test_csv_round_trip(tmp_path):
    rng = np.random.default_rng(5)
    rows = [evaluate_poses(random_rotations(rng, 3), rng.normal(size=(3, 3)), random_rotations(rng, 3),
                           rng.normal(size=(3, 3)), random_rotations(rng, 3), rng.normal(size=(3, 3)),
                           random_rotations(rng, 3), rng.normal(size=(3, 3)), method=m, experiment="standard")
            for m in ("icp-point", "nsm")]
    write_csv(rows, tmp_path / "out" / "m.csv")
    assert (tmp_path / "out" / "m.csv").read_text().splitlines()[0] == ",".join(CSV_COLUMNS)
    assert read_csv(tmp_path / "out" / "m.csv") == rows


def test_count_mismatch_rejected():
    with pytest.raises(ValueError):
        rotation_metrics(np.zeros((2, 3, 3)), np.zeros((3, 3, 3)))
