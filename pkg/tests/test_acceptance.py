"""Acceptance suite: one test per acceptance criterion, each printing a PASS/FAIL line."""

import csv
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from shapemate.autodiff import tensor as T
from shapemate.autodiff.gradcheck import check_gradients
from shapemate.autodiff.nn import freeze_stats
from shapemate.bvh import unsigned_distance, winding_number
from shapemate.cutting import FAMILIES, CutSpec, generate_pair, volume_ratio
from shapemate.dataset import FORMAT_VERSION, DatasetManifest, PairEntry, SplitSpec, make_splits, read_pair, write_pair
from shapemate.geometry import quat_to_matrix, random_quaternion, so3_exp
from shapemate.metrics import evaluate_poses
from shapemate.model import (
    FULL, REDUCED, Discriminator, MatingNet, knn_graph, loss_generator, loss_pose, loss_sdf,
)
from shapemate.registration import icp, kabsch
from shapemate.mesh import sample_surface
from shapemate.toy import TOY_CONFIG, run_toy

from gradcases import CASE_NAMES, primitive_error
from oracles import brute_force_distance, cap_fraction, metrics_reference, ray_parity_inside

MESHES = ("cube", "icosphere", "torus")
REFERENCE = Path(__file__).resolve().parent.parent / "reference"


@pytest.fixture
def report(capsys):
    def emit(number: int, ok: bool, detail: str):
        with capsys.disabled():
            print(f"\n[criterion {number:2d}] {'PASS' if ok else 'FAIL'}: {detail}")
        assert ok, detail
    return emit


def rotation_error(r1: np.ndarray, r2: np.ndarray) -> float:
    """Geodesic angle via the chord length, accurate for tiny angles."""
    chord = np.linalg.norm(r1 - r2) / (2.0 * np.sqrt(2.0))
    return float(2.0 * np.arcsin(min(chord, 1.0)))


# ------------------------------------------------------------------ 1, 2


def test_01_winding_vs_ray_parity(meshes, bvhs, report):
    rng = np.random.default_rng(0)
    agreement, elapsed = {}, 0.0
    for name in MESHES:
        m = meshes[name]
        p = rng.uniform(-0.6, 0.6, size=(10_000, 3))
        t0 = time.perf_counter()
        ours = np.asarray(winding_number(bvhs[name], p)) > 0.5
        elapsed += time.perf_counter() - t0
        agreement[name] = float(np.mean(ours == ray_parity_inside(m.vertices, m.faces, p)))
    ok = min(agreement.values()) >= 0.999 and elapsed < 10.0
    report(1, ok, f"agreement {agreement}, winding runtime {elapsed:.2f}s")


def test_02_sdf_vs_brute_force(meshes, bvhs, report):
    rng = np.random.default_rng(1)
    worst = {}
    for name in MESHES:
        m = meshes[name]
        p = rng.uniform(-0.8, 0.8, size=(1000, 3))
        worst[name] = float(np.abs(unsigned_distance(bvhs[name], p) - brute_force_distance(m.vertices, m.faces, p)).max())
    report(2, max(worst.values()) < 1e-9, f"max |d_bvh - d_brute| {worst}")


# ------------------------------------------------------------------ 3, 4, 5


@pytest.fixture(scope="module")
def cut_draws(meshes, bvhs):
    out = []
    for seed in range(50):
        name, family = MESHES[seed % 3], FAMILIES[seed % 5]
        rec = generate_pair(meshes[name], bvhs[name], family, np.random.default_rng(seed), n_dense=1500, n_sdf=100)
        out.append((name, seed, rec))
    return out


def test_03_cut_conservation(meshes, bvhs, cut_draws, report):
    worst_z, bad_ratio = 0.0, []
    for name, seed, rec in cut_draws:
        m = meshes[name]
        rng = np.random.default_rng([seed, 7])
        p = rng.uniform(*m.bounds, size=(20_000, 3))
        inside = np.asarray(winding_number(bvhs[name], p)) > 0.5
        q = p[inside]
        ra = rec.part_a.region.contains(q).mean()
        rb = rec.part_b.region.contains(q).mean()
        se = np.sqrt(max(ra * (1 - ra), 1.0 / len(q)) / len(q))
        worst_z = max(worst_z, abs(ra + rb - 1.0) / se)
        if not 0.25 <= rec.meta["volume_ratio"] <= 0.75:
            bad_ratio.append((name, seed, rec.meta["volume_ratio"]))
    ok = worst_z <= 2.0 and not bad_ratio
    report(3, ok, f"max |rA + rB - 1| / SE = {worst_z:.3g}; out-of-range accepted ratios: {bad_ratio}")


def test_04_cap_fraction(meshes, bvhs, report):
    spec = CutSpec("planar", {"a": 0.0, "b": 0.0, "c": 0.2})
    r = volume_ratio(meshes["icosphere"], bvhs["icosphere"], spec, 200_000, np.random.default_rng(4)).ratio
    expected = cap_fraction(0.5, 0.5 - 0.2)
    report(4, abs(r - expected) < 0.02, f"estimate {r:.4f} vs closed form {expected:.4f}")


def test_05_reassembly(cut_draws, report):
    worst = 0.0
    for _, _, rec in cut_draws:
        for part, pose in zip(rec.parts, rec.poses):
            worst = max(worst, float(np.abs(pose.apply(part.points) - part.world_points).max()))
            worst = max(worst, float(np.abs(pose.apply(part.dense_points) - (part.dense_points + part.centroid)).max()))
    report(5, worst < 1e-9, f"max residual {worst:.3g} over {len(cut_draws)} generated pairs")


# ------------------------------------------------------------------ 6, 7


def test_06_kabsch_exactness(report):
    rng = np.random.default_rng(6)
    worst_r = worst_t = 0.0
    for _ in range(1000):
        r = quat_to_matrix(random_quaternion(rng))
        t = rng.uniform(-2, 2, size=3)
        src = rng.normal(size=(50, 3))
        x = kabsch(src, src @ r.T + t)
        worst_r = max(worst_r, rotation_error(x.rotation, r))
        worst_t = max(worst_t, float(np.linalg.norm(x.translation - t)))
    report(6, worst_r < 1e-7 and worst_t < 1e-9, f"max rotation error {worst_r:.3g} rad, translation {worst_t:.3g}")


def test_07_icp_basin(meshes, report):
    worst_deg, non_monotone, max_iters = 0.0, 0, 0
    for name in MESHES:
        for seed in range(10):
            rng = np.random.default_rng([seed, 7])
            src = sample_surface(meshes[name], 500, rng).positions
            axis = rng.normal(size=3)
            shift = rng.normal(size=3)
            r = so3_exp(axis / np.linalg.norm(axis) * np.deg2rad(5.0))
            t = shift / np.linalg.norm(shift) * 0.02
            res = icp(src, src @ r.T + t, "point", max_iters=50)
            worst_deg = max(worst_deg, np.rad2deg(rotation_error(res.transform.rotation, r)))
            non_monotone += int(np.any(np.diff(res.objective) > 0))
            max_iters = max(max_iters, res.iterations)
    ok = worst_deg < 0.1 and non_monotone == 0
    report(7, ok, f"max error {worst_deg:.3g} deg (<= {max_iters} iterations), non-monotone runs {non_monotone}")


# ------------------------------------------------------------------ 8, 9


def test_08_gradient_suite(report):
    t0 = time.perf_counter()
    prim = {name: primitive_error(name) for name in CASE_NAMES}
    rng = np.random.default_rng(1)
    b, n, nq = 2, 32, 10
    net = MatingNet(REDUCED, seed=0)
    disc = Discriminator(REDUCED, np.random.default_rng(5))
    freeze_stats(net)
    freeze_stats(disc)
    pa, pb = rng.normal(size=(b, n, 3)), rng.normal(size=(b, n, 3))
    qa, qb = rng.normal(size=(b, nq, 3)), rng.normal(size=(b, nq, 3))
    ga, gb = rng.normal(size=(b, nq)) * 0.1, rng.normal(size=(b, nq)) * 0.1
    rot_gt = tuple(np.stack([quat_to_matrix(random_quaternion(rng)) for _ in range(b)]) for _ in range(2))
    trans_gt = tuple(rng.normal(size=(b, 3)) for _ in range(2))
    # the discriminator's kNN graph is index data, held fixed under finite differences
    idx = knn_graph(net(pa, pb).assembled.data, REDUCED.k)

    def total():
        p = net(pa, pb, qa, qb)
        return T.add(T.add(loss_pose(p, rot_gt, trans_gt), loss_generator(disc(p.assembled, idx))),
                     loss_sdf(p.sdf_a, ga, p.sdf_b, gb))

    e2e = check_gradients(total, net.parameters() + disc.parameters(), h=1e-6, max_entries=4,
                          rng=np.random.default_rng(0), floor=1e-4,
                          refine_steps=(1e-5, 1e-7))
    elapsed = time.perf_counter() - t0
    worst_prim = max(prim, key=prim.get)
    ok = max(prim.values()) < 1e-4 and e2e < 1e-4 and elapsed < 60.0
    report(8, ok, f"{len(prim)} primitives max {prim[worst_prim]:.2g} ({worst_prim}); "
                  f"end-to-end {e2e:.2g}; runtime {elapsed:.1f}s")


def test_09_swap_symmetry(report):
    net = MatingNet(FULL, seed=9)
    net.eval()
    rng = np.random.default_rng(9)
    mismatches = 0
    for _ in range(20):
        pa, pb = rng.normal(size=(1, 32, 3)), rng.normal(size=(1, 40, 3))
        p, s = net(pa, pb), net(pb, pa)
        same = (np.array_equal(p.part_a.quat.data, s.part_b.quat.data)
                and np.array_equal(p.part_b.quat.data, s.part_a.quat.data)
                and np.array_equal(p.part_a.trans.data, s.part_b.trans.data)
                and np.array_equal(p.part_b.trans.data, s.part_a.trans.data))
        mismatches += int(not same)
    report(9, mismatches == 0, f"{20 - mismatches}/20 swapped instances bit-identical (d={FULL.d})")


# ------------------------------------------------------------------ 10, 11


@pytest.fixture(scope="module")
def toy_overfit(toy_set):
    trainer, metrics, seconds = run_toy(toy_set)
    return trainer, metrics, seconds


def _trace_gap(trace: list[dict], path: Path) -> float:
    """Largest relative difference between a live trace and a stored reference."""
    with open(path, newline="") as fh:
        stored = list(csv.DictReader(fh))
    if len(stored) != len(trace):
        return float("inf")
    gap = 0.0
    for live, ref in zip(trace, stored):
        for key in ("L_pose", "L_G", "L_adv", "L_SDF"):
            a, b = float(live[key]), float(ref[key])
            gap = max(gap, abs(a - b) / max(abs(b), 1e-12))
    return gap


def test_10_toy_overfit(toy_overfit, report):
    trainer, m, seconds = toy_overfit
    gap = _trace_gap(trainer.trace, REFERENCE / "toy_overfit_trace.csv")
    ok = m.MAE_R < 10.0 and m.MAE_T < 0.05 and trainer.step <= 2000 and seconds < 1800 and gap < 1e-6
    report(10, ok, f"{trainer.step} steps in {seconds:.0f}s: train MAE(R) {m.MAE_R:.2f} deg, MAE(T) {m.MAE_T:.4f}; "
                   f"max relative gap to the stored trace {gap:.2g}")


def test_11_ablation_without_pose_loss(toy_set, toy_overfit, report):
    trainer, _, _ = toy_overfit
    cfg = replace(TOY_CONFIG, lambda_pose=0.0, steps=trainer.step, stop_mae_r=None, stop_mae_t=None)
    ab_trainer, m, seconds = run_toy(toy_set, cfg)
    report(11, m.MAE_R > 45.0, f"no pose loss, {ab_trainer.step} steps: train MAE(R) {m.MAE_R:.1f} deg")


# ------------------------------------------------------------------ 12, 13


def test_12_metrics_oracle(report):
    rng = np.random.default_rng(12)
    worst, rmse_gap = 0.0, 0.0
    for _ in range(100):
        n = int(rng.integers(1, 8))
        rots = [np.stack([quat_to_matrix(random_quaternion(rng)) for _ in range(n)]) for _ in range(4)]
        trans = [rng.normal(size=(n, 3)) for _ in range(4)]
        rec = evaluate_poses(rots[0], trans[0], rots[1], trans[1], rots[2], trans[2], rots[3], trans[3])
        ref = metrics_reference(np.concatenate([rots[0], rots[1]]), np.concatenate([rots[2], rots[3]]),
                                np.concatenate([trans[0], trans[1]]), np.concatenate([trans[2], trans[3]]))
        worst = max(worst, max(abs(getattr(rec, k) - v) for k, v in ref.items()))
        rmse_gap = max(rmse_gap, abs(rec.RMSE_R - np.sqrt(rec.MSE_R)), abs(rec.RMSE_T - np.sqrt(rec.MSE_T)))
    report(12, worst < 1e-9 and rmse_gap < 1e-12, f"max |ours - oracle| {worst:.3g}; max |RMSE - sqrt(MSE)| {rmse_gap:.3g}")


def test_13_dataset_round_trip(cut_draws, tmp_path, report):
    rec = cut_draws[0][2]
    pid = write_pair(rec, tmp_path / "c0")
    first = read_pair(tmp_path / "c0", pid)
    current, exact = first, True
    for i in range(1, 101):
        write_pair(current, tmp_path / f"c{i % 2}", pid)
        current = read_pair(tmp_path / f"c{i % 2}", pid)
        for a, b in ((first.part_a.points, current.part_a.points), (first.part_b.normals, current.part_b.normals),
                     (first.sdf_a.points, current.sdf_a.points), (first.sdf_b.sdf, current.sdf_b.sdf)):
            exact &= a.tobytes() == b.tobytes()
        exact &= current.meta == first.meta
    entries = [PairEntry(f"p{i:03d}", "cat", FAMILIES[i % 5], "solid", f"pairs/p{i:03d}", i) for i in range(100)]
    m = make_splits(DatasetManifest(FORMAT_VERSION, entries), SplitSpec())
    counts = {s: list(m.splits.values()).count(s) for s in ("train", "val", "test")}
    ok = exact and counts == {"train": 80, "val": 10, "test": 10}
    report(13, ok, f"100 cycles bitwise exact: {exact}; split counts {counts}")
