"""Experiment drivers: learned model and registration baselines on a dataset split."""

from __future__ import annotations

import logging
from dataclasses import replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .dataset import DatasetError, SplitSpec, load_manifest, make_splits, read_pair
from .geometry import rigid_sqrt
from .metrics import MetricsRecord, evaluate_poses
from .registration import RigidTransform, icp, sparse_icp
from .trainer import TrainConfig, Trainer, TrainingPair, evaluate_model, evaluation_rotations, load_generator

log = logging.getLogger(__name__)

KINDS = ("standard", "unseen-category", "unseen-cut", "noisy")
BASELINES = ("identity", "icp-point", "icp-plane", "sparse-icp")
NOISE_SIGMA = 0.05


def split_spec_for(kind: str, seed: int = 0) -> SplitSpec:
    if kind not in KINDS:
        raise ValueError(f"unknown experiment kind {kind!r}; choose from {KINDS}")
    mode = {"unseen-category": "unseen-category", "unseen-cut": "unseen-cut"}.get(kind, "random")
    return SplitSpec(seed=seed, mode=mode)


def load_split(root, kind: str, seed: int = 0) -> dict[str, list[TrainingPair]]:
    """Pairs of every split under the assignment that ``kind`` prescribes."""
    manifest = make_splits(load_manifest(root), split_spec_for(kind, seed))
    out = {}
    for split in ("train", "val", "test"):
        ids = manifest.split_ids(split)
        out[split] = [TrainingPair.from_record(read_pair(root, i), i) for i in ids]
    if not out["test"]:
        raise DatasetError(f"{kind}: the test split is empty")
    return out


# ------------------------------------------------------------------ baselines


def relative_to_poses(x: RigidTransform) -> tuple[RigidTransform, RigidTransform]:
    """Split B->A transform ``x`` into two poses with ``pose_a^-1 o pose_b = x``."""
    rs, ts = rigid_sqrt(x.rotation, x.translation)
    half = RigidTransform(rs, ts)
    return half.inverse(), half


def register(method: str, src: np.ndarray, dst: np.ndarray, dst_normals: np.ndarray | None = None) -> RigidTransform:
    """Transform taking ``src`` (part B input) onto ``dst`` (part A input)."""
    if method == "identity":
        return RigidTransform.identity()
    if method == "icp-point":
        return icp(src, dst, "point").transform
    if method == "icp-plane":
        return icp(src, dst, "plane", dst_normals=dst_normals).transform
    if method == "sparse-icp":
        return sparse_icp(src, dst).transform
    raise ValueError(f"unknown baseline {method!r}; choose from {BASELINES}")


def evaluate_baseline(
    method: str,
    pairs: Sequence[TrainingPair],
    seed: int = 0,
    noise_sigma: float = 0.0,
    experiment: str = "",
    gt_posed: bool = False,
) -> MetricsRecord:
    """Register each pair and score the split poses.

    With ``gt_posed`` the inputs are the parts already in their assembled
    object-frame placement, so the ground-truth poses are identities.
    """
    n = len(pairs)
    if gt_posed:
        ra = rb = np.repeat(np.eye(3)[None], n, axis=0)
    else:
        ra, rb = evaluation_rotations(n, seed)
    rng = np.random.default_rng([seed, 0x0153])
    pred = {k: [] for k in ("ra", "ta", "rb", "tb")}
    gt = {k: [] for k in ("ra", "ta", "rb", "tb")}
    for i, p in enumerate(pairs):
        ca, cb = (p.centroid_a, p.centroid_b) if gt_posed else (np.zeros(3), np.zeros(3))
        pa = p.points_a @ ra[i].T + ca
        pb = p.points_b @ rb[i].T + cb
        if noise_sigma > 0:
            pa = pa + rng.normal(0.0, noise_sigma, pa.shape)
            pb = pb + rng.normal(0.0, noise_sigma, pb.shape)
        na = None if p.normals_a is None else p.normals_a @ ra[i].T
        x = register(method, pb, pa, na)
        pose_a, pose_b = relative_to_poses(x)
        pred["ra"].append(pose_a.rotation), pred["ta"].append(pose_a.translation)
        pred["rb"].append(pose_b.rotation), pred["tb"].append(pose_b.translation)
        if gt_posed:
            gt["ra"].append(np.eye(3)), gt["ta"].append(np.zeros(3))
            gt["rb"].append(np.eye(3)), gt["tb"].append(np.zeros(3))
        else:
            gt["ra"].append(ra[i].T), gt["ta"].append(p.centroid_a)
            gt["rb"].append(rb[i].T), gt["tb"].append(p.centroid_b)
    return evaluate_poses(
        pred["ra"], pred["ta"], pred["rb"], pred["tb"], gt["ra"], gt["ta"], gt["rb"], gt["tb"],
        method=method, experiment=experiment,
    )


# -------------------------------------------------------------------- driver


def run_experiment(
    kind: str,
    root,
    methods: Sequence[str] = ("nsm",),
    checkpoint=None,
    config: TrainConfig | None = None,
    seed: int = 0,
    out_dir=None,
) -> list[MetricsRecord]:
    """One metrics row per method on the test fold of ``kind``'s split.

    ``nsm`` evaluates ``checkpoint`` when given, otherwise trains with
    ``config`` on the train fold first. The noisy kind jitters both the
    training inputs and the test clouds.
    """
    splits = load_split(root, kind, seed)
    sigma = NOISE_SIGMA if kind == "noisy" else 0.0
    rows = []
    for method in methods:
        if method == "nsm":
            if checkpoint is not None:
                net, cfg = load_generator(checkpoint)
            else:
                cfg = replace(config or TrainConfig(), noise_sigma=sigma)
                trainer = Trainer(splits["train"], cfg, splits["val"], Path(out_dir) / "nsm" if out_dir else None)
                trainer.fit()
                net = trainer.gen
            rows.append(evaluate_model(net, splits["test"], seed, cfg.points_per_part, noise_sigma=sigma,
                                       method="nsm", experiment=kind))
        else:
            rows.append(evaluate_baseline(method, splits["test"], seed, sigma, experiment=kind))
        log.info("%s/%s: %s", kind, method, rows[-1])
    return rows
