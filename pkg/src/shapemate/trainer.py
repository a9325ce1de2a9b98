"""Alternating generator / discriminator training with Adam.

Every batch is a pure function of ``(config.seed, step)``: the epoch
permutation, input rotations, point subsets and SDF query subsets are all
drawn from generators seeded by those two numbers. A checkpoint therefore only
needs parameters, normalization buffers, optimizer moments and the step count
to continue bit for bit.
"""

from __future__ import annotations

import contextlib
import csv
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from .autodiff import tensor as T
from .autodiff.checkpoint import load_tensors, save_tensors
from .autodiff.nn import Module, freeze_stats
from .autodiff.optim import Adam, TrainingDivergedError
from .cutting import ShapePairRecord
from .dataset import load_manifest, read_pair
from .geometry import quat_to_matrix, random_quaternion
from .metrics import MetricsRecord, evaluate_poses
from .model import (
    PRESETS, Discriminator, MatingNet, ModelConfig, loss_adversarial, loss_generator, loss_pose, loss_sdf,
)

log = logging.getLogger(__name__)

TRACE_COLUMNS = ("step", "L_pose", "L_G", "L_adv", "L_SDF", "val_MAE_R", "val_MAE_T", "val_geodesic_MAE")


@dataclass
class TrainConfig:
    model: str | dict = "reduced"
    steps: int | None = 2000  # generator steps; derived from epochs when None
    epochs: int | None = None
    batch_size: int = 4
    lr: float = 1e-3
    weight_decay: float = 1e-6
    decay_mode: str = "weight"
    lambda_pose: float = 1.0
    lambda_g: float = 1.0
    lambda_sdf: float = 1.0
    adversarial: bool = True
    gen_steps_per_disc: int = 1
    sdf_queries: int = 512
    points_per_part: int | None = None
    resample_poses: bool = True
    noise_sigma: float = 0.0
    seed: int = 0
    val_every: int = 100
    checkpoint_every: int = 100
    # optional early stop on training-set metrics, checked every val_every steps
    stop_mae_r: float | None = None
    stop_mae_t: float | None = None

    def __post_init__(self):
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2 (batch normalization needs a batch)")
        for name in ("lr", "sdf_queries", "val_every", "checkpoint_every", "gen_steps_per_disc"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for name in ("lambda_pose", "lambda_g", "lambda_sdf", "weight_decay", "noise_sigma"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be finite and >= 0")
        if self.steps is None and self.epochs is None:
            raise ValueError("set steps or epochs")

    @property
    def model_config(self) -> ModelConfig:
        if isinstance(self.model, str):
            if self.model not in PRESETS:
                raise ValueError(f"unknown model preset {self.model!r}; choose from {sorted(PRESETS)}")
            return PRESETS[self.model]
        return ModelConfig.from_json(self.model)

    def total_steps(self, n_pairs: int) -> int:
        if self.steps is not None:
            return self.steps
        return self.epochs * math.ceil(n_pairs / self.batch_size)

    @classmethod
    def from_json(cls, data: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path) -> "TrainConfig":
        return cls.from_json(json.loads(Path(path).read_text()))


@dataclass
class TrainingPair:
    """Canonical (zero-centered, unrotated) part clouds plus SDF samples."""

    id: str
    points_a: np.ndarray
    points_b: np.ndarray
    sdf_a: np.ndarray  # (S, 4): xyz in the part frame + signed distance
    sdf_b: np.ndarray
    centroid_a: np.ndarray
    centroid_b: np.ndarray
    meta: dict = field(default_factory=dict)
    normals_a: np.ndarray | None = None
    normals_b: np.ndarray | None = None

    @classmethod
    def from_record(cls, record: ShapePairRecord, pair_id: str = "") -> "TrainingPair":
        return cls(
            pair_id or str(record.meta.get("id", "")),
            np.asarray(record.part_a.points, dtype=np.float64),
            np.asarray(record.part_b.points, dtype=np.float64),
            np.column_stack([record.sdf_a.points, record.sdf_a.sdf]).astype(np.float64),
            np.column_stack([record.sdf_b.points, record.sdf_b.sdf]).astype(np.float64),
            np.asarray(record.pose_a.t, dtype=np.float64),
            np.asarray(record.pose_b.t, dtype=np.float64),
            dict(record.meta),
            np.asarray(record.part_a.normals, dtype=np.float64),
            np.asarray(record.part_b.normals, dtype=np.float64),
        )


def load_pairs(root, split: str | None = None) -> list[TrainingPair]:
    manifest = load_manifest(root)
    ids = manifest.ids() if split is None else manifest.split_ids(split)
    return [TrainingPair.from_record(read_pair(root, i), i) for i in ids]


@dataclass
class Batch:
    points_a: np.ndarray  # (B, n, 3) network inputs (rotated, zero-centered)
    points_b: np.ndarray
    queries_a: np.ndarray  # (B, Q, 3) in the input frame
    queries_b: np.ndarray
    sdf_a: np.ndarray  # (B, Q)
    sdf_b: np.ndarray
    rot_gt: tuple[np.ndarray, np.ndarray]  # input frame -> object frame
    trans_gt: tuple[np.ndarray, np.ndarray]
    assembled_gt: np.ndarray  # (B, 2n, 3)
    index: np.ndarray


def _rotation(rng: np.random.Generator) -> np.ndarray:
    return quat_to_matrix(random_quaternion(rng))


def make_inputs(
    pairs: Sequence[TrainingPair],
    index: np.ndarray,
    rots_a: np.ndarray,
    rots_b: np.ndarray,
    rng: np.random.Generator | None,
    points_per_part: int | None = None,
    sdf_queries: int = 0,
    noise_sigma: float = 0.0,
    resample: bool = True,
) -> Batch:
    """Rotate canonical parts into network inputs and collect targets.

    Without ``resample`` (or without an rng) point subsets are the leading
    ``points_per_part`` rows and SDF queries the leading ``sdf_queries`` rows.
    Noise always needs an rng.
    """
    pa, pb, qa, qb, sa, sb, ra, rb, ta, tb, gt = ([] for _ in range(11))
    for j, i in enumerate(index):
        p = pairs[i]
        out = []
        for pts, sdf, rot, c in ((p.points_a, p.sdf_a, rots_a[j], p.centroid_a), (p.points_b, p.sdf_b, rots_b[j], p.centroid_b)):
            n = len(pts) if points_per_part is None else points_per_part
            sel = np.arange(n) if rng is None or not resample or n == len(pts) else np.sort(rng.choice(len(pts), n, replace=False))
            canon = pts[sel]
            moved = canon @ rot.T
            if noise_sigma > 0:
                if rng is None:
                    raise ValueError("noise needs an rng")
                moved = moved + rng.normal(0.0, noise_sigma, moved.shape)
            if sdf_queries:
                qs = np.arange(sdf_queries) if rng is None or not resample else rng.choice(len(sdf), sdf_queries, replace=False)
                q = sdf[qs]
            else:
                q = np.zeros((0, 4))
            out.append((moved, q[:, :3] @ rot.T, q[:, 3], rot.T, c, canon + c))
        (ma, qa_, sa_, ra_, ta_, wa), (mb, qb_, sb_, rb_, tb_, wb) = out
        pa.append(ma), pb.append(mb), qa.append(qa_), qb.append(qb_), sa.append(sa_), sb.append(sb_)
        ra.append(ra_), rb.append(rb_), ta.append(ta_), tb.append(tb_), gt.append(np.concatenate([wa, wb]))
    return Batch(
        np.stack(pa), np.stack(pb), np.stack(qa), np.stack(qb), np.stack(sa), np.stack(sb),
        (np.stack(ra), np.stack(rb)), (np.stack(ta), np.stack(tb)), np.stack(gt), np.asarray(index),
    )


@contextlib.contextmanager
def frozen(module: Module):
    """Hold a network fixed: no gradients recorded for it, no BN statistic updates."""
    params = module.parameters()
    flags = [p.requires_grad for p in params]
    for p in params:
        p.requires_grad = False
    freeze_stats(module, True)
    try:
        yield
    finally:
        for p, f in zip(params, flags):
            p.requires_grad = f
        freeze_stats(module, False)


def predict(net: MatingNet, points_a: np.ndarray, points_b: np.ndarray, chunk: int = 16):
    """Eval-mode poses: rotations (n, 3, 3) and translations (n, 3) for both parts."""
    was = net.training
    net.eval()
    out = [[], [], [], []]
    try:
        with T.no_grad():
            for s in range(0, len(points_a), chunk):
                pred = net(points_a[s : s + chunk], points_b[s : s + chunk])
                for lst, val in zip(out, (pred.part_a.rot, pred.part_a.trans, pred.part_b.rot, pred.part_b.trans)):
                    lst.append(val.data)
    finally:
        net.train(was)
    return tuple(np.concatenate(v) for v in out)


def evaluation_rotations(n: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Fixed per-pair input rotations for evaluation (independent of training draws)."""
    rng = np.random.default_rng([seed, 0xE7A1])
    rots = np.stack([_rotation(rng) for _ in range(2 * n)]) if n else np.zeros((0, 3, 3))
    return rots[0::2], rots[1::2]


def evaluate_model(
    net: MatingNet,
    pairs: Sequence[TrainingPair],
    seed: int = 0,
    points_per_part: int | None = None,
    rotations: tuple[np.ndarray, np.ndarray] | None = None,
    noise_sigma: float = 0.0,
    method: str = "nsm",
    experiment: str = "",
) -> MetricsRecord:
    ra, rb = rotations if rotations is not None else evaluation_rotations(len(pairs), seed)
    rng = np.random.default_rng([seed, 0x0153]) if noise_sigma > 0 else None
    batch = make_inputs(pairs, np.arange(len(pairs)), ra, rb, rng, points_per_part, 0, noise_sigma)
    pra, pta, prb, ptb = predict(net, batch.points_a, batch.points_b)
    (gra, grb), (gta, gtb) = batch.rot_gt, batch.trans_gt
    return evaluate_poses(pra, pta, prb, ptb, gra, gta, grb, gtb, method=method, experiment=experiment)


def _checksum(module: Module) -> float:
    return float(sum(np.sum(p.data) + np.sum(p.data**2) for p in module.parameters()))


class Trainer:
    def __init__(
        self,
        train_pairs: Sequence[TrainingPair],
        config: TrainConfig,
        val_pairs: Sequence[TrainingPair] = (),
        out_dir=None,
    ):
        if len(train_pairs) == 0:
            raise ValueError("no training pairs")
        self.pairs = list(train_pairs)
        self.val_pairs = list(val_pairs)
        self.config = config
        self.out_dir = Path(out_dir) if out_dir is not None else None
        cfg = config.model_config
        self.gen = MatingNet(cfg, seed=config.seed)
        self.disc = Discriminator(cfg, np.random.default_rng([config.seed, 1]))
        kw = dict(lr=config.lr, weight_decay=config.weight_decay, decay_mode=config.decay_mode)
        self.opt_g = Adam(self.gen.parameters(), **kw)
        self.opt_d = Adam(self.disc.parameters(), **kw)
        self.step = 0
        self.trace: list[dict] = []
        self.best_val = float("inf")
        if not config.resample_poses:
            rng = np.random.default_rng([config.seed, 2])
            rots = np.stack([_rotation(rng) for _ in range(2 * len(self.pairs))])
            self._fixed_rots = (rots[0::2], rots[1::2])

    # ---------------------------------------------------------------- batches
    def batch_indices(self, step: int) -> np.ndarray:
        n, bs = len(self.pairs), self.config.batch_size
        per_epoch = math.ceil(n / bs)
        epoch, slot = divmod(step, per_epoch)
        perm = np.random.default_rng([self.config.seed, 3, epoch]).permutation(n)
        return perm[(slot * bs + np.arange(bs)) % n]

    def make_batch(self, step: int) -> Batch:
        c = self.config
        idx = self.batch_indices(step)
        rng = np.random.default_rng([c.seed, 4, step])
        if c.resample_poses:
            rots = np.stack([_rotation(rng) for _ in range(2 * len(idx))])
            ra, rb = rots[0::2], rots[1::2]
        else:
            ra, rb = self._fixed_rots[0][idx], self._fixed_rots[1][idx]
        batch = make_inputs(self.pairs, idx, ra, rb, rng, c.points_per_part, 0, c.noise_sigma, c.resample_poses)
        # SDF queries are always resampled
        for tag, sdf_key in (("a", "sdf_a"), ("b", "sdf_b")):
            qs, vals = [], []
            rot = batch.rot_gt[0] if tag == "a" else batch.rot_gt[1]
            for j, i in enumerate(idx):
                table = getattr(self.pairs[i], sdf_key)
                pick = rng.choice(len(table), c.sdf_queries, replace=False)
                # rot_gt maps input -> canonical, so canonical -> input is its transpose
                qs.append(table[pick, :3] @ rot[j])
                vals.append(table[pick, 3])
            setattr(batch, f"queries_{tag}", np.stack(qs))
            setattr(batch, f"sdf_{tag}", np.stack(vals))
        return batch

    # ------------------------------------------------------------------ steps
    def generator_step(self, batch: Batch) -> tuple[dict, np.ndarray]:
        c = self.config
        self.gen.train()
        self.opt_g.zero_grad()
        with frozen(self.disc):
            pred = self.gen(batch.points_a, batch.points_b, batch.queries_a, batch.queries_b)
            l_pose = loss_pose(pred, batch.rot_gt, batch.trans_gt)
            l_sdf = loss_sdf(pred.sdf_a, batch.sdf_a, pred.sdf_b, batch.sdf_b)
            total = T.add(T.mul(l_pose, c.lambda_pose), T.mul(l_sdf, c.lambda_sdf))
            l_g = None
            if c.adversarial:
                l_g = loss_generator(self.disc(pred.assembled))
                total = T.add(total, T.mul(l_g, c.lambda_g))
            losses = {"L_pose": l_pose.item(), "L_SDF": l_sdf.item(),
                      "L_G": l_g.item() if l_g is not None else float("nan")}
            if not math.isfinite(total.item()):
                raise TrainingDivergedError(f"non-finite generator loss at step {self.step}: {losses}")
            # backward inside the freeze so no gradient reaches the discriminator
            total.backward()
        self.opt_g.step()
        return losses, pred.assembled.data.copy()

    def discriminator_step(self, batch: Batch, assembled_pred: np.ndarray) -> float:
        self.disc.train()
        self.opt_d.zero_grad()
        with frozen(self.gen):
            loss = loss_adversarial(self.disc(assembled_pred), self.disc(batch.assembled_gt))
            if not math.isfinite(loss.item()):
                raise TrainingDivergedError(f"non-finite adversarial loss at step {self.step}")
            loss.backward()
        self.opt_d.step()
        return loss.item()

    def train_step(self) -> dict:
        batch = self.make_batch(self.step)
        losses, assembled = self.generator_step(batch)
        losses["L_adv"] = float("nan")
        if self.config.adversarial and self.step % self.config.gen_steps_per_disc == 0:
            losses["L_adv"] = self.discriminator_step(batch, assembled)
        self.step += 1
        return {"step": self.step, **losses}

    # ------------------------------------------------------------- evaluation
    def evaluate(self, pairs: Sequence[TrainingPair] | None = None, experiment: str = "") -> MetricsRecord:
        """Metrics in eval mode; parameters and buffers are left untouched."""
        pairs = self.val_pairs if pairs is None else pairs
        if not self.config.resample_poses and pairs is self.pairs:
            rots = self._fixed_rots
        else:
            rots = None
        return evaluate_model(self.gen, pairs, self.config.seed, self.config.points_per_part, rots,
                              experiment=experiment)

    def evaluate_train(self) -> MetricsRecord:
        return self.evaluate(self.pairs, "train")

    # ---------------------------------------------------------------- fitting
    def fit(self, max_seconds: float | None = None) -> list[dict]:
        c = self.config
        total = c.total_steps(len(self.pairs))
        start = time.time()
        while self.step < total:
            row = self.train_step()
            if self.step % c.val_every == 0 or self.step == total:
                stop = self._periodic(row)
                if stop:
                    break
            self.trace.append(row)
            if self.out_dir is not None and self.step % c.checkpoint_every == 0:
                self.save(self.out_dir / "last")
                self.write_trace()
            if max_seconds is not None and time.time() - start > max_seconds:
                log.warning("time budget exhausted at step %d", self.step)
                break
        if self.out_dir is not None:
            self.save(self.out_dir / "last")
            self.write_trace()
        return self.trace

    def _periodic(self, row: dict) -> bool:
        c = self.config
        if self.val_pairs:
            m = self.evaluate()
            row.update(val_MAE_R=m.MAE_R, val_MAE_T=m.MAE_T, val_geodesic_MAE=m.geodesic_MAE)
            if m.MAE_R < self.best_val:
                self.best_val = m.MAE_R
                if self.out_dir is not None:
                    self.save(self.out_dir / "best")
        log.info("step %d %s", self.step, {k: round(v, 5) for k, v in row.items() if k != "step"})
        if c.stop_mae_r is not None or c.stop_mae_t is not None:
            m = self.evaluate_train()
            ok_r = c.stop_mae_r is None or m.MAE_R < c.stop_mae_r
            ok_t = c.stop_mae_t is None or m.MAE_T < c.stop_mae_t
            if ok_r and ok_t:
                self.trace.append(row)
                return True
        return False

    def write_trace(self, path=None) -> Path:
        path = Path(path) if path is not None else self.out_dir / "trace.csv"
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=TRACE_COLUMNS, restval="")
            w.writeheader()
            for row in self.trace:
                w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items() if k in TRACE_COLUMNS})
        return path

    # ------------------------------------------------------------ checkpoints
    def state(self) -> dict[str, np.ndarray]:
        out = {}
        for prefix, obj in (("gen", self.gen), ("disc", self.disc), ("opt_g", self.opt_g), ("opt_d", self.opt_d)):
            out.update({f"{prefix}.{k}": v for k, v in obj.state_dict().items()})
        return out

    def save(self, path) -> None:
        extra = {"step": self.step, "best_val": self.best_val, "config": asdict(self.config), "trace": self.trace}
        save_tensors(path, self.state(), extra)

    def load(self, path) -> None:
        tensors, extra = load_tensors(path)
        for prefix, obj in (("gen", self.gen), ("disc", self.disc), ("opt_g", self.opt_g), ("opt_d", self.opt_d)):
            sub = {k[len(prefix) + 1 :]: v for k, v in tensors.items() if k.startswith(prefix + ".")}
            obj.load_state_dict(sub)
        self.step = int(extra["step"])
        self.best_val = float(extra.get("best_val", float("inf")))
        self.trace = list(extra.get("trace", []))

    @classmethod
    def resume(cls, path, train_pairs, val_pairs=(), out_dir=None) -> "Trainer":
        _, extra = load_tensors(path)
        trainer = cls(train_pairs, TrainConfig.from_json(extra["config"]), val_pairs, out_dir)
        trainer.load(path)
        return trainer


def load_generator(path) -> tuple[MatingNet, TrainConfig]:
    """Generator weights and the training config from a trainer checkpoint."""
    tensors, extra = load_tensors(path)
    config = TrainConfig.from_json(extra["config"])
    net = MatingNet(config.model_config, seed=config.seed)
    net.load_state_dict({k[4:]: v for k, v in tensors.items() if k.startswith("gen.")})
    return net, config
