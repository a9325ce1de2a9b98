"""Pose-error metrics: Euler-angle MSE/RMSE/MAE, translation errors, geodesic angle."""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .geometry import euler_zyx

CSV_COLUMNS = ("method", "experiment", "MSE_R", "RMSE_R", "MAE_R", "MSE_T", "RMSE_T", "MAE_T", "geodesic_MAE", "n_pairs")


def wrap_degrees(d: np.ndarray) -> np.ndarray:
    """Map angle differences into (-180, 180]."""
    d = np.asarray(d, dtype=np.float64)
    return 180.0 - np.mod(180.0 - d, 360.0)


def _stack(rots) -> np.ndarray:
    r = np.asarray(rots, dtype=np.float64)
    return r.reshape(-1, 3, 3)


def euler_errors(pred_rots, gt_rots) -> np.ndarray:
    """Wrapped per-angle differences (n, 3) in degrees."""
    p, g = _stack(pred_rots), _stack(gt_rots)
    if p.shape != g.shape:
        raise ValueError(f"rotation count mismatch: {p.shape} vs {g.shape}")
    ep = np.array([euler_zyx(r) for r in p]).reshape(-1, 3)
    eg = np.array([euler_zyx(r) for r in g]).reshape(-1, 3)
    return wrap_degrees(ep - eg)


def geodesic_degrees(pred_rots, gt_rots) -> np.ndarray:
    p, g = _stack(pred_rots), _stack(gt_rots)
    cos = (np.einsum("nij,nij->n", p, g) - 1.0) / 2.0
    return np.rad2deg(np.arccos(np.clip(cos, -1.0, 1.0)))


def _mse_rmse_mae(err: np.ndarray) -> tuple[float, float, float]:
    err = np.asarray(err, dtype=np.float64).reshape(-1)
    if err.size == 0:
        return float("nan"), float("nan"), float("nan")
    mse = float(np.mean(err**2))
    return mse, float(np.sqrt(mse)), float(np.mean(np.abs(err)))


def rotation_metrics(pred_rots, gt_rots) -> tuple[float, float, float]:
    """(MSE, RMSE, MAE) pooled over all Euler angles of all given rotations."""
    return _mse_rmse_mae(euler_errors(pred_rots, gt_rots))


def translation_metrics(pred_trans, gt_trans) -> tuple[float, float, float]:
    """(MSE, RMSE, MAE) pooled over every translation component."""
    p = np.asarray(pred_trans, dtype=np.float64).reshape(-1, 3)
    g = np.asarray(gt_trans, dtype=np.float64).reshape(-1, 3)
    if p.shape != g.shape:
        raise ValueError(f"translation count mismatch: {p.shape} vs {g.shape}")
    return _mse_rmse_mae(p - g)


@dataclass(frozen=True)
class MetricsRecord:
    method: str
    experiment: str
    MSE_R: float
    RMSE_R: float
    MAE_R: float
    MSE_T: float
    RMSE_T: float
    MAE_T: float
    geodesic_MAE: float
    n_pairs: int

    def row(self) -> dict:
        return asdict(self)


def evaluate_poses(
    pred_rot_a, pred_t_a, pred_rot_b, pred_t_b,
    gt_rot_a, gt_t_a, gt_rot_b, gt_t_b,
    method: str = "", experiment: str = "",
) -> MetricsRecord:
    """Metrics over ``n`` pairs with both parts pooled."""
    pr = np.concatenate([_stack(pred_rot_a), _stack(pred_rot_b)])
    gr = np.concatenate([_stack(gt_rot_a), _stack(gt_rot_b)])
    pt = np.concatenate([np.reshape(pred_t_a, (-1, 3)), np.reshape(pred_t_b, (-1, 3))])
    gt = np.concatenate([np.reshape(gt_t_a, (-1, 3)), np.reshape(gt_t_b, (-1, 3))])
    mse_r, rmse_r, mae_r = rotation_metrics(pr, gr)
    mse_t, rmse_t, mae_t = translation_metrics(pt, gt)
    geo = float(np.mean(geodesic_degrees(pr, gr))) if len(pr) else float("nan")
    return MetricsRecord(method, experiment, mse_r, rmse_r, mae_r, mse_t, rmse_t, mae_t, geo, len(pr) // 2)


def write_csv(records: Sequence[MetricsRecord], path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        w.writeheader()
        for r in records:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.row().items()})


def read_csv(path) -> list[MetricsRecord]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            vals = {}
            for k, v in row.items():
                vals[k] = v if k in ("method", "experiment") else int(v) if k == "n_pairs" else float(v)
            out.append(MetricsRecord(**vals))
    return out
