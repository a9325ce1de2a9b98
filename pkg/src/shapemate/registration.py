"""Classical rigid registration baselines: weighted Kabsch, ICP and Sparse ICP.

All functions estimate a single transform that moves ``src`` onto ``dst``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .geometry import so3_exp


class DegenerateConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class RigidTransform:
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=np.float64)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if r.shape != (3, 3):
            raise ValueError("rotation must be 3x3")
        if np.abs(r.T @ r - np.eye(3)).max() > 1e-9 or abs(np.linalg.det(r) - 1.0) > 1e-9:
            raise ValueError("rotation is not a proper orthonormal matrix")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))

    def apply(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points) @ self.rotation.T + self.translation

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """``self ∘ other``."""
        return RigidTransform(self.rotation @ other.rotation, self.rotation @ other.translation + self.translation)

    def inverse(self) -> "RigidTransform":
        return RigidTransform(self.rotation.T, -self.rotation.T @ self.translation)


def kabsch(src: np.ndarray, dst: np.ndarray, weights: np.ndarray | None = None) -> RigidTransform:
    """Weighted least-squares rigid alignment ``min sum w_i |R src_i + t - dst_i|^2``."""
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    w = np.ones(len(src)) if weights is None else np.asarray(weights, dtype=np.float64)
    if src.shape != dst.shape or src.ndim != 2 or src.shape[1] != 3 or len(w) != len(src):
        raise ValueError(f"shape mismatch: src {src.shape}, dst {dst.shape}, weights {w.shape}")
    if len(src) < 3:
        raise DegenerateConfigurationError("need at least 3 correspondences")
    if np.any(w < 0) or w.sum() <= 0:
        raise ValueError("weights must be nonnegative with positive sum")
    w = w / w.sum()
    cs = w @ src
    cd = w @ dst
    h = (src - cs).T @ ((dst - cd) * w[:, None])
    u, s, vt = np.linalg.svd(h)
    # rank < 2 leaves the rotation about the degenerate axis undetermined
    if s[1] <= 1e-12 * max(s[0], 1e-300):
        raise DegenerateConfigurationError("covariance is rank deficient (collinear or coincident points)")
    d = np.sign(np.linalg.det(vt.T @ u.T))
    r = vt.T @ np.diag([1.0, 1.0, d if d != 0 else 1.0]) @ u.T
    return RigidTransform(r, cd - r @ cs)


def _point_to_plane_step(src, dst, normals, w) -> RigidTransform:
    """Linearized 6-DoF point-to-plane update (small-angle), exact rotation via the exponential map."""
    a = np.hstack([np.cross(src, normals), normals])
    b = np.einsum("ij,ij->i", dst - src, normals)
    ata = a.T @ (a * w[:, None])
    atb = a.T @ (b * w)
    try:
        x = np.linalg.solve(ata, atb)
    except np.linalg.LinAlgError:
        x = np.linalg.lstsq(ata, atb, rcond=None)[0]
    return RigidTransform(so3_exp(x[:3]), x[3:])


@dataclass
class IcpResult:
    transform: RigidTransform
    objective: list[float] = field(default_factory=list)  # per iteration, before the update
    iterations: int = 0
    converged: bool = False


def _pose_delta(t: RigidTransform) -> float:
    return float(np.linalg.norm(t.rotation - np.eye(3)) + np.linalg.norm(t.translation))


def _registration_loop(src, dst, variant, dst_normals, max_iters, tol, weight_fn, irls_steps, init):
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    if len(src) == 0 or len(dst) == 0:
        raise ValueError("empty point set")
    if variant not in ("point", "plane"):
        raise ValueError(f"variant must be 'point' or 'plane', got {variant!r}")
    if variant == "plane":
        if dst_normals is None:
            raise ValueError("point-to-plane ICP requires destination normals")
        dst_normals = np.asarray(dst_normals, dtype=np.float64)
    tree = cKDTree(dst)
    current = init or RigidTransform.identity()
    result = IcpResult(current)
    for it in range(1, max_iters + 1):
        moved = current.apply(src)
        _, nn = tree.query(moved)
        target = dst[nn]
        if variant == "point":
            res = np.linalg.norm(moved - target, axis=1)
        else:
            res = np.abs(np.einsum("ij,ij->i", moved - target, dst_normals[nn]))
        result.objective.append(float(np.mean(res**2)))
        step = RigidTransform.identity()
        for _ in range(irls_steps):
            w = weight_fn(res)
            if variant == "point":
                step = kabsch(moved, target, w)
            else:
                step = _point_to_plane_step(moved, target, dst_normals[nn], w)
            if irls_steps > 1:
                m2 = step.apply(moved)
                res = (np.linalg.norm(m2 - target, axis=1) if variant == "point"
                       else np.abs(np.einsum("ij,ij->i", m2 - target, dst_normals[nn])))
        current = step.compose(current)
        result.transform, result.iterations = current, it
        if _pose_delta(step) < tol:
            result.converged = True
            break
    return result


def icp(
    src: np.ndarray,
    dst: np.ndarray,
    variant: str = "point",
    dst_normals: np.ndarray | None = None,
    max_iters: int = 200,
    tol: float = 1e-6,
    init: RigidTransform | None = None,
) -> IcpResult:
    """Closest-point ICP. The point variant's objective trace is non-increasing."""
    return _registration_loop(src, dst, variant, dst_normals, max_iters, tol, lambda r: np.ones_like(r), 1, init)


SPARSE_EPS = 1e-6


def sparse_weights(residuals: np.ndarray, p: float) -> np.ndarray:
    """IRLS weights for the ``|r|^p`` objective: ``max(|r|, eps)^(p-2)``."""
    return np.maximum(np.abs(residuals), SPARSE_EPS) ** (p - 2.0)


def sparse_icp(
    src: np.ndarray,
    dst: np.ndarray,
    p: float = 0.4,
    variant: str = "point",
    dst_normals: np.ndarray | None = None,
    max_iters: int = 200,
    tol: float = 1e-6,
    irls_steps: int = 3,
    init: RigidTransform | None = None,
) -> IcpResult:
    """Robust ICP minimizing ``sum |r_i|^p`` by iteratively reweighted least squares.

    ``p = 2`` makes every weight 1 and reproduces :func:`icp`.
    """
    if not 0 < p <= 2:
        raise ValueError("p must lie in (0, 2]")
    steps = 1 if p == 2 else irls_steps
    return _registration_loop(src, dst, variant, dst_normals, max_iters, tol, lambda r: sparse_weights(r, p), steps, init)
