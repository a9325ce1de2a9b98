"""Shape-mating network: point encoder, attention correlation, pose regressor,
assembly discriminator, implicit SDF head, and the training losses.

All tensors are batched with the batch axis first. Both parts go through
exactly the same code path (shared weights, separate normalization batches),
so swapping the inputs swaps the outputs bit for bit.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .autodiff import tensor as T
from .autodiff.nn import BatchNorm, LayerNorm, Linear, Module, freeze_stats
from .autodiff.tensor import Tensor


@dataclass(frozen=True)
class ModelConfig:
    k: int = 20
    channels: tuple[int, ...] = (64, 64, 128, 256, 1024)
    regressor_hidden: int = 256
    sdf_hidden: int = 256
    slope: float = 0.2

    def __post_init__(self):
        if self.k < 1 or not self.channels or min(self.channels) < 1:
            raise ValueError("k and channel widths must be positive")

    @property
    def d(self) -> int:
        return self.channels[-1]

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, data: dict) -> "ModelConfig":
        data = dict(data)
        if "channels" in data:
            data["channels"] = tuple(data["channels"])
        return cls(**data)


FULL = ModelConfig()
REDUCED = ModelConfig(channels=(16, 16, 32, 64, 64), regressor_hidden=64, sdf_hidden=64)
TINY = ModelConfig(k=8, channels=(8, 8, 16, 16, 16), regressor_hidden=16, sdf_hidden=16)
PRESETS = {"full": FULL, "reduced": REDUCED, "tiny": TINY}


# ------------------------------------------------------------------ neighbors


def knn_graph(points: np.ndarray, k: int = 20) -> np.ndarray:
    """Indices of the ``k`` nearest other points, nearest first.

    Accepts (N, 3) or (B, N, 3). Equal distances are ordered by index, so the
    result is fully deterministic.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 3:
        return np.stack([knn_graph(p, k) for p in pts])
    n = len(pts)
    if n <= k:
        raise ValueError(f"knn_graph needs more than k={k} points, got {n}")
    sq = (pts**2).sum(1)
    d = sq[:, None] + sq[None, :] - 2.0 * pts @ pts.T
    np.fill_diagonal(d, np.inf)
    cand = np.argpartition(d, k - 1, axis=1)[:, :k]
    kth = np.take_along_axis(d, cand, 1).max(1)
    # rows with a tie straddling the k-th slot need the exact ordered selection
    ambiguous = np.flatnonzero((d <= kth[:, None]).sum(1) > k)
    for i in ambiguous:
        cand[i] = np.lexsort((np.arange(n), d[i]))[:k]
    cd = np.take_along_axis(d, cand, 1)
    order = np.lexsort((cand, cd), axis=1)
    return np.take_along_axis(cand, order, 1)


# ------------------------------------------------------------------- encoder


class EdgeConv(Module):
    """Edge features ``[x_i, x_j - x_i]`` -> shared linear -> BN -> LeakyReLU -> max over neighbors."""

    def __init__(self, c_in: int, c_out: int, rng: np.random.Generator, slope: float = 0.2):
        self.weight = Tensor(rng.uniform(-1, 1, (2 * c_in, c_out)) / np.sqrt(2 * c_in), requires_grad=True)
        self.bn = BatchNorm(c_out)
        self.c_in, self.slope = c_in, slope

    def __call__(self, x: Tensor, idx: np.ndarray) -> Tensor:
        c = self.c_in
        w_self = T.index_select(self.weight, slice(0, c))
        w_edge = T.index_select(self.weight, slice(c, 2 * c))
        # [x_i, x_j - x_i] W == x_i (W_self - W_edge) + x_j W_edge
        center = T.matmul(x, T.sub(w_self, w_edge))
        neigh = T.gather(T.matmul(x, w_edge), idx)
        b, n, co = center.shape
        edges = T.add(T.reshape(center, (b, n, 1, co)), neigh)
        return T.max_pool(T.leaky_relu(self.bn(edges), self.slope), axis=2)


class PointEncoder(Module):
    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        widths = (3,) + tuple(cfg.channels)
        self.layers = [EdgeConv(a, b, rng, cfg.slope) for a, b in zip(widths[:-1], widths[1:])]
        self.k = cfg.k

    def __call__(self, points: np.ndarray | Tensor, idx: np.ndarray | None = None) -> Tensor:
        """(B, N, 3) coordinates -> (B, N, d) features; one graph from the input coordinates."""
        x = T.as_tensor(points)
        if idx is None:
            idx = knn_graph(x.data, self.k)
        for layer in self.layers:
            x = layer(x, idx)
        return x


# --------------------------------------------------------------- correlation


class Projection(Module):
    """Linear -> ReLU -> LayerNorm."""

    def __init__(self, d: int, rng: np.random.Generator):
        self.linear = Linear(d, d, rng)
        self.norm = LayerNorm(d)

    def __call__(self, x: Tensor) -> Tensor:
        return self.norm(T.relu(self.linear(x)))


def attention(q: Tensor, k: Tensor, v: Tensor) -> tuple[Tensor, Tensor]:
    """Single-head scaled dot-product attention; returns (output, weights)."""
    if q.shape[-1] != k.shape[-1] or k.shape[-2] != v.shape[-2]:
        raise T.ShapeError(f"attention: q {q.shape}, k {k.shape}, v {v.shape}")
    scores = T.mul(T.matmul(q, T.swapaxes(k, -1, -2)), 1.0 / np.sqrt(q.shape[-1]))
    w = T.row_softmax(scores)
    return T.matmul(w, v), w


class Correlator(Module):
    """Self-attention within each part, then cross-attention between parts."""

    def __init__(self, d: int, rng: np.random.Generator):
        self.q_enc, self.k_enc, self.v_enc = (Projection(d, rng) for _ in range(3))
        self.q_dec, self.k_dec, self.v_dec = (Projection(d, rng) for _ in range(3))
        self.d = d

    def encode(self, f: Tensor) -> Tensor:
        return attention(self.q_enc(f), self.k_enc(f), self.v_enc(f))[0]

    def decode(self, s_self: Tensor, s_other: Tensor) -> Tensor:
        return attention(self.q_dec(s_self), self.k_dec(s_other), self.v_dec(s_other))[0]

    def __call__(self, f_a: Tensor, f_b: Tensor) -> tuple[Tensor, Tensor]:
        if f_a.shape[-1] != self.d or f_b.shape[-1] != self.d:
            raise T.ShapeError(f"correlator expects width {self.d}, got {f_a.shape} and {f_b.shape}")
        s_a, s_b = self.encode(f_a), self.encode(f_b)
        return self.decode(s_a, s_b), self.decode(s_b, s_a)


# ------------------------------------------------------------------- heads


class PoseRegressor(Module):
    def __init__(self, d: int, hidden: int, rng: np.random.Generator, slope: float = 0.2):
        self.fc = Linear(2 * d, hidden, rng)
        self.bn = BatchNorm(hidden)
        self.quat = Linear(hidden, 4, rng)
        self.trans = Linear(hidden, 3, rng)
        self.slope = slope

    def __call__(self, f_global: Tensor, h_global: Tensor) -> tuple[Tensor, Tensor]:
        """(B, d), (B, d) -> unit quaternions (B, 4) and translations (B, 3)."""
        z = T.leaky_relu(self.bn(self.fc(T.concat([f_global, h_global], -1))), self.slope)
        return T.l2_normalize(self.quat(z), -1), self.trans(z)


class Discriminator(Module):
    """Scores an assembled cloud in (0, 1); higher means more plausible."""

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        self.encoder = PointEncoder(cfg, rng)
        self.out = Linear(cfg.d, 1, rng)

    def __call__(self, cloud: Tensor | np.ndarray, idx: np.ndarray | None = None) -> Tensor:
        """``idx`` overrides the kNN graph, e.g. to hold it fixed across finite differences."""
        cloud = T.as_tensor(cloud)
        feats = T.max_pool(self.encoder(cloud, idx), axis=1)
        return T.reshape(T.sigmoid(self.out(feats)), (cloud.shape[0],))


class SdfHead(Module):
    """Eight fully connected layers; the input is re-injected before layer five."""

    def __init__(self, d: int, hidden: int, rng: np.random.Generator):
        n_in = d + 3
        widths_in = [n_in, hidden, hidden, hidden, hidden + n_in, hidden, hidden]
        self.layers = [Linear(w, hidden, rng) for w in widths_in]
        self.norms = [BatchNorm(hidden) for _ in widths_in]
        self.out = Linear(hidden, 1, rng)

    def __call__(self, f_global: Tensor, queries: np.ndarray | Tensor) -> Tensor:
        """(B, d) shape codes, (B, Q, 3) query points -> (B, Q) signed distances."""
        q = T.as_tensor(queries)
        b, nq, _ = q.shape
        code = T.mul(T.reshape(f_global, (b, 1, f_global.shape[-1])), np.ones((1, nq, 1)))
        x0 = T.concat([code, q], -1)
        x = x0
        for i, (lin, bn) in enumerate(zip(self.layers, self.norms)):
            if i == 4:
                x = T.concat([x, x0], -1)
            x = T.relu(bn(lin(x)))
        return T.reshape(self.out(x), (b, nq))


# ------------------------------------------------------------------ geometry


def quat_to_rotmat(q: Tensor) -> Tensor:
    """Differentiable (B, 4) unit quaternions (w, x, y, z) -> (B, 3, 3) rotations."""
    b = q.shape[0]
    w, x, y, z = (q[:, i] for i in range(4))

    def two(a, c):
        return T.mul(T.mul(a, c), 2.0)

    one = np.ones(b)
    entries = [
        T.sub(one, T.add(two(y, y), two(z, z))), T.sub(two(x, y), two(w, z)), T.add(two(x, z), two(w, y)),
        T.add(two(x, y), two(w, z)), T.sub(one, T.add(two(x, x), two(z, z))), T.sub(two(y, z), two(w, x)),
        T.sub(two(x, z), two(w, y)), T.add(two(y, z), two(w, x)), T.sub(one, T.add(two(x, x), two(y, y))),
    ]
    return T.reshape(T.concat([T.reshape(e, (b, 1)) for e in entries], 1), (b, 3, 3))


def transform_points(points: Tensor | np.ndarray, rot: Tensor, trans: Tensor) -> Tensor:
    """``R p + t`` for (B, N, 3) points, (B, 3, 3) rotations, (B, 3) translations."""
    p = T.as_tensor(points)
    moved = T.matmul(p, T.swapaxes(rot, -1, -2))
    return T.add(moved, T.reshape(trans, (trans.shape[0], 1, 3)))


def assemble(points_a, points_b, rot_a: Tensor, trans_a: Tensor, rot_b: Tensor, trans_b: Tensor) -> Tensor:
    """Union of both transformed parts, part A first."""
    return T.concat([transform_points(points_a, rot_a, trans_a), transform_points(points_b, rot_b, trans_b)], 1)


# -------------------------------------------------------------------- model


@dataclass
class PartPrediction:
    quat: Tensor
    rot: Tensor
    trans: Tensor
    global_feat: Tensor


@dataclass
class MatingPrediction:
    part_a: PartPrediction
    part_b: PartPrediction
    assembled: Tensor
    sdf_a: Tensor | None = None
    sdf_b: Tensor | None = None
    extras: dict = field(default_factory=dict)


class MatingNet(Module):
    """Generator: encoder + correlator + regressor + SDF head."""

    def __init__(self, cfg: ModelConfig = REDUCED, seed: int = 0):
        rng = np.random.default_rng(seed)
        self.cfg = cfg
        self.encoder = PointEncoder(cfg, rng)
        self.correlator = Correlator(cfg.d, rng)
        self.regressor = PoseRegressor(cfg.d, cfg.regressor_hidden, rng, cfg.slope)
        self.sdf = SdfHead(cfg.d, cfg.sdf_hidden, rng)

    def _part(self, f: Tensor, h: Tensor) -> PartPrediction:
        f_g = T.max_pool(f, axis=1)
        h_g = T.max_pool(h, axis=1)
        q, t = self.regressor(f_g, h_g)
        return PartPrediction(q, quat_to_rotmat(q), t, f_g)

    def __call__(self, points_a, points_b, queries_a=None, queries_b=None) -> MatingPrediction:
        pa, pb = np.asarray(points_a, dtype=np.float64), np.asarray(points_b, dtype=np.float64)
        if pa.ndim == 2:
            pa, pb = pa[None], pb[None]
        f_a, f_b = self.encoder(pa), self.encoder(pb)
        h_a, h_b = self.correlator(f_a, f_b)
        a, b = self._part(f_a, h_a), self._part(f_b, h_b)
        pred = MatingPrediction(a, b, assemble(pa, pb, a.rot, a.trans, b.rot, b.trans))
        if queries_a is not None:
            pred.sdf_a = self.sdf(a.global_feat, queries_a)
            pred.sdf_b = self.sdf(b.global_feat, queries_b)
        return pred


# ------------------------------------------------------------------- losses


def loss_pose(pred: MatingPrediction, rot_gt: tuple[np.ndarray, np.ndarray], trans_gt: tuple[np.ndarray, np.ndarray]) -> Tensor:
    """Batch mean of ``sum_k ||R_k^T R_k^gt - I||_F + ||T_k - T_k^gt||_2``."""
    total = None
    for part, r_gt, t_gt in zip((pred.part_a, pred.part_b), rot_gt, trans_gt):
        rel = T.sub(T.matmul(T.swapaxes(part.rot, -1, -2), np.asarray(r_gt)), np.eye(3))
        term = T.add(T.norm(rel, "fro", axis=(-2, -1)), T.norm(T.sub(part.trans, np.asarray(t_gt)), "l2", axis=-1))
        total = term if total is None else T.add(total, term)
    return T.mean(total)


def loss_generator(pred_score: Tensor) -> Tensor:
    return T.mean(T.tabs(T.sub(pred_score, 1.0)))


def loss_adversarial(pred_score: Tensor, gt_score: Tensor) -> Tensor:
    return T.add(T.mean(T.tabs(pred_score)), T.mean(T.tabs(T.sub(gt_score, 1.0))))


def loss_sdf(pred_a: Tensor, gt_a: np.ndarray, pred_b: Tensor, gt_b: np.ndarray) -> Tensor:
    return T.add(T.mean(T.tabs(T.sub(pred_a, gt_a))), T.mean(T.tabs(T.sub(pred_b, gt_b))))


__all__ = [
    "ModelConfig", "FULL", "REDUCED", "TINY", "PRESETS", "knn_graph", "PointEncoder", "Correlator", "attention",
    "PoseRegressor", "Discriminator", "SdfHead", "MatingNet", "MatingPrediction", "quat_to_rotmat", "assemble",
    "transform_points", "loss_pose", "loss_generator", "loss_adversarial", "loss_sdf", "freeze_stats",
]
