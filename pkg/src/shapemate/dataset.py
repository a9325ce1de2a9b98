"""On-disk dataset format, split management and noise augmentation.

Layout under a dataset root::

    manifest.json
    pairs/<id>/points_a.f32le   (1024 x 3, little-endian float32, row-major)
    pairs/<id>/points_b.f32le
    pairs/<id>/normals_a.f32le
    pairs/<id>/normals_b.f32le
    pairs/<id>/sdf_a.f32le      (40000 x 4: xyz + signed distance)
    pairs/<id>/sdf_b.f32le
    pairs/<id>/meta.json        poses (quaternion wxyz + translation xyz) and metadata
"""

from __future__ import annotations

import json
import warnings
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .cutting import PartSampleSet, SdfSampleSet, ShapePairRecord
from .geometry import Pose

FORMAT_VERSION = "gsm-v1"
SPLITS = ("train", "val", "test")
DTYPE = np.dtype("<f4")


class DatasetError(RuntimeError):
    pass


@dataclass
class PairEntry:
    id: str
    category: str
    cut_family: str
    shape_type: str
    path: str
    seed: int
    mesh_id: str = ""


@dataclass
class DatasetManifest:
    version: str = FORMAT_VERSION
    pairs: list[PairEntry] = field(default_factory=list)
    splits: dict[str, str] = field(default_factory=dict)

    def ids(self) -> list[str]:
        return [p.id for p in self.pairs]

    def entry(self, pair_id: str) -> PairEntry:
        for p in self.pairs:
            if p.id == pair_id:
                return p
        raise KeyError(pair_id)

    def split_ids(self, split: str) -> list[str]:
        if not self.splits:
            raise DatasetError("manifest has no split assignment; run make_splits first")
        return [p.id for p in self.pairs if self.splits.get(p.id) == split]

    def add(self, entry: PairEntry) -> None:
        if entry.id in {p.id for p in self.pairs}:
            raise DatasetError(f"duplicate pair id {entry.id}")
        self.pairs.append(entry)

    def to_json(self) -> dict:
        return {"version": self.version, "pairs": [asdict(p) for p in self.pairs], "splits": self.splits}

    @classmethod
    def from_json(cls, data: dict) -> "DatasetManifest":
        if data.get("version") != FORMAT_VERSION:
            raise DatasetError(f"unsupported dataset version {data.get('version')!r}")
        m = cls(data["version"], [PairEntry(**p) for p in data["pairs"]], dict(data.get("splits", {})))
        ids = m.ids()
        if len(set(ids)) != len(ids):
            raise DatasetError("manifest has duplicate pair ids")
        return m


def load_manifest(root, check_paths: bool = True) -> DatasetManifest:
    root = Path(root)
    m = DatasetManifest.from_json(json.loads((root / "manifest.json").read_text()))
    if check_paths:
        missing = [p.path for p in m.pairs if not (root / p.path).is_dir()]
        if missing:
            raise DatasetError(f"{len(missing)} pair directories missing, e.g. {missing[0]}")
    return m


def save_manifest(manifest: DatasetManifest, root) -> None:
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    tmp = root / "manifest.json.tmp"
    tmp.write_text(json.dumps(manifest.to_json(), indent=1))
    tmp.replace(root / "manifest.json")


# ------------------------------------------------------------------ pair files


def _write_array(path: Path, arr: np.ndarray) -> None:
    arr = np.asarray(arr)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"refusing to serialize non-finite values to {path.name}")
    path.write_bytes(np.ascontiguousarray(arr, dtype=DTYPE).tobytes())


def _read_array(path: Path, cols: int) -> np.ndarray:
    data = np.frombuffer(path.read_bytes(), dtype=DTYPE)
    if data.size % cols:
        raise DatasetError(f"{path}: size {data.size} not a multiple of {cols}")
    return data.reshape(-1, cols).copy()


def _pose_json(p: Pose) -> dict:
    return {"q": [float(x) for x in p.q], "t": [float(x) for x in p.t]}


def _json_safe(x):
    if isinstance(x, dict):
        return {k: _json_safe(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_json_safe(v) for v in x]
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, float) and not np.isfinite(x):
        raise ValueError("refusing to serialize non-finite metadata")
    return x


def pair_id_for(meta: dict) -> str:
    return "{}-{}-{}-{}-{:06d}".format(
        meta.get("category", "object"),
        meta.get("mesh_id", "mesh"),
        meta.get("cut_family", "cut"),
        meta.get("shape_type", "solid"),
        int(meta.get("seed", 0)),
    )


def write_pair(record: ShapePairRecord, root, pair_id: str | None = None) -> str:
    pair_id = pair_id or record.meta.get("id") or pair_id_for(record.meta)
    d = Path(root) / "pairs" / pair_id
    d.mkdir(parents=True, exist_ok=True)
    for tag, part, sdf in (("a", record.part_a, record.sdf_a), ("b", record.part_b, record.sdf_b)):
        _write_array(d / f"points_{tag}.f32le", part.points)
        _write_array(d / f"normals_{tag}.f32le", part.normals)
        _write_array(d / f"sdf_{tag}.f32le", np.column_stack([sdf.points, sdf.sdf]))
    meta = {
        "id": pair_id,
        "pose_a": _pose_json(record.pose_a),
        "pose_b": _pose_json(record.pose_b),
        "meta": _json_safe(record.meta),
    }
    (d / "meta.json").write_text(json.dumps(meta, indent=1))
    return pair_id


def _read_pose(d: dict) -> Pose:
    q = np.asarray(d["q"], dtype=np.float64)
    if abs(np.linalg.norm(q) - 1.0) > 1e-9:
        raise DatasetError(f"stored quaternion is not unit norm: {q}")
    return Pose(q, d["t"])


def read_pair(root, pair_id: str) -> ShapePairRecord:
    d = Path(root) / "pairs" / pair_id
    info = json.loads((d / "meta.json").read_text())
    parts, sdfs = [], []
    for tag in ("a", "b"):
        pose = info[f"pose_{tag}"]
        parts.append(
            PartSampleSet(
                side=tag.upper(),
                points=_read_array(d / f"points_{tag}.f32le", 3),
                normals=_read_array(d / f"normals_{tag}.f32le", 3),
                centroid=np.asarray(pose["t"], dtype=np.float64),
            )
        )
        s = _read_array(d / f"sdf_{tag}.f32le", 4)
        sdfs.append(SdfSampleSet(s[:, :3].copy(), s[:, 3].copy()))
    return ShapePairRecord(
        parts[0], parts[1], sdfs[0], sdfs[1], _read_pose(info["pose_a"]), _read_pose(info["pose_b"]), info["meta"]
    )


def entry_for(record: ShapePairRecord, pair_id: str) -> PairEntry:
    m = record.meta
    return PairEntry(
        id=pair_id,
        category=str(m.get("category", "object")),
        cut_family=str(m.get("cut_family", "")),
        shape_type=str(m.get("shape_type", "solid")),
        path=f"pairs/{pair_id}",
        seed=int(m.get("seed", 0)),
        mesh_id=str(m.get("mesh_id", "")),
    )


# ---------------------------------------------------------------------- splits


@dataclass(frozen=True)
class SplitSpec:
    fractions: tuple[float, float, float] = (0.8, 0.1, 0.1)
    seed: int = 0
    mode: str = "random"  # random | unseen-category | unseen-cut
    holdout: tuple[str, ...] = ()

    def __post_init__(self):
        if abs(sum(self.fractions) - 1.0) > 1e-9 or min(self.fractions) < 0:
            raise ValueError(f"split fractions must be nonnegative and sum to 1, got {self.fractions}")
        if self.mode not in ("random", "unseen-category", "unseen-cut"):
            raise ValueError(f"unknown split mode {self.mode!r}")

    @property
    def holdout_values(self) -> tuple[str, ...]:
        if self.holdout:
            return self.holdout
        return {"unseen-category": ("box", "bag"), "unseen-cut": ("parabolic",)}.get(self.mode, ())


def _quota(n: int, fractions) -> list[int]:
    counts = [int(round(f * n)) for f in fractions[:-1]]
    return counts + [n - sum(counts)]


def _stratified_order(entries: list[PairEntry], rng: np.random.Generator) -> list[PairEntry]:
    """Order entries so any prefix holds roughly the same share of every stratum.

    Each entry gets key ``(rank_in_stratum + jitter) / stratum_size``; sorting by
    that key interleaves strata proportionally.
    """
    strata = defaultdict(list)
    for e in entries:
        strata[(e.category, e.cut_family)].append(e)
    keyed = []
    for key in sorted(strata):
        group = strata[key]
        perm = rng.permutation(len(group))
        jitter = rng.random(len(group))
        for rank, (i, u) in enumerate(zip(perm, jitter)):
            keyed.append(((rank + u) / len(group), group[i].id, group[i]))
    keyed.sort(key=lambda k: (k[0], k[1]))
    return [k[2] for k in keyed]


def make_splits(manifest: DatasetManifest, spec: SplitSpec = SplitSpec()) -> DatasetManifest:
    """Assign every pair to train/val/test; deterministic in ``(ids, spec)``."""
    if len(manifest.pairs) < 10:
        raise ValueError("need at least 10 pairs to split")
    rng = np.random.default_rng(spec.seed)
    # canonical order so the assignment does not depend on manifest ordering
    entries = sorted(manifest.pairs, key=lambda e: e.id)
    assign: dict[str, str] = {}

    if spec.mode == "random":
        ordered = _stratified_order(entries, rng)
        n_train, n_val, _ = _quota(len(ordered), spec.fractions)
        for i, e in enumerate(ordered):
            assign[e.id] = "train" if i < n_train else "val" if i < n_train + n_val else "test"
    else:
        attr = "category" if spec.mode == "unseen-category" else "cut_family"
        held = set(spec.holdout_values)
        test = [e for e in entries if getattr(e, attr) in held]
        rest = [e for e in entries if getattr(e, attr) not in held]
        if not test:
            warnings.warn(f"{spec.mode}: no pairs match holdout {sorted(held)}; test split is empty")
        for e in test:
            assign[e.id] = "test"
        ordered = _stratified_order(rest, rng)
        tr, va = spec.fractions[0], spec.fractions[1]
        n_train = int(round(len(ordered) * tr / (tr + va))) if tr + va > 0 else 0
        for i, e in enumerate(ordered):
            assign[e.id] = "train" if i < n_train else "val"

    for split in SPLITS:
        if not any(v == split for v in assign.values()):
            warnings.warn(f"split {split!r} is empty")
    return DatasetManifest(manifest.version, list(manifest.pairs), {e.id: assign[e.id] for e in manifest.pairs})


# ------------------------------------------------------------------ statistics


def dataset_stats(manifest: DatasetManifest) -> dict:
    """Pair counts per category x cut family x shape type, plus split sizes."""
    table: dict = defaultdict(Counter)
    for e in manifest.pairs:
        table[e.category][(e.shape_type, e.cut_family)] += 1
    out = {
        "n_pairs": len(manifest.pairs),
        "per_category": {c: {f"{s}/{f}": n for (s, f), n in sorted(cnt.items())} for c, cnt in sorted(table.items())},
        "per_family": dict(Counter(e.cut_family for e in manifest.pairs)),
        "per_shape_type": dict(Counter(e.shape_type for e in manifest.pairs)),
    }
    if manifest.splits:
        out["splits"] = dict(Counter(manifest.splits.values()))
    return out


# ------------------------------------------------------------------------ noise


def add_noise(cloud: np.ndarray, sigma: float, rng: np.random.Generator) -> np.ndarray:
    """Independent isotropic Gaussian jitter per point."""
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    cloud = np.asarray(cloud, dtype=np.float64)
    if sigma == 0:
        return cloud.copy()
    return cloud + rng.normal(0.0, sigma, size=cloud.shape)
