"""Procedural shape-mating pairs from heightfield cuts.

Parts are never meshed. Each part is an implicit region (inside the object,
or inside its hollow shell, intersected with one side of a heightfield
``z = f(x, y)``) and is sampled directly: original surface on that side,
inner offset surface for shells, and the cut interface itself, each stratum
weighted by its estimated area.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.spatial import cKDTree

from . import bvh as bvh_ops
from .bvh import Bvh
from .geometry import Pose, random_quaternion
from .mesh import DegenerateInputError, TriMesh, sample_surface

log = logging.getLogger(__name__)

FAMILIES = ("planar", "sine", "parabolic", "square", "pulse")

# (low, high, low_inclusive)
RANGES: dict[str, dict[str, tuple[float, float, bool]]] = {
    "planar": {"a": (-10, 10, True), "b": (-10, 10, True), "c": (-1, 1, True)},
    "sine": {
        "a": (-100, 100, True),
        "b": (-100, 100, True),
        "c": (-1, 1, True),
        "h": (-1, 1, True),
        "k": (-1, 1, True),
    },
    "parabolic": {"a": (-10, 10, True), "b": (-10, 10, True), "c": (-1, 1, True)},
    "square": {"t": (0, 1, False), "h": (0, 1, False)},
    "pulse": {"t": (0, 1, False), "h": (0, 1, False)},
}

N_POINTS = 1024
N_DENSE = 50_000
N_SDF = 40_000
SHELL_THICKNESS = 0.05
MIN_RATIO, MAX_RATIO = 0.25, 0.75
MAX_ATTEMPTS = 64
SDF_SIGMAS = (0.005, 0.05)
MEMBERSHIP_TOL = 1e-6


class NoValidCutError(RuntimeError):
    def __init__(self, family: str, last_ratio: float):
        super().__init__(f"no {family} cut within [{MIN_RATIO}, {MAX_RATIO}] after "
                         f"{MAX_ATTEMPTS} attempts (last ratio {last_ratio:.3f})")
        self.last_ratio = last_ratio


class ThinShellError(RuntimeError):
    pass


@dataclass(frozen=True)
class CutSpec:
    family: str
    coeffs: dict[str, float]

    def __post_init__(self):
        if self.family not in RANGES:
            raise ValueError(f"unknown cut family {self.family!r}")
        missing = set(RANGES[self.family]) - set(self.coeffs)
        if missing:
            raise ValueError(f"{self.family} cut missing coefficients {sorted(missing)}")

    def in_range(self) -> bool:
        for name, (lo, hi, lo_incl) in RANGES[self.family].items():
            v = self.coeffs[name]
            if v > hi or v < lo or (not lo_incl and v == lo):
                return False
        return True

    def height(self, x, y, lower: bool = False) -> np.ndarray:
        """Heightfield value ``f(x, y)``.

        Square and pulse are discontinuous; the formula's inclusive ``|x| <= t``
        gives the upper semicontinuous version. ``lower=True`` uses the strict
        inequality instead (the lower envelope), needed for closure tests.
        """
        c = self.coeffs
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        if self.family == "planar":
            return c["a"] * x + c["b"] * y + c["c"]
        if self.family == "sine":
            return c["h"] * np.sin(c["a"] * x + c["b"] * y + c["c"]) + c["k"]
        if self.family == "parabolic":
            return c["a"] * x**2 + c["b"] * y**2 + c["c"]
        t, h = c["t"], c["h"]
        if lower:
            box = np.abs(x) < t
            if self.family == "pulse":
                box &= np.abs(y) < t
        else:
            box = np.abs(x) <= t
            if self.family == "pulse":
                box &= np.abs(y) <= t
        return np.where(box, h, 0.0)

    def gradient(self, x, y) -> tuple[np.ndarray, np.ndarray]:
        c = self.coeffs
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        if self.family == "planar":
            return np.full_like(x, c["a"]), np.full_like(y, c["b"])
        if self.family == "sine":
            cs = c["h"] * np.cos(c["a"] * x + c["b"] * y + c["c"])
            return cs * c["a"], cs * c["b"]
        if self.family == "parabolic":
            return 2 * c["a"] * x, 2 * c["b"] * y
        return np.zeros_like(x), np.zeros_like(y)


def sample_cut_spec(family: str, rng: np.random.Generator) -> CutSpec:
    if family not in RANGES:
        raise ValueError(f"unknown cut family {family!r}; choose from {FAMILIES}")
    coeffs = {}
    for name, (lo, hi, lo_incl) in RANGES[family].items():
        u = rng.random()
        # random() is in [0, 1); flip it for an interval open at the low end
        coeffs[name] = lo + (hi - lo) * (u if lo_incl else 1.0 - u)
    return CutSpec(family, coeffs)


def heightfield_margin(spec: CutSpec, points) -> np.ndarray:
    p = np.asarray(points, dtype=np.float64)
    return p[..., 2] - spec.height(p[..., 0], p[..., 1])


def heightfield_side(spec: CutSpec, points):
    """Side label (``"A"`` strictly above the heightfield, else ``"B"``) and margin ``z - f(x, y)``."""
    g = heightfield_margin(spec, points)
    if np.ndim(g) == 0:
        return ("A" if g > 0 else "B"), float(g)
    return np.where(g > 0, "A", "B"), g


# ----------------------------------------------------------------------- regions


@dataclass(frozen=True, eq=False)
class PartRegion:
    """Implicit membership predicate of one part in object coordinates."""

    bvh: Bvh
    spec: CutSpec
    side: str
    shell: float | None = None  # wall thickness for shell parts

    def on_side(self, p: np.ndarray) -> np.ndarray:
        g = heightfield_margin(self.spec, p)
        return g > 0 if self.side == "A" else g <= 0

    def in_solid(self, p: np.ndarray) -> np.ndarray:
        """Interior of the object (or of its shell band)."""
        if self.shell is None:
            return np.asarray(bvh_ops.winding_number(self.bvh, p)) > 0.5
        s = bvh_ops.signed_distance(self.bvh, p)
        return (s <= 0) & (s >= -self.shell)

    def contains(self, p: np.ndarray) -> np.ndarray:
        p = np.asarray(p, dtype=np.float64).reshape(-1, 3)
        out = self.on_side(p)
        if out.any():
            out[out] = self.in_solid(p[out])
        return out

    def residual(self, p: np.ndarray) -> np.ndarray:
        """How far each point is from satisfying the closed membership predicate (0 if it does)."""
        p = np.asarray(p, dtype=np.float64).reshape(-1, 3)
        if self.side == "A":
            side_res = np.maximum(0.0, self.spec.height(p[:, 0], p[:, 1], lower=True) - p[:, 2])
        else:
            side_res = np.maximum(0.0, p[:, 2] - self.spec.height(p[:, 0], p[:, 1]))
        s = bvh_ops.signed_distance(self.bvh, p)
        solid_res = np.maximum(0.0, s)
        if self.shell is not None:
            solid_res = np.maximum(solid_res, -self.shell - s)
        return np.maximum(side_res, solid_res)


# -------------------------------------------------------------- interface patches


@dataclass(frozen=True)
class _Patch:
    """Parametrized piece of the cut surface over a rectangle ``[u0,u1] x [v0,v1]``."""

    bounds: tuple[float, float, float, float]
    to_xyz: Callable[[np.ndarray, np.ndarray], np.ndarray]
    jacobian: Callable[[np.ndarray, np.ndarray], np.ndarray]
    jac_max: float
    normal_a: Callable[[np.ndarray, np.ndarray], np.ndarray]  # outward normal of part A

    @property
    def domain_area(self) -> float:
        u0, u1, v0, v1 = self.bounds
        return (u1 - u0) * (v1 - v0)


def _interface_patches(spec: CutSpec, lo: np.ndarray, hi: np.ndarray) -> list[_Patch]:
    x0, y0, z0 = lo
    x1, y1, z1 = hi

    def graph_xyz(u, v):
        return np.stack([u, v, spec.height(u, v)], -1)

    def graph_jac(u, v):
        fx, fy = spec.gradient(u, v)
        return np.sqrt(1 + fx**2 + fy**2)

    def graph_normal(u, v):
        # part A lies above the graph, so its outward normal points down
        fx, fy = spec.gradient(u, v)
        n = np.stack([fx, fy, -np.ones_like(fx)], -1)
        return n / np.linalg.norm(n, axis=-1, keepdims=True)

    c = spec.coeffs
    xm, ym = max(abs(x0), abs(x1)), max(abs(y0), abs(y1))
    if spec.family == "planar":
        jmax = np.sqrt(1 + c["a"] ** 2 + c["b"] ** 2)
    elif spec.family == "sine":
        jmax = np.sqrt(1 + c["h"] ** 2 * (c["a"] ** 2 + c["b"] ** 2))
    elif spec.family == "parabolic":
        jmax = np.sqrt(1 + 4 * c["a"] ** 2 * xm**2 + 4 * c["b"] ** 2 * ym**2)
    else:
        jmax = 1.0
    patches = [_Patch((x0, x1, y0, y1), graph_xyz, graph_jac, jmax, graph_normal)]

    if spec.family in ("square", "pulse"):
        t, h = c["t"], c["h"]
        ones = lambda u, v: np.ones_like(u)  # noqa: E731
        span = (y0, y1) if spec.family == "square" else (max(y0, -t), min(y1, t))
        xspan = (max(x0, -t), min(x1, t))

        # vertical walls between z = 0 and z = h; part A sits outside the raised box
        def wall_x(sign):
            return _Patch(
                (span[0], span[1], 0.0, h),
                lambda u, v, s=sign: np.stack([np.full_like(u, s * t), u, v], -1),
                ones,
                1.0,
                lambda u, v, s=sign: np.tile([-s, 0.0, 0.0], u.shape + (1,)).astype(float),
            )

        def wall_y(sign):
            return _Patch(
                (xspan[0], xspan[1], 0.0, h),
                lambda u, v, s=sign: np.stack([u, np.full_like(u, s * t), v], -1),
                ones,
                1.0,
                lambda u, v, s=sign: np.tile([0.0, -s, 0.0], u.shape + (1,)).astype(float),
            )

        for s in (1.0, -1.0):
            if x0 <= s * t <= x1 and span[1] > span[0]:
                patches.append(wall_x(s))
        if spec.family == "pulse" and xspan[1] > xspan[0]:
            for s in (1.0, -1.0):
                if y0 <= s * t <= y1:
                    patches.append(wall_y(s))
    return [p for p in patches if p.domain_area > 0]


def _patch_uv(patch: _Patch, n: int, rng) -> tuple[np.ndarray, np.ndarray]:
    u0, u1, v0, v1 = patch.bounds
    return rng.uniform(u0, u1, n), rng.uniform(v0, v1, n)


# ---------------------------------------------------------------- volume ratio


@dataclass(frozen=True)
class VolumeRatio:
    ratio: float  # fraction of the (solid or shell) volume on side A
    stderr: float
    volume: float  # Monte Carlo volume of the whole solid / shell
    n_inside: int

    @property
    def ratio_b(self) -> float:
        return 1.0 - self.ratio


def volume_ratio(
    mesh: TriMesh,
    bvh: Bvh,
    spec: CutSpec,
    n_mc: int,
    rng: np.random.Generator,
    shell: float | None = None,
) -> VolumeRatio:
    """Monte Carlo share of the object's volume above the heightfield."""
    if n_mc < 10_000:
        raise ValueError("n_mc must be >= 10000")
    lo, hi = mesh.bounds
    p = rng.uniform(lo, hi, size=(n_mc, 3))
    if shell is None:
        inside = np.asarray(bvh_ops.winding_number(bvh, p)) > 0.5
    else:
        s = bvh_ops.signed_distance(bvh, p)
        inside = (s <= 0) & (s >= -shell)
    n_in = int(inside.sum())
    if n_in == 0:
        raise DegenerateInputError("no Monte Carlo sample fell inside the mesh")
    above = heightfield_margin(spec, p[inside]) > 0
    r = float(above.mean())
    se = float(np.sqrt(max(r * (1 - r), 1.0 / n_in) / n_in))
    vol = float(np.prod(hi - lo) * n_in / n_mc)
    return VolumeRatio(r, se, vol, n_in)


# ----------------------------------------------------------------- part samples


@dataclass
class PartSampleSet:
    """Point samples of one part, expressed in its zero-centered frame.

    ``centroid`` is the object-frame position of the frame origin; ``region``
    is only present for freshly generated parts (it is not serialized).
    """

    side: str
    points: np.ndarray  # (1024, 3)
    normals: np.ndarray  # (1024, 3)
    dense_points: np.ndarray | None = None
    dense_normals: np.ndarray | None = None
    centroid: np.ndarray = field(default_factory=lambda: np.zeros(3))
    region: PartRegion | None = None
    world_points: np.ndarray | None = None


@dataclass
class SdfSampleSet:
    points: np.ndarray  # (40000, 3) part frame
    sdf: np.ndarray  # (40000,)


@dataclass
class ShapePairRecord:
    part_a: PartSampleSet
    part_b: PartSampleSet
    sdf_a: SdfSampleSet
    sdf_b: SdfSampleSet
    pose_a: Pose  # zero-centered part frame -> object frame
    pose_b: Pose
    meta: dict

    @property
    def parts(self):
        return (self.part_a, self.part_b)

    @property
    def poses(self):
        return (self.pose_a, self.pose_b)

    def assembled(self) -> np.ndarray:
        return np.concatenate([self.pose_a.apply(self.part_a.points), self.pose_b.apply(self.part_b.points)])


def _sample_surface_on_side(mesh, region, n, rng, batch=None):
    pts, nrm = [], []
    have = 0
    batch = batch or max(4 * n, 4096)
    for _ in range(1000):
        if have >= n:
            break
        s = sample_surface(mesh, batch, rng)
        keep = region.on_side(s.positions)
        pts.append(s.positions[keep])
        nrm.append(s.normals[keep])
        have += int(keep.sum())
    else:
        raise DegenerateInputError("could not sample the surface on the requested side")
    return np.concatenate(pts)[:n], np.concatenate(nrm)[:n]


def _sample_interface(patches, weights, region, n, rng):
    """Area-uniform samples of the cut interface restricted to the part's solid."""
    if n == 0:
        return np.zeros((0, 3)), np.zeros((0, 3))
    flip = 1.0 if region.side == "A" else -1.0
    lo, hi = region.bvh.mesh.bounds
    counts = rng.multinomial(n, weights / weights.sum())
    pts, nrm = [], []
    for patch, k in zip(patches, counts):
        if k == 0:
            continue
        got_p, got_n, have = [], [], 0
        rate = 0.5
        for _ in range(10_000):
            if have >= k:
                break
            m = int(min(max(1.2 * (k - have) / rate, 512), 200_000))
            u, v = _patch_uv(patch, m, rng)
            keep = rng.random(m) * patch.jac_max <= patch.jacobian(u, v)
            u, v = u[keep], v[keep]
            xyz = patch.to_xyz(u, v)
            # points outside the bounding box cannot be inside the solid
            boxed = np.all((xyz >= lo) & (xyz <= hi), axis=1)
            u, v, xyz = u[boxed], v[boxed], xyz[boxed]
            inside = region.in_solid(xyz) if len(xyz) else np.zeros(0, bool)
            got_p.append(xyz[inside])
            got_n.append(flip * patch.normal_a(u[inside], v[inside]))
            have += int(inside.sum())
            rate = max(inside.sum() / m, 1e-4)
        else:
            raise DegenerateInputError("interface rejection sampling did not converge")
        pts.append(np.concatenate(got_p)[:k])
        nrm.append(np.concatenate(got_n)[:k])
    if not pts:
        return np.zeros((0, 3)), np.zeros((0, 3))
    return np.concatenate(pts), np.concatenate(nrm)


def _interface_areas(patches, region_a, n_mc, rng):
    """Monte Carlo area of each interface patch inside the solid (shared by both parts)."""
    areas = []
    for patch in patches:
        u, v = _patch_uv(patch, n_mc, rng)
        xyz = patch.to_xyz(u, v)
        inside = region_a.in_solid(xyz)
        areas.append(patch.domain_area * float(np.mean(patch.jacobian(u, v) * inside)))
    return np.array(areas)


def _trace_inner(bvh, points, normals, depth, max_iter=64, tol=1e-7):
    """Sphere-trace from surface points along the inward normal to the ``-depth`` level set."""
    x = points.copy()
    done = np.zeros(len(x), bool)
    alive = np.ones(len(x), bool)
    travelled = np.zeros(len(x))
    for _ in range(max_iter):
        act = np.flatnonzero(alive & ~done)
        if len(act) == 0:
            break
        s = bvh_ops.signed_distance(bvh, x[act]) + depth
        conv = np.abs(s) < tol
        done[act[conv]] = True
        step = np.where(conv, 0.0, s)
        x[act] -= normals[act] * step[:, None]
        travelled[act] += step
        # overshooting the level set or leaving the object means the wall is too thin here
        alive[act] = (step >= -tol) & (travelled[act] < 4 * depth + 0.5)
    ok = done & alive
    return x[ok], ok


def _away_from_closest(bvh, x):
    _, _, cp = bvh_ops.closest_points(bvh, x)
    d = x - cp
    return d / np.linalg.norm(d, axis=1, keepdims=True)


@dataclass
class _Strata:
    """Per-part boundary strata: surface, inner offset surface (shells), interface."""

    surface_area: float
    inner_area: float
    interface_weights: np.ndarray
    inner_pts: np.ndarray | None = None
    inner_nrm: np.ndarray | None = None


def _part_strata(mesh, region, patches, iface_areas, inner, n_mc, rng) -> _Strata:
    s = sample_surface(mesh, n_mc, rng)
    surf_area = mesh.area * float(region.on_side(s.positions).mean())
    if inner is None:
        return _Strata(surf_area, 0.0, iface_areas)
    inner_pts, inner_nrm, inner_total = inner
    keep = region.on_side(inner_pts)
    inner_area = inner_total * float(keep.mean()) if len(inner_pts) else 0.0
    return _Strata(surf_area, inner_area, iface_areas, inner_pts[keep], inner_nrm[keep])


def _sample_part(mesh, region, patches, strata: _Strata, n, rng):
    weights = np.array([strata.surface_area, strata.inner_area, strata.interface_weights.sum()])
    n_surf, n_inner, n_iface = rng.multinomial(n, weights / weights.sum())
    sp, sn = _sample_surface_on_side(mesh, region, n_surf, rng)
    parts_p, parts_n = [sp], [sn]
    if n_inner:
        idx = rng.integers(0, len(strata.inner_pts), n_inner)
        parts_p.append(strata.inner_pts[idx])
        parts_n.append(strata.inner_nrm[idx])
    ip, inn = _sample_interface(patches, strata.interface_weights, region, n_iface, rng)
    parts_p.append(ip)
    parts_n.append(inn)
    pts, nrm = np.concatenate(parts_p), np.concatenate(parts_n)
    perm = rng.permutation(len(pts))
    return pts[perm], nrm[perm]


def _inner_surface(mesh, bvh, shell, vol: VolumeRatio, n, rng):
    """Inner offset surface samples plus its estimated total area.

    The area comes from the trapezoid rule ``V_shell ≈ shell * (A_outer + A_inner) / 2``.
    Traced samples are not re-weighted by the local offset Jacobian.
    """
    s = sample_surface(mesh, n, rng)
    pts, ok = _trace_inner(bvh, s.positions, s.normals, shell)
    if len(pts) == 0:
        raise ThinShellError(f"the -{shell} level set is empty for this mesh")
    # x - closest(x) already points away from the outer wall, which is the
    # shell part's outward direction on its inner wall
    nrm = _away_from_closest(bvh, pts)
    inner_area = max(2.0 * vol.volume / shell - mesh.area, 0.0)
    return pts, nrm, inner_area


def generate_pair(
    mesh: TriMesh,
    bvh: Bvh,
    spec: CutSpec | str,
    rng: np.random.Generator,
    shape_type: str = "solid",
    n_points: int = N_POINTS,
    n_dense: int = N_DENSE,
    n_sdf: int = N_SDF,
    n_mc: int = 20_000,
    meta: dict | None = None,
) -> ShapePairRecord:
    """Cut ``mesh`` into two parts and sample them.

    If ``spec`` is a family name a cut is drawn from it; a given ``CutSpec`` is
    tried first. Cuts are redrawn until each part holds 25-75% of the volume.
    """
    if shape_type not in ("solid", "shell"):
        raise ValueError(f"shape_type must be 'solid' or 'shell', got {shape_type!r}")
    shell = SHELL_THICKNESS if shape_type == "shell" else None
    family = spec if isinstance(spec, str) else spec.family
    candidate = spec if isinstance(spec, CutSpec) else None
    if shell is not None:
        # cheap early exit: does the object have any depth beyond the wall thickness?
        probe = rng.uniform(*mesh.bounds, size=(max(n_mc, 10_000), 3))
        if not np.any(bvh_ops.signed_distance(bvh, probe) < -shell):
            raise ThinShellError(f"the -{shell} level set is empty for this mesh")

    last = float("nan")
    for attempt in range(MAX_ATTEMPTS):
        cut = candidate if (candidate is not None and attempt == 0) else sample_cut_spec(family, rng)
        vol = volume_ratio(mesh, bvh, cut, n_mc, rng, shell=shell)
        last = vol.ratio
        if MIN_RATIO <= vol.ratio <= MAX_RATIO:
            break
        log.debug("rejected %s cut with ratio %.3f", family, vol.ratio)
    else:
        raise NoValidCutError(family, last)

    lo, hi = mesh.bounds
    region_a = PartRegion(bvh, cut, "A", shell)
    region_b = PartRegion(bvh, cut, "B", shell)
    patches = _interface_patches(cut, lo, hi)
    iface = _interface_areas(patches, region_a, n_mc, rng)
    inner = _inner_surface(mesh, bvh, shell, vol, n_mc, rng) if shell is not None else None

    parts, sdfs, poses = [], [], []
    for region in (region_a, region_b):
        strata = _part_strata(mesh, region, patches, iface, inner, n_mc, rng)
        dense_p, dense_n = _sample_part(mesh, region, patches, strata, n_dense, rng)
        pick = rng.choice(len(dense_p), size=n_points, replace=False)
        world = dense_p[pick]
        centroid = world.mean(axis=0)
        part = PartSampleSet(
            side=region.side,
            points=world - centroid,
            normals=dense_n[pick],
            dense_points=dense_p - centroid,
            dense_normals=dense_n,
            centroid=centroid,
            region=region,
            world_points=world,
        )
        parts.append(part)
        sdfs.append(sdf_samples_for_part(part, n_sdf, rng))
        poses.append(Pose(np.array([1.0, 0.0, 0.0, 0.0]), centroid))

    info = dict(meta or {})
    info.update(
        cut_family=cut.family,
        coefficients=dict(cut.coeffs),
        shape_type=shape_type,
        volume_ratio=vol.ratio,
        volume_ratio_stderr=vol.stderr,
        attempts=attempt + 1,
    )
    return ShapePairRecord(parts[0], parts[1], sdfs[0], sdfs[1], poses[0], poses[1], info)


def generate_solid_pair(mesh, bvh, spec, rng, **kw) -> ShapePairRecord:
    return generate_pair(mesh, bvh, spec, rng, shape_type="solid", **kw)


def generate_shell_pair(mesh, bvh, spec, rng, **kw) -> ShapePairRecord:
    return generate_pair(mesh, bvh, spec, rng, shape_type="shell", **kw)


def make_pair(mesh: TriMesh, family: str, seed: int, shape_type="solid", bvh=None, **kw) -> ShapePairRecord:
    """Seeded entry point: the record is a pure function of ``(mesh, family, seed)``."""
    bvh = bvh or bvh_ops.build_bvh(mesh)
    meta = dict(kw.pop("meta", {}) or {})
    meta["seed"] = seed
    return generate_pair(mesh, bvh, family, np.random.default_rng(seed), shape_type=shape_type, meta=meta, **kw)


# ------------------------------------------------------------------ sdf samples


def nn_signed_distance(part: PartSampleSet, points: np.ndarray, tree: cKDTree | None = None) -> np.ndarray:
    """Signed distance approximated by the nearest dense boundary sample.

    Magnitude error is bounded by the dense-set spacing; the sign is exact
    (taken from the part's membership predicate).
    """
    if part.dense_points is None or part.region is None:
        raise ValueError("part has no dense boundary set / region")
    tree = tree or cKDTree(part.dense_points)
    p = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    dist, _ = tree.query(p)
    inside = part.region.contains(p + part.centroid)
    return np.where(inside, -dist, dist)


def sdf_samples_for_part(part: PartSampleSet, n: int, rng: np.random.Generator) -> SdfSampleSet:
    dense = part.dense_points
    idx = rng.integers(0, len(dense), n)
    sigma = np.where(np.arange(n) < n // 2, SDF_SIGMAS[0], SDF_SIGMAS[1])
    pts = dense[idx] + rng.standard_normal((n, 3)) * sigma[:, None]
    return SdfSampleSet(pts, nn_signed_distance(part, pts))


def random_pose_pair(rng: np.random.Generator) -> tuple[Pose, Pose]:
    """Two independent uniform rotations, zero translation."""
    return Pose(random_quaternion(rng), np.zeros(3)), Pose(random_quaternion(rng), np.zeros(3))
