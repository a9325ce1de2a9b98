"""Bounding-volume hierarchy over mesh faces.

Supports two hierarchical queries, both vectorized over batches of points:

* generalized winding number, exact per-triangle solid angles in the near
  field and a first-order dipole expansion per node in the far field;
* exact closest-point distance with box-distance pruning.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .mesh import TriMesh

FOUR_PI = 4.0 * np.pi


@dataclass(frozen=True, eq=False)
class Bvh:
    mesh: TriMesh
    lo: np.ndarray  # (nodes, 3) box min
    hi: np.ndarray  # (nodes, 3) box max
    left: np.ndarray  # child index, -1 at leaves
    right: np.ndarray
    start: np.ndarray  # leaf range into `order`
    count: np.ndarray
    order: np.ndarray  # face ids grouped by leaf
    dipole_center: np.ndarray  # area-weighted centroid per node
    dipole_normal: np.ndarray  # sum of area * unit normal per node
    radius: np.ndarray  # max distance from center to any node vertex
    beta: float
    _centroid_tree: cKDTree

    @property
    def n_nodes(self) -> int:
        return len(self.lo)

    def is_leaf(self, node: int) -> bool:
        return self.left[node] < 0

    def leaf_faces(self, node: int) -> np.ndarray:
        s = self.start[node]
        return self.order[s : s + self.count[node]]


def build_bvh(mesh: TriMesh, leaf_size: int = 8, beta: float = 2.0) -> Bvh:
    tris = mesh.triangles
    cent = tris.mean(axis=1)
    tmin, tmax = tris.min(axis=1), tris.max(axis=1)
    area_vec = 0.5 * np.cross(tris[:, 1] - tris[:, 0], tris[:, 2] - tris[:, 0])
    areas = np.linalg.norm(area_vec, axis=1)

    lo, hi, left, right, start, count = [], [], [], [], [], []
    centers, normals, radii = [], [], []
    order: list[np.ndarray] = []
    n_ordered = 0

    # iterative build; children are allocated before recursing so indices are stable
    def new_node(faces):
        lo.append(tmin[faces].min(0))
        hi.append(tmax[faces].max(0))
        a = areas[faces]
        c = (cent[faces] * a[:, None]).sum(0) / a.sum()
        centers.append(c)
        normals.append(area_vec[faces].sum(0))
        radii.append(np.sqrt(((tris[faces] - c) ** 2).sum(-1).max()))
        left.append(-1)
        right.append(-1)
        start.append(0)
        count.append(0)
        return len(lo) - 1

    stack = [(new_node(np.arange(len(tris))), np.arange(len(tris)))]
    while stack:
        node, faces = stack.pop()
        if len(faces) <= leaf_size:
            start[node] = n_ordered
            count[node] = len(faces)
            order.append(faces)
            n_ordered += len(faces)
            continue
        c = cent[faces]
        axis = int(np.argmax(c.max(0) - c.min(0)))
        # stable sort keeps the build deterministic on ties
        srt = faces[np.argsort(c[:, axis], kind="stable")]
        mid = len(srt) // 2
        a, b = srt[:mid], srt[mid:]
        la, lb = new_node(a), new_node(b)
        left[node], right[node] = la, lb
        stack.append((lb, b))
        stack.append((la, a))

    return Bvh(
        mesh=mesh,
        lo=np.array(lo),
        hi=np.array(hi),
        left=np.array(left),
        right=np.array(right),
        start=np.array(start),
        count=np.array(count),
        order=np.concatenate(order),
        dipole_center=np.array(centers),
        dipole_normal=np.array(normals),
        radius=np.array(radii),
        beta=beta,
        _centroid_tree=cKDTree(cent),
    )


# ------------------------------------------------------------------ primitives


def _dot(a, b):
    return np.einsum("...k,...k->...", a, b)


def triangle_solid_angle(p: np.ndarray, a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Signed solid angle of triangle ``abc`` seen from ``p``; inputs (..., 3) broadcast together.

    Van Oosterom-Strackee formula.
    """
    ax, ay, az = (a - p).T if np.ndim(a - p) == 2 else np.moveaxis(a - p, -1, 0)
    bx, by, bz = (b - p).T if np.ndim(b - p) == 2 else np.moveaxis(b - p, -1, 0)
    cx, cy, cz = (c - p).T if np.ndim(c - p) == 2 else np.moveaxis(c - p, -1, 0)
    la = np.sqrt(ax * ax + ay * ay + az * az)
    lb = np.sqrt(bx * bx + by * by + bz * bz)
    lc = np.sqrt(cx * cx + cy * cy + cz * cz)
    det = ax * (by * cz - bz * cy) + ay * (bz * cx - bx * cz) + az * (bx * cy - by * cx)
    ab = ax * bx + ay * by + az * bz
    ac = ax * cx + ay * cy + az * cz
    bc = bx * cx + by * cy + bz * cz
    return 2.0 * np.arctan2(det, la * lb * lc + ab * lc + ac * lb + bc * la)


def closest_point_on_triangle(p: np.ndarray, a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Closest point on triangle ``abc`` to ``p``; all inputs (..., 3), broadcast together.

    Voronoi-region classification following Ericson, Real-Time Collision Detection 5.1.5.
    """
    p, a, b, c = np.broadcast_arrays(p, a, b, c)
    ab, ac, ap = b - a, c - a, p - a
    d1, d2 = _dot(ab, ap), _dot(ac, ap)
    bp = p - b
    d3, d4 = _dot(ab, bp), _dot(ac, bp)
    cp = p - c
    d5, d6 = _dot(ab, cp), _dot(ac, cp)
    vc = d1 * d4 - d3 * d2
    vb = d5 * d2 - d1 * d6
    va = d3 * d6 - d5 * d4

    with np.errstate(divide="ignore", invalid="ignore"):
        v_ab = d1 / (d1 - d3)
        w_ac = d2 / (d2 - d6)
        w_bc = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        denom = 1.0 / (va + vb + vc)
        v_in, w_in = vb * denom, vc * denom

    conds = [
        (d1 <= 0) & (d2 <= 0),
        (d3 >= 0) & (d4 <= d3),
        (vc <= 0) & (d1 >= 0) & (d3 <= 0),
        (d6 >= 0) & (d5 <= d6),
        (vb <= 0) & (d2 >= 0) & (d6 <= 0),
        (va <= 0) & ((d4 - d3) >= 0) & ((d5 - d6) >= 0),
    ]
    choices = [
        a,
        b,
        a + v_ab[..., None] * ab,
        c,
        a + w_ac[..., None] * ac,
        b + w_bc[..., None] * (c - b),
    ]
    out = a + v_in[..., None] * ab + w_in[..., None] * ac
    # apply in reverse so the first matching region wins
    for cond, choice in zip(reversed(conds), reversed(choices)):
        out = np.where(cond[..., None], choice, out)
    return out


def _as_points(points) -> tuple[np.ndarray, bool]:
    p = np.asarray(points, dtype=np.float64)
    single = p.ndim == 1
    return p.reshape(-1, 3), single


def _leaf_face_pairs(bvh: Bvh, pi: np.ndarray, ni: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Expand (point, leaf) pairs into (point, face) pairs."""
    counts = bvh.count[ni]
    total = int(counts.sum())
    first = np.repeat(bvh.start[ni], counts)
    offset = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
    return np.repeat(pi, counts), bvh.order[first + offset]


def _children(bvh: Bvh, pi: np.ndarray, ni: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return np.repeat(pi, 2), np.stack([bvh.left[ni], bvh.right[ni]], 1).ravel()


_CHUNK = 1 << 18
_POINT_BATCH = 8192

# --------------------------------------------------------------------- queries


def winding_number(bvh: Bvh, points) -> np.ndarray | float:
    """Generalized winding number of the mesh at ``points`` (≈1 inside, ≈0 outside)."""
    p, single = _as_points(points)
    w = np.concatenate([_winding_batch(bvh, p[s : s + _POINT_BATCH]) for s in range(0, len(p), _POINT_BATCH)]) \
        if len(p) else np.zeros(0)
    return float(w[0]) if single else w


def _winding_batch(bvh: Bvh, p: np.ndarray) -> np.ndarray:
    tris = bvh.mesh.triangles
    w = np.zeros(len(p))
    # breadth-first over (point, node) pairs, one vectorized step per tree level
    pi, ni = np.arange(len(p)), np.zeros(len(p), np.int64)
    leaf_p, leaf_n = [], []
    while len(pi):
        leaf = bvh.left[ni] < 0
        leaf_p.append(pi[leaf])
        leaf_n.append(ni[leaf])
        pi, ni = pi[~leaf], ni[~leaf]
        d = bvh.dipole_center[ni] - p[pi]
        r = np.sqrt(_dot(d, d))
        far = r > bvh.beta * bvh.radius[ni]
        contrib = _dot(d[far], bvh.dipole_normal[ni[far]]) / (FOUR_PI * r[far] ** 3)
        w += np.bincount(pi[far], weights=contrib, minlength=len(p))
        pi, ni = _children(bvh, pi[~far], ni[~far])

    fp, ff = _leaf_face_pairs(bvh, np.concatenate(leaf_p), np.concatenate(leaf_n))
    for s in range(0, len(fp), _CHUNK):
        ip, jf = fp[s : s + _CHUNK], ff[s : s + _CHUNK]
        t = tris[jf]
        om = triangle_solid_angle(p[ip], t[:, 0], t[:, 1], t[:, 2])
        w += np.bincount(ip, weights=om, minlength=len(p)) / FOUR_PI
    return w


def _box_dist2(lo, hi, p):
    d = np.maximum(np.maximum(lo - p, 0.0), p - hi)
    return _dot(d, d)


def closest_points(bvh: Bvh, points) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Exact nearest surface point for each query.

    Returns ``(distance, face, closest)``.
    """
    p, _ = _as_points(points)
    out = [_closest_batch(bvh, p[s : s + _POINT_BATCH]) for s in range(0, len(p), _POINT_BATCH)]
    if not out:
        return np.zeros(0), np.zeros(0, np.int64), np.zeros((0, 3))
    return tuple(np.concatenate(x) for x in zip(*out))


def _closest_batch(bvh: Bvh, p: np.ndarray):
    tris = bvh.mesh.triangles
    # the face with the nearest centroid gives a valid upper bound for pruning
    _, seed = bvh._centroid_tree.query(p)
    seed = np.asarray(seed, dtype=np.int64)
    best_pt = closest_point_on_triangle(p, tris[seed, 0], tris[seed, 1], tris[seed, 2])
    diff = best_pt - p
    best = _dot(diff, diff)
    best_face = seed.copy()

    def update(ip, jf):
        t = tris[jf]
        cp = closest_point_on_triangle(p[ip], t[:, 0], t[:, 1], t[:, 2])
        diff = cp - p[ip]
        d2 = _dot(diff, diff)
        # per-point minimum: sort by (point, distance) and keep the first of each run
        order = np.lexsort((d2, ip))
        ip_s = ip[order]
        first = np.ones(len(ip_s), bool)
        first[1:] = ip_s[1:] != ip_s[:-1]
        sel = order[first]
        q = ip[sel]
        better = d2[sel] < best[q]
        q, sel = q[better], sel[better]
        best[q] = d2[sel]
        best_face[q] = jf[sel]
        best_pt[q] = cp[sel]

    pi, ni = np.arange(len(p)), np.zeros(len(p), np.int64)
    while len(pi):
        keep = _box_dist2(bvh.lo[ni], bvh.hi[ni], p[pi]) <= best[pi]
        pi, ni = pi[keep], ni[keep]
        leaf = bvh.left[ni] < 0
        if leaf.any():
            fp, ff = _leaf_face_pairs(bvh, pi[leaf], ni[leaf])
            for s in range(0, len(fp), _CHUNK):
                update(fp[s : s + _CHUNK], ff[s : s + _CHUNK])
        pi, ni = _children(bvh, pi[~leaf], ni[~leaf])
    return np.sqrt(best), best_face, best_pt


def unsigned_distance(bvh: Bvh, points) -> np.ndarray | float:
    p, single = _as_points(points)
    d = closest_points(bvh, p)[0]
    return float(d[0]) if single else d


def inside(bvh: Bvh, points) -> np.ndarray:
    return np.asarray(winding_number(bvh, _as_points(points)[0])) > 0.5


def signed_distance(bvh: Bvh, points) -> np.ndarray | float:
    """Distance to the surface, negative where the winding number exceeds 0.5."""
    p, single = _as_points(points)
    d = closest_points(bvh, p)[0]
    s = np.where(np.asarray(winding_number(bvh, p)) > 0.5, -d, d)
    return float(s[0]) if single else s
