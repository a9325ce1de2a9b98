"""Watertight triangle meshes: loading, validation, normalization, surface sampling."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import cached_property
from importlib import resources
from pathlib import Path

import numpy as np


class MeshError(ValueError):
    """Mesh fails a structural requirement (indices, watertightness, degeneracy)."""


class DegenerateInputError(ValueError):
    """Input geometry has no extent / no volume to work with."""


@dataclass(frozen=True, eq=False)
class TriMesh:
    """Closed, consistently oriented triangle mesh.

    Validation runs on construction; instances are treated as immutable.
    """

    vertices: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=np.float64)
        f = np.ascontiguousarray(self.faces, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] != 3 or f.ndim != 2 or f.shape[1] != 3:
            raise MeshError(f"expected (V,3) vertices and (F,3) faces, got {v.shape}, {f.shape}")
        if len(f) == 0:
            raise MeshError("mesh has no faces")
        if f.min() < 0 or f.max() >= len(v):
            raise MeshError("face index out of range")
        v.setflags(write=False)
        f.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)
        self._check_watertight()
        extent = float(np.max(v.max(0) - v.min(0)))
        if extent <= 0:
            raise DegenerateInputError("mesh has zero extent")
        # area threshold is stated for unit-normalized meshes, so scale it
        if np.any(self.face_areas <= 1e-12 * extent**2):
            raise MeshError("mesh contains degenerate faces")

    def _check_watertight(self) -> None:
        f = self.faces
        directed = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
        n = len(self.vertices)
        keys = directed[:, 0] * n + directed[:, 1]
        uniq, counts = np.unique(keys, return_counts=True)
        if np.any(counts != 1):
            raise MeshError("mesh is not consistently oriented: a directed edge repeats")
        reverse = directed[:, 1] * n + directed[:, 0]
        if not np.all(np.isin(reverse, uniq, assume_unique=False)):
            raise MeshError("mesh is not watertight: an edge has no opposite half-edge")

    @cached_property
    def triangles(self) -> np.ndarray:
        t = self.vertices[self.faces]
        t.setflags(write=False)
        return t

    @cached_property
    def _cross(self) -> np.ndarray:
        t = self.triangles
        return np.cross(t[:, 1] - t[:, 0], t[:, 2] - t[:, 0])

    @cached_property
    def face_areas(self) -> np.ndarray:
        return 0.5 * np.linalg.norm(self._cross, axis=1)

    @cached_property
    def face_normals(self) -> np.ndarray:
        c = self._cross
        return c / np.linalg.norm(c, axis=1, keepdims=True)

    @property
    def area(self) -> float:
        return float(self.face_areas.sum())

    @property
    def volume(self) -> float:
        t = self.triangles
        return float(np.einsum("ij,ij->i", t[:, 0], np.cross(t[:, 1], t[:, 2])).sum() / 6.0)

    @property
    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(0), self.vertices.max(0)


def normalize_mesh(mesh: TriMesh) -> TriMesh:
    """Uniformly scale so the longest bounding-box edge is 1 and center the box at the origin."""
    lo, hi = mesh.bounds
    extent = float(np.max(hi - lo))
    if not extent > 0:
        raise DegenerateInputError("cannot normalize a zero-extent mesh")
    center = 0.5 * (lo + hi)
    return TriMesh((mesh.vertices - center) / extent, mesh.faces)


@dataclass(frozen=True)
class SurfaceSamples:
    """Struct-of-arrays batch of surface samples."""

    positions: np.ndarray
    normals: np.ndarray
    face_index: np.ndarray

    def __len__(self) -> int:
        return len(self.positions)


def sample_surface(mesh: TriMesh, n: int, rng: np.random.Generator) -> SurfaceSamples:
    """Area-weighted uniform samples on the mesh surface."""
    if n < 1:
        raise ValueError("n must be >= 1")
    areas = mesh.face_areas
    face = rng.choice(len(areas), size=n, p=areas / areas.sum())
    u, v = rng.random(n), rng.random(n)
    flip = u + v > 1.0
    u[flip], v[flip] = 1.0 - u[flip], 1.0 - v[flip]
    t = mesh.triangles[face]
    pos = t[:, 0] + u[:, None] * (t[:, 1] - t[:, 0]) + v[:, None] * (t[:, 2] - t[:, 0])
    return SurfaceSamples(pos, mesh.face_normals[face].copy(), face)


# --------------------------------------------------------------------------- io


def read_off(path) -> TriMesh:
    tokens = []
    for line in Path(path).read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            tokens.extend(line.split())
    if not tokens or tokens[0] != "OFF":
        raise MeshError(f"{path}: missing OFF header")
    nv, nf = int(tokens[1]), int(tokens[2])
    pos = 4
    verts = np.array(tokens[pos : pos + 3 * nv], dtype=np.float64).reshape(nv, 3)
    pos += 3 * nv
    faces = []
    for _ in range(nf):
        k = int(tokens[pos])
        idx = [int(x) for x in tokens[pos + 1 : pos + 1 + k]]
        pos += 1 + k
        # fan-triangulate polygons
        faces.extend([idx[0], idx[i], idx[i + 1]] for i in range(1, k - 1))
    return TriMesh(verts, np.array(faces, dtype=np.int64))


def write_off(mesh: TriMesh, path) -> None:
    lines = ["OFF", f"{len(mesh.vertices)} {len(mesh.faces)} 0"]
    lines += [f"{x:.17g} {y:.17g} {z:.17g}" for x, y, z in mesh.vertices]
    lines += [f"3 {a} {b} {c}" for a, b, c in mesh.faces]
    Path(path).write_text("\n".join(lines) + "\n")


def read_stl(path) -> TriMesh:
    """Binary STL; coincident vertices are merged by exact coordinate match."""
    data = Path(path).read_bytes()
    if len(data) < 84:
        raise MeshError(f"{path}: truncated STL")
    (count,) = struct.unpack_from("<I", data, 80)
    if len(data) < 84 + 50 * count:
        raise MeshError(f"{path}: truncated STL body")
    rec = np.dtype([("n", "<f4", 3), ("v", "<f4", (3, 3)), ("attr", "<u2")])
    tris = np.frombuffer(data, dtype=rec, count=count, offset=84)["v"].astype(np.float64)
    verts, inverse = np.unique(tris.reshape(-1, 3), axis=0, return_inverse=True)
    return TriMesh(verts, inverse.reshape(-1, 3))


def write_stl(mesh: TriMesh, path) -> None:
    rec = np.dtype([("n", "<f4", 3), ("v", "<f4", (3, 3)), ("attr", "<u2")])
    out = np.zeros(len(mesh.faces), dtype=rec)
    out["n"] = mesh.face_normals
    out["v"] = mesh.triangles
    with open(path, "wb") as fh:
        fh.write(b"\0" * 80)
        fh.write(struct.pack("<I", len(out)))
        fh.write(out.tobytes())


def load_mesh(path) -> TriMesh:
    suffix = Path(path).suffix.lower()
    if suffix == ".off":
        return read_off(path)
    if suffix == ".stl":
        return read_stl(path)
    raise MeshError(f"unsupported mesh format: {suffix}")


BUNDLED = ("cube", "icosphere", "torus")


def bundled_mesh(name: str) -> TriMesh:
    """One of the primitive test meshes shipped with the package (OFF)."""
    if name not in BUNDLED:
        raise KeyError(f"unknown bundled mesh {name!r}; choose from {BUNDLED}")
    with resources.as_file(resources.files("shapemate") / "data" / f"{name}.off") as p:
        return read_off(p)


# ------------------------------------------------------------------- primitives


def make_cube(size: float = 1.0) -> TriMesh:
    """Axis-aligned cube ``[0, size]^3`` with outward-facing triangles."""
    v = np.array([[x, y, z] for x in (0, 1) for y in (0, 1) for z in (0, 1)], dtype=np.float64)
    quads = [
        (0, 1, 3, 2),  # x = 0
        (4, 6, 7, 5),  # x = 1
        (0, 4, 5, 1),  # y = 0
        (2, 3, 7, 6),  # y = 1
        (0, 2, 6, 4),  # z = 0
        (1, 5, 7, 3),  # z = 1
    ]
    faces = []
    for a, b, c, d in quads:
        faces += [(a, b, c), (a, c, d)]
    return TriMesh(v * size, np.array(faces))


def make_icosphere(subdivisions: int = 3, radius: float = 1.0) -> TriMesh:
    phi = (1 + 5**0.5) / 2
    verts = [
        (-1, phi, 0), (1, phi, 0), (-1, -phi, 0), (1, -phi, 0),
        (0, -1, phi), (0, 1, phi), (0, -1, -phi), (0, 1, -phi),
        (phi, 0, -1), (phi, 0, 1), (-phi, 0, -1), (-phi, 0, 1),
    ]
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    verts = [np.array(p, dtype=np.float64) / np.linalg.norm(p) for p in verts]
    for _ in range(subdivisions):
        cache: dict[tuple[int, int], int] = {}

        def midpoint(i, j):
            key = (min(i, j), max(i, j))
            if key not in cache:
                m = verts[i] + verts[j]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces
    return TriMesh(np.array(verts) * radius, np.array(faces))


def make_torus(major: float = 1.0, minor: float = 0.35, nu: int = 48, nv: int = 24) -> TriMesh:
    """Torus around the z axis."""
    u = np.arange(nu) * 2 * np.pi / nu
    v = np.arange(nv) * 2 * np.pi / nv
    uu, vv = np.meshgrid(u, v, indexing="ij")
    x = (major + minor * np.cos(vv)) * np.cos(uu)
    y = (major + minor * np.cos(vv)) * np.sin(uu)
    z = minor * np.sin(vv)
    verts = np.stack([x, y, z], -1).reshape(-1, 3)
    faces = []
    for i in range(nu):
        for j in range(nv):
            a = i * nv + j
            b = ((i + 1) % nu) * nv + j
            c = ((i + 1) % nu) * nv + (j + 1) % nv
            d = i * nv + (j + 1) % nv
            faces += [(a, b, c), (a, c, d)]
    return TriMesh(verts, np.array(faces))
