"""Triangulated closed surfaces in R^3: panels, quadrature, refinement.

A ``SurfaceMesh`` is an immutable closed orientable triangle mesh. Panels are
flat; collocation happens at panel centroids and each panel carries a 3-point
symmetric quadrature rule that integrates linear functions exactly. The
module also provides point-in-solid tests (winding number), exact
point-to-surface distance, non-tangential approach rays, and the per-panel
tangential gradient of piecewise-linear interpolants.

Mesh files use the POLYMESH 1 ASCII format: line 1 ``POLYMESH 1``, line 2
``<V> <F>``, then V vertex lines ``x y z``, then F face lines ``i j k``
(0-based indices, counterclockwise seen from outside).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

__all__ = [
    "SurfaceMesh",
    "NontangentialRay",
    "MeshStatistics",
    "MeshFormatError",
    "MeshTopologyError",
    "MeshOrientationError",
    "sphere_mesh",
    "icosahedron",
    "octahedron",
    "load_mesh",
    "save_mesh",
    "nontangential_samples",
    "tangential_gradient",
    "interpolation_scale",
    "mesh_statistics",
]

# Barycentric weights of the symmetric interior 3-point rule (degree-2 exact
# on affine data, all weights equal).
_QUAD_BARY = np.array(
    [
        [2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0],
        [1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0],
        [1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0],
    ]
)

_MAX_SPHERE_LEVEL = 7


class MeshFormatError(ValueError):
    """Mesh file could not be parsed; message carries the line number."""


class MeshTopologyError(ValueError):
    """Mesh is not a closed orientable surface."""


class MeshOrientationError(ValueError):
    """Mesh faces are not consistently oriented outward."""


@dataclass(frozen=True)
class SurfaceMesh:
    """Closed triangulated surface; immutable after construction."""

    vertices: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        verts = np.ascontiguousarray(np.asarray(self.vertices, dtype=float))
        faces = np.ascontiguousarray(np.asarray(self.faces, dtype=np.int64))
        if verts.ndim != 2 or verts.shape[1] != 3:
            raise MeshTopologyError("vertices must be a (V, 3) array")
        if faces.ndim != 2 or faces.shape[1] != 3:
            raise MeshTopologyError("faces must be a (F, 3) array")
        if faces.min(initial=0) < 0 or faces.max(initial=-1) >= len(verts):
            raise MeshTopologyError("face index out of range")
        verts.flags.writeable = False
        faces.flags.writeable = False
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "faces", faces)
        self._validate()

    def _validate(self):
        edges = {}
        for fi, (a, b, c) in enumerate(self.faces):
            for u, v in ((a, b), (b, c), (c, a)):
                key = (min(u, v), max(u, v))
                edges.setdefault(key, []).append(u < v)
        for key, uses in edges.items():
            if len(uses) != 2:
                raise MeshTopologyError(
                    f"edge {key} belongs to {len(uses)} faces, expected 2"
                )
            if uses[0] == uses[1]:
                raise MeshTopologyError(
                    f"edge {key} traversed twice in the same direction"
                )
        if np.any(self.areas <= 0.0) or not np.all(np.isfinite(self.vertices)):
            raise MeshTopologyError("degenerate panel or non-finite vertex")
        if self.volume <= 0.0:
            raise MeshOrientationError(
                "signed volume is not positive; faces are oriented inward"
            )

    # -- panel geometry -------------------------------------------------

    @property
    def panel_count(self) -> int:
        return len(self.faces)

    @cached_property
    def corners(self) -> np.ndarray:
        """Panel corner coordinates, shape (F, 3, 3)."""
        return self.vertices[self.faces]

    @cached_property
    def _cross(self) -> np.ndarray:
        c = self.corners
        return np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0])

    @cached_property
    def areas(self) -> np.ndarray:
        return 0.5 * np.linalg.norm(self._cross, axis=1)

    @cached_property
    def normals(self) -> np.ndarray:
        return self._cross / (2.0 * self.areas[:, None])

    @cached_property
    def centroids(self) -> np.ndarray:
        return self.corners.mean(axis=1)

    @cached_property
    def diameters(self) -> np.ndarray:
        c = self.corners
        e = np.stack(
            [
                np.linalg.norm(c[:, 1] - c[:, 0], axis=1),
                np.linalg.norm(c[:, 2] - c[:, 1], axis=1),
                np.linalg.norm(c[:, 0] - c[:, 2], axis=1),
            ],
            axis=1,
        )
        return e.max(axis=1)

    @cached_property
    def quad_nodes(self) -> np.ndarray:
        """Quadrature nodes, shape (F, 3, 3): 3 interior points per panel."""
        return np.einsum("qb,fbk->fqk", _QUAD_BARY, self.corners)

    @cached_property
    def quad_weights(self) -> np.ndarray:
        """Quadrature weights, shape (F, 3); rows sum to the panel area."""
        return np.repeat(self.areas[:, None] / 3.0, 3, axis=1)

    @cached_property
    def total_area(self) -> float:
        return float(self.areas.sum())

    @cached_property
    def volume(self) -> float:
        """Signed enclosed volume; positive for outward orientation."""
        c = self.corners
        return float(np.einsum("fk,fk->", c[:, 0], self._cross) / 6.0)

    @cached_property
    def adjacency(self) -> tuple[np.ndarray, ...]:
        """For each panel, the indices of panels sharing a vertex with it."""
        vertex_faces: list[list[int]] = [[] for _ in range(len(self.vertices))]
        for fi, face in enumerate(self.faces):
            for v in face:
                vertex_faces[v].append(fi)
        out = []
        for fi, face in enumerate(self.faces):
            neigh = set()
            for v in face:
                neigh.update(vertex_faces[v])
            neigh.discard(fi)
            out.append(np.array(sorted(neigh), dtype=np.int64))
        return tuple(out)

    # -- refinement ------------------------------------------------------

    def refine(self, project=None) -> "SurfaceMesh":
        """Split every panel into 4 by edge midpoints.

        ``project`` is an optional callable applied to the full new vertex
        array (used by sphere meshes to push vertices back onto the sphere).
        """
        verts = list(map(tuple, self.vertices))
        midpoint = {}

        def mid(u, v):
            key = (min(u, v), max(u, v))
            if key not in midpoint:
                p = 0.5 * (self.vertices[u] + self.vertices[v])
                midpoint[key] = len(verts)
                verts.append(tuple(p))
            return midpoint[key]

        new_faces = []
        for a, b, c in self.faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new_faces.extend([(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)])
        new_verts = np.array(verts, dtype=float)
        if project is not None:
            new_verts = project(new_verts)
        return SurfaceMesh(new_verts, np.array(new_faces, dtype=np.int64))

    # -- containment and distance ----------------------------------------

    def solid_angle(self, points) -> np.ndarray:
        """Total solid angle subtended by the surface at each point."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.empty(len(pts))
        corners = self.corners
        for start in range(0, len(pts), 128):
            block = pts[start : start + 128]
            a = corners[None, :, 0] - block[:, None]
            b = corners[None, :, 1] - block[:, None]
            c = corners[None, :, 2] - block[:, None]
            la = np.linalg.norm(a, axis=2)
            lb = np.linalg.norm(b, axis=2)
            lc = np.linalg.norm(c, axis=2)
            det = np.einsum("pfk,pfk->pf", a, np.cross(b, c))
            denom = (
                la * lb * lc
                + np.einsum("pfk,pfk->pf", a, b) * lc
                + np.einsum("pfk,pfk->pf", b, c) * la
                + np.einsum("pfk,pfk->pf", c, a) * lb
            )
            out[start : start + 128] = 2.0 * np.arctan2(det, denom).sum(axis=1)
        return out if np.ndim(points) > 1 else out[0]

    def contains(self, points):
        """True where a point lies inside the enclosed solid."""
        return np.abs(self.solid_angle(points)) > 2.0 * math.pi

    def nearest_panel(self, points):
        """Exact distance to the surface and the index of the closest panel."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        dist = np.empty(len(pts))
        index = np.empty(len(pts), dtype=np.int64)
        for start in range(0, len(pts), 64):
            block = pts[start : start + 64]
            d2 = _point_triangle_sq(block, self.corners)
            index[start : start + 64] = np.argmin(d2, axis=1)
            dist[start : start + 64] = np.sqrt(d2.min(axis=1))
        if np.ndim(points) == 1:
            return dist[0], int(index[0])
        return dist, index

    def surface_distance(self, points):
        return self.nearest_panel(points)[0]

    def signed_distance(self, points):
        """Distance to the surface, negative inside the solid."""
        d = self.surface_distance(points)
        inside = self.contains(points)
        return np.where(inside, -d, d) if np.ndim(points) > 1 else (-d if inside else d)


def _point_triangle_sq(points: np.ndarray, corners: np.ndarray) -> np.ndarray:
    """Squared distances from points (P, 3) to triangles (F, 3, 3) -> (P, F).

    Barycentric projection with edge/vertex clamping; the standard closest
    point construction written with numpy broadcasting.
    """
    a = corners[None, :, 0]
    ab = (corners[:, 1] - corners[:, 0])[None]
    ac = (corners[:, 2] - corners[:, 0])[None]
    ap = points[:, None] - a
    d00 = np.einsum("pfk,pfk->pf", ab, ab)
    d01 = np.einsum("pfk,pfk->pf", ab, ac)
    d11 = np.einsum("pfk,pfk->pf", ac, ac)
    d20 = np.einsum("pfk,pfk->pf", ap, ab)
    d21 = np.einsum("pfk,pfk->pf", ap, ac)
    denom = d00 * d11 - d01 * d01
    v = (d11 * d20 - d01 * d21) / denom
    w = (d00 * d21 - d01 * d20) / denom
    # Clamp into the triangle: interior, then the three edges.
    v_in = np.clip(v, 0.0, 1.0)
    w_in = np.clip(w, 0.0, 1.0)
    # Edge AB (w <= 0): t = d20 / d00
    t_ab = np.clip(d20 / d00, 0.0, 1.0)
    # Edge AC (v <= 0): t = d21 / d11
    t_ac = np.clip(d21 / d11, 0.0, 1.0)
    # Edge BC: parameterize b + t (c - b)
    bp = ap - ab
    bc = ac - ab
    dbc = np.einsum("pfk,pfk->pf", bc, bc)
    t_bc = np.clip(np.einsum("pfk,pfk->pf", bp, bc) / dbc, 0.0, 1.0)

    inside = (v >= 0.0) & (w >= 0.0) & (v + w <= 1.0)
    cand_in = ap - (v_in[..., None] * ab + w_in[..., None] * ac)
    cand_ab = ap - t_ab[..., None] * ab
    cand_ac = ap - t_ac[..., None] * ac
    cand_bc = bp - t_bc[..., None] * bc
    sq_in = np.einsum("pfk,pfk->pf", cand_in, cand_in)
    sq_ab = np.einsum("pfk,pfk->pf", cand_ab, cand_ab)
    sq_ac = np.einsum("pfk,pfk->pf", cand_ac, cand_ac)
    sq_bc = np.einsum("pfk,pfk->pf", cand_bc, cand_bc)
    best_edge = np.minimum(np.minimum(sq_ab, sq_ac), sq_bc)
    return np.where(inside, sq_in, best_edge)


# -- constructors ---------------------------------------------------------


def icosahedron(radius: float = 1.0, center=(0.0, 0.0, 0.0)) -> SurfaceMesh:
    """Regular icosahedron with vertices on the sphere of given radius."""
    t = (1.0 + math.sqrt(5.0)) / 2.0
    verts = np.array(
        [
            [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
            [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
            [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
        ],
        dtype=float,
    )
    verts *= radius / math.sqrt(1.0 + t * t)
    verts += np.asarray(center, dtype=float)
    faces = np.array(
        [
            [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
            [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
            [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
            [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
        ],
        dtype=np.int64,
    )
    return SurfaceMesh(verts, faces)


def octahedron(radius: float = 1.0, center=(0.0, 0.0, 0.0)) -> SurfaceMesh:
    """Regular octahedron; handy genuinely non-smooth Lipschitz test case."""
    c = np.asarray(center, dtype=float)
    verts = radius * np.array(
        [[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]],
        dtype=float,
    ) + c
    faces = np.array(
        [
            [0, 2, 4], [2, 1, 4], [1, 3, 4], [3, 0, 4],
            [2, 0, 5], [1, 2, 5], [3, 1, 5], [0, 3, 5],
        ],
        dtype=np.int64,
    )
    return SurfaceMesh(verts, faces)


def sphere_mesh(level: int, radius: float = 1.0, center=(0.0, 0.0, 0.0)) -> SurfaceMesh:
    """Icosahedral sphere mesh: 20 * 4^level panels, vertices on the sphere."""
    if level < 0:
        raise ValueError("level must be >= 0")
    if level > _MAX_SPHERE_LEVEL:
        raise ValueError(f"level {level} exceeds the cap {_MAX_SPHERE_LEVEL}")
    c = np.asarray(center, dtype=float)

    def project(verts):
        rel = verts - c
        return c + radius * rel / np.linalg.norm(rel, axis=1, keepdims=True)

    mesh = icosahedron(radius, center)
    for _ in range(level):
        mesh = mesh.refine(project=project)
    return mesh


# -- file format -----------------------------------------------------------


def save_mesh(mesh: SurfaceMesh, path) -> None:
    with open(path, "w") as fh:
        fh.write("POLYMESH 1\n")
        fh.write(f"{len(mesh.vertices)} {len(mesh.faces)}\n")
        for x, y, z in mesh.vertices:
            fh.write(f"{x:.17g} {y:.17g} {z:.17g}\n")
        for i, j, k in mesh.faces:
            fh.write(f"{i} {j} {k}\n")


def load_mesh(path) -> SurfaceMesh:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].strip() != "POLYMESH 1":
        raise MeshFormatError("line 1: expected header 'POLYMESH 1'")
    if len(lines) < 2:
        raise MeshFormatError("line 2: expected '<V> <F>' counts")
    try:
        nv, nf = (int(tok) for tok in lines[1].split())
    except ValueError as exc:
        raise MeshFormatError(f"line 2: bad counts ({exc})") from None
    if len(lines) < 2 + nv + nf:
        raise MeshFormatError(
            f"line {len(lines) + 1}: file ends before {nv} vertices "
            f"and {nf} faces are read"
        )
    verts = np.empty((nv, 3))
    for i in range(nv):
        lineno = 3 + i
        toks = lines[2 + i].split()
        if len(toks) != 3:
            raise MeshFormatError(f"line {lineno}: expected 3 coordinates")
        try:
            verts[i] = [float(t) for t in toks]
        except ValueError:
            raise MeshFormatError(f"line {lineno}: bad coordinate") from None
    faces = np.empty((nf, 3), dtype=np.int64)
    for i in range(nf):
        lineno = 3 + nv + i
        toks = lines[2 + nv + i].split()
        if len(toks) != 3:
            raise MeshFormatError(f"line {lineno}: expected 3 vertex indices")
        try:
            faces[i] = [int(t) for t in toks]
        except ValueError:
            raise MeshFormatError(f"line {lineno}: bad vertex index") from None
    return SurfaceMesh(verts, faces)


# -- non-tangential approach ------------------------------------------------


@dataclass(frozen=True)
class NontangentialRay:
    """Interior samples approaching a boundary point inside an aperture cone.

    Every sample X satisfies |X - P| < gamma * dist(X, boundary), checked
    against the exact distance to the triangulated surface.
    """

    point: np.ndarray
    direction: np.ndarray
    gamma: float
    samples: np.ndarray
    distances: np.ndarray


def nontangential_samples(
    mesh: SurfaceMesh, point, gamma: float = 2.0, count: int = 12, start: float | None = None
) -> NontangentialRay:
    """Geometric ray of interior points approaching ``point`` along the
    inward normal of its panel; samples violating the aperture condition or
    escaping the solid are dropped."""
    if gamma <= 1.0:
        raise ValueError("aperture gamma must exceed 1")
    p = np.asarray(point, dtype=float)
    _, panel = mesh.nearest_panel(p)
    normal = mesh.normals[panel]
    if not np.isfinite(normal).all():
        raise ValueError("degenerate panel normal")
    inward = -normal
    if count == 0:
        return NontangentialRay(p, inward, gamma, np.empty((0, 3)), np.empty(0))
    t0 = start if start is not None else 2.0 * float(mesh.diameters[panel])
    ts = t0 * 0.5 ** np.arange(count)
    cand = p[None, :] + ts[:, None] * inward[None, :]
    dist = mesh.surface_distance(cand)
    sep = np.linalg.norm(cand - p, axis=1)
    keep = (sep < gamma * dist) & mesh.contains(cand)
    return NontangentialRay(p, inward, gamma, cand[keep], ts[keep])


# -- densities on the mesh ---------------------------------------------------


def _centroid_to_vertex(mesh: SurfaceMesh, values: np.ndarray) -> np.ndarray:
    num = np.zeros(len(mesh.vertices))
    den = np.zeros(len(mesh.vertices))
    w = mesh.areas
    for k in range(3):
        np.add.at(num, mesh.faces[:, k], w * values)
        np.add.at(den, mesh.faces[:, k], w)
    return num / den


def tangential_gradient(mesh: SurfaceMesh, values, location: str = "centroid") -> np.ndarray:
    """Per-panel tangent vector of the linear interpolant of ``values``.

    ``location`` is ``"vertex"`` if values live at vertices, ``"centroid"``
    for collocation data (area-averaged onto vertices first).
    """
    values = np.asarray(values, dtype=float)
    if location == "centroid":
        if len(values) != mesh.panel_count:
            raise ValueError("centroid values must have one entry per panel")
        vvals = _centroid_to_vertex(mesh, values)
    elif location == "vertex":
        if len(values) != len(mesh.vertices):
            raise ValueError("vertex values must have one entry per vertex")
        vvals = values
    else:
        raise ValueError("location must be 'vertex' or 'centroid'")
    c = mesh.corners
    n = mesh.normals
    fv = vvals[mesh.faces]
    grad = (
        fv[:, 0, None] * np.cross(n, c[:, 2] - c[:, 1])
        + fv[:, 1, None] * np.cross(n, c[:, 0] - c[:, 2])
        + fv[:, 2, None] * np.cross(n, c[:, 1] - c[:, 0])
    ) / (2.0 * mesh.areas[:, None])
    return grad


def interpolation_scale(mesh: SurfaceMesh, values) -> float:
    """Largest jump of collocation values between vertex-sharing panels.

    The natural resolution scale of piecewise-constant boundary data; jump
    relation acceptance bounds are stated in multiples of it.
    """
    values = np.asarray(values, dtype=float)
    worst = 0.0
    for fi, neigh in enumerate(mesh.adjacency):
        if len(neigh):
            worst = max(worst, float(np.max(np.abs(values[neigh] - values[fi]))))
    return worst


@dataclass(frozen=True)
class MeshStatistics:
    panels: int
    vertices: int
    total_area: float
    volume: float
    h_min: float
    h_max: float
    h_mean: float
    area_min: float
    area_max: float
    max_normal_angle: float


def mesh_statistics(mesh: SurfaceMesh) -> MeshStatistics:
    """Size and shape diagnostics, including the largest dihedral kink
    between vertex-sharing panels (a practical surrogate for the Lipschitz
    character of the triangulated boundary)."""
    worst = 0.0
    for fi, neigh in enumerate(mesh.adjacency):
        if len(neigh):
            cosang = np.clip(mesh.normals[neigh] @ mesh.normals[fi], -1.0, 1.0)
            worst = max(worst, float(np.max(np.arccos(cosang))))
    return MeshStatistics(
        panels=mesh.panel_count,
        vertices=len(mesh.vertices),
        total_area=mesh.total_area,
        volume=mesh.volume,
        h_min=float(mesh.diameters.min()),
        h_max=float(mesh.diameters.max()),
        h_mean=float(mesh.diameters.mean()),
        area_min=float(mesh.areas.min()),
        area_max=float(mesh.areas.max()),
        max_normal_angle=worst,
    )
