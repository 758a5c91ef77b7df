"""Dense boundary operators and volume-side potentials.

Assembly targets collocation at panel centroids with the per-panel 3-point
rule, upgraded near the singularity: the collocation panel itself is
integrated with a polar (Duffy-type) rule split at the centroid with dyadic
radial refinement, and vertex-sharing panels are integrated on a 16-fold
uniform subdivision. The double-layer diagonal is closed with the flux
identity so the constant density is reproduced exactly.

Adjoint operators are exact weighted transposes of their partners, which
keeps discrete duality identities exact instead of quadrature-approximate.

Everything here lives on surfaces in R^3 (boundary dimension 2). Evaluation
is organized so the hot loops are matrix products: squared distances and
normal moments of point blocks against all quadrature nodes come from GEMMs,
then per-order radial powers are applied.
"""

from __future__ import annotations

import os
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.special import roots_legendre

from . import kernels
from .geometry import SurfaceMesh

__all__ = [
    "DenseOperator",
    "NearBoundaryError",
    "resolve_threads",
    "assemble_double_layer",
    "assemble_poisson_layer",
    "assemble_fundamental_layer",
    "adjoint_operator",
    "potential_poisson",
    "potential_poisson_many",
    "potential_poisson_gradient",
    "potential_poisson_gradient_many",
    "potential_fundamental",
    "potential_fundamental_many",
    "potential_fundamental_gradient",
    "potential_fundamental_gradient_many",
    "newtonian_potential",
    "newtonian_potential_ball",
    "save_operator",
    "load_operator",
    "area_weighted_mean",
    "area_inner",
    "area_norm",
]

_N = 2  # boundary dimension of triangulated surfaces in R^3

THREADS_ENV = "POLYPOT_THREADS"


class NearBoundaryError(ValueError):
    """Potential requested closer to the surface than the local panel size."""


def resolve_threads(threads: int | None = None) -> int:
    """Worker count for row-parallel assembly; the environment variable
    POLYPOT_THREADS overrides any explicit request."""
    env = os.environ.get(THREADS_ENV)
    if env is not None:
        value = int(env)
        if value < 1:
            raise ValueError(f"{THREADS_ENV} must be a positive integer")
        return value
    if threads is not None:
        if threads < 1:
            raise ValueError("threads must be a positive integer")
        return threads
    return 1


def _poisson_scale(order: int) -> float:
    scale, _ = kernels._poisson_prefactor(_N, order)
    return scale


def _fundamental_scale(order: int) -> float:
    scale, _ = kernels._fundamental_prefactor(_N, order)
    return scale


def _poisson_power(order: int) -> int:
    return 2 * order - (_N + 3)


def _fundamental_power(order: int) -> int:
    return 2 * order - (_N + 1)


def _rpow(r: np.ndarray, r2: np.ndarray, p: int) -> np.ndarray:
    """r**p for the odd integer exponents the kernel chains use."""
    if p == -3:
        return 1.0 / (r2 * r)
    if p == -1:
        return 1.0 / r
    if p == 1:
        return r
    if p == 3:
        return r * r2
    if p == 5:
        return r * r2 * r2
    return r ** p


# -- quadrature refinement rules --------------------------------------------


def _duffy_cells(levels: int = 4, points: int = 3):
    """Radial-by-angular Gauss cells on the unit square for a vertex
    singularity, with dyadic refinement toward u = 0."""
    gx, gw = roots_legendre(points)
    gx = 0.5 * (gx + 1.0)
    gw = 0.5 * gw
    us, uw = [], []
    hi = 1.0
    for lev in range(levels):
        lo = 0.0 if lev == levels - 1 else hi / 2.0
        us.append(lo + (hi - lo) * gx)
        uw.append((hi - lo) * gw)
        hi = lo
    u = np.concatenate(us)
    wu = np.concatenate(uw)
    U, W = np.meshgrid(u, gx, indexing="ij")
    WU, WW = np.meshgrid(wu, gw, indexing="ij")
    return U.ravel(), W.ravel(), (WU * WW).ravel()


_DUFFY_U, _DUFFY_W, _DUFFY_WEIGHT = _duffy_cells()


def _self_panel_rule(mesh: SurfaceMesh):
    """Polar rule on each panel with the singular point at its centroid.

    Returns nodes (F, K, 3) and weights (F, K). Each of the 3 centroid
    subtriangles is mapped from the unit square; the mapping Jacobian is
    u times twice the subtriangle area, which cancels one inverse power of
    the distance to the singular point.
    """
    c = mesh.centroids
    corners = mesh.corners
    u = _DUFFY_U[None, :, None]
    w = _DUFFY_W[None, :, None]
    wq = _DUFFY_WEIGHT[None, :]
    nodes = []
    weights = []
    for k in range(3):
        a = corners[:, k]
        b = corners[:, (k + 1) % 3]
        sub_area = 0.5 * np.linalg.norm(np.cross(a - c, b - c), axis=1)
        x = c[:, None, :] + u * ((1.0 - w) * (a - c)[:, None, :] + w * (b - c)[:, None, :])
        nodes.append(x)
        weights.append(wq * _DUFFY_U[None, :] * 2.0 * sub_area[:, None])
    return np.concatenate(nodes, axis=1), np.concatenate(weights, axis=1)


_FINE_BARY = None


def _fine_barycentric():
    """Barycentric nodes/weights of the 16-fold uniform split, 3 pts each."""
    global _FINE_BARY
    if _FINE_BARY is not None:
        return _FINE_BARY
    tris = [np.eye(3)]
    for _ in range(2):
        nxt = []
        for t in tris:
            a, b, c = t
            ab, bc, ca = 0.5 * (a + b), 0.5 * (b + c), 0.5 * (c + a)
            nxt.extend([
                np.stack([a, ab, ca]),
                np.stack([b, bc, ab]),
                np.stack([c, ca, bc]),
                np.stack([ab, bc, ca]),
            ])
        tris = nxt
    bary = np.array([[2 / 3, 1 / 6, 1 / 6], [1 / 6, 2 / 3, 1 / 6], [1 / 6, 1 / 6, 2 / 3]])
    nodes = np.concatenate([bary @ t for t in tris], axis=0)
    frac = np.full(len(nodes), 1.0 / (16 * 3))
    _FINE_BARY = (nodes, frac)
    return _FINE_BARY


def _fine_panel_rule(mesh: SurfaceMesh):
    """Subdivided rule on every panel: nodes (F, 48, 3), weights (F, 48)."""
    bary, frac = _fine_barycentric()
    nodes = np.einsum("qb,fbk->fqk", bary, mesh.corners)
    weights = mesh.areas[:, None] * frac[None, :]
    return nodes, weights


# -- dense operators ---------------------------------------------------------


@dataclass(frozen=True)
class DenseOperator:
    """N x N collocation matrix for a boundary operator."""

    matrix: np.ndarray
    kind: str
    mesh: SurfaceMesh | None = None

    def apply(self, values) -> np.ndarray:
        return self.matrix @ np.asarray(values, dtype=float)

    @property
    def shape(self):
        return self.matrix.shape


def _row_entries(points, scale, power, use_dot, qn, qw, qnorm, qdot):
    """Kernel-times-weight blocks: (B, F) panel sums of the coarse rule.

    ``use_dot`` selects the normal-paired Poisson kernel; otherwise the
    scalar fundamental kernel of the same radial power is integrated.
    """
    x2 = np.einsum("bk,bk->b", points, points)
    q2 = np.einsum("mk,mk->m", qn, qn)
    r2 = x2[:, None] + q2[None, :] - 2.0 * (points @ qn.T)
    np.maximum(r2, 1e-300, out=r2)
    r = np.sqrt(r2)
    rp = _rpow(r, r2, power)
    if use_dot:
        dot = points @ qnorm.T - qdot[None, :]
        vals = (scale * rp) * dot * qw[None, :]
    else:
        vals = (scale * rp) * qw[None, :]
    b = len(points)
    return vals.reshape(b, -1, 3).sum(axis=2)


def _assemble(mesh: SurfaceMesh, order: int, use_dot: bool, threads: int | None):
    nthreads = resolve_threads(threads)
    f = mesh.panel_count
    scale = _poisson_scale(order) if use_dot else _fundamental_scale(order)
    power = _poisson_power(order) if use_dot else _fundamental_power(order)
    qn = mesh.quad_nodes.reshape(-1, 3)
    qw = mesh.quad_weights.reshape(-1)
    qnorm = np.repeat(mesh.normals, 3, axis=0)
    qdot = np.einsum("mk,mk->m", qn, qnorm)
    self_nodes, self_weights = _self_panel_rule(mesh)
    fine_nodes, fine_weights = _fine_panel_rule(mesh)
    centroids = mesh.centroids
    normals = mesh.normals
    adjacency = mesh.adjacency
    matrix = np.empty((f, f))

    def kernel_sum(point, nodes, node_normals, weights):
        diff = point[None, :] - nodes
        r2 = np.einsum("mk,mk->m", diff, diff)
        np.maximum(r2, 1e-300, out=r2)
        r = np.sqrt(r2)
        rp = _rpow(r, r2, power)
        if use_dot:
            return scale * np.sum(rp * np.einsum("mk,mk->m", diff, node_normals) * weights)
        return scale * np.sum(rp * weights)

    def fill_rows(lo, hi):
        pts = centroids[lo:hi]
        matrix[lo:hi] = _row_entries(pts, scale, power, use_dot, qn, qw, qnorm, qdot)
        for i in range(lo, hi):
            p = centroids[i]
            neigh = adjacency[i]
            nodes = fine_nodes[neigh].reshape(-1, 3)
            nnorm = np.repeat(normals[neigh], fine_nodes.shape[1], axis=0)
            wts = fine_weights[neigh].reshape(-1)
            diff = p[None, :] - nodes
            r2 = np.einsum("mk,mk->m", diff, diff)
            r = np.sqrt(r2)
            rp = _rpow(r, r2, power)
            if use_dot:
                vals = scale * rp * np.einsum("mk,mk->m", diff, nnorm) * wts
            else:
                vals = scale * rp * wts
            matrix[i, neigh] = vals.reshape(len(neigh), -1).sum(axis=1)
            matrix[i, i] = kernel_sum(
                p, self_nodes[i], np.broadcast_to(normals[i], self_nodes[i].shape), self_weights[i]
            )

    chunk = max(1, min(64, -(-f // max(1, nthreads))))
    spans = [(lo, min(lo + chunk, f)) for lo in range(0, f, chunk)]
    if nthreads == 1:
        for lo, hi in spans:
            fill_rows(lo, hi)
    else:
        with ThreadPoolExecutor(max_workers=nthreads) as pool:
            list(pool.map(lambda s: fill_rows(*s), spans))
    return matrix


def assemble_double_layer(mesh: SurfaceMesh, threads: int | None = None) -> DenseOperator:
    """Principal-value double layer with flux-identity diagonal.

    Row i integrates the normal-paired order-1 Poisson kernel against panel
    densities; the diagonal is set so the row sums to 1/2 exactly, which is
    the discrete counterpart of the interior flux identity.
    """
    matrix = _assemble(mesh, 1, True, threads)
    idx = np.arange(mesh.panel_count)
    matrix[idx, idx] = 0.0
    matrix[idx, idx] = 0.5 - matrix.sum(axis=1)
    return DenseOperator(matrix, "T", mesh)


def assemble_poisson_layer(mesh: SurfaceMesh, order: int, threads: int | None = None) -> DenseOperator:
    """Boundary operator of the order-m normal-paired Poisson kernel, m >= 2."""
    if order < 2:
        raise ValueError("poisson layer operators start at order 2")
    matrix = _assemble(mesh, order, True, threads)
    return DenseOperator(matrix, f"K{order:04d}", mesh)


def assemble_fundamental_layer(mesh: SurfaceMesh, order: int, threads: int | None = None) -> DenseOperator:
    """Boundary matrix of the order-m fundamental kernel (m = 1: single layer)."""
    if order < 1:
        raise ValueError("order must be >= 1")
    matrix = _assemble(mesh, order, False, threads)
    return DenseOperator(matrix, f"S{order:04d}", mesh)


_ADJOINT_KINDS = {"T": "TSTAR"}


def adjoint_operator(op: DenseOperator) -> DenseOperator:
    """Exact area-weighted transpose: entry [i, j] = a_j A[j, i] / a_i.

    This is the unique matrix satisfying <A f, g> = <f, A* g> exactly in
    the area-weighted inner product of panel values.
    """
    if op.mesh is None:
        raise ValueError("adjoint needs the mesh for its area weights")
    a = op.mesh.areas
    matrix = (op.matrix.T * a[None, :]) / a[:, None]
    matrix = np.ascontiguousarray(matrix)
    if op.kind in _ADJOINT_KINDS:
        kind = _ADJOINT_KINDS[op.kind]
    elif op.kind.startswith("K"):
        kind = "KS" + op.kind[1:]
    else:
        kind = "ADJ" + op.kind
    return DenseOperator(matrix, kind[:8], op.mesh)


# -- potentials ---------------------------------------------------------------


def _as_batch(points):
    pts = np.asarray(points, dtype=float)
    single = pts.ndim == 1
    return np.atleast_2d(pts), single


def _near_check(mesh: SurfaceMesh, pts: np.ndarray, allow_near: bool):
    if allow_near:
        return
    dist, idx = mesh.nearest_panel(pts)
    bad = dist < mesh.diameters[idx]
    if np.any(bad):
        k = int(np.argmax(bad)) if bad.ndim else 0
        raise NearBoundaryError(
            "evaluation point closer to the surface than the local panel "
            f"diameter (distance {np.atleast_1d(dist)[k]:.3e}); pass "
            "allow_near=True to override"
        )


def _layer_tables(mesh: SurfaceMesh, layers: dict[int, np.ndarray]):
    qn = mesh.quad_nodes.reshape(-1, 3)
    qw = mesh.quad_weights.reshape(-1)
    qnorm = np.repeat(mesh.normals, 3, axis=0)
    qdot = np.einsum("mk,mk->m", qn, qnorm)
    wf = {}
    for order, values in layers.items():
        values = np.asarray(values, dtype=float)
        if len(values) != mesh.panel_count:
            raise ValueError("density length must equal the panel count")
        wf[order] = np.repeat(values, 3) * qw
    return qn, qnorm, qdot, wf


def _potential_engine(mesh, layers, points, fundamental_side, gradient, allow_near, chunk=128):
    pts, single = _as_batch(points)
    _near_check(mesh, pts, allow_near)
    qn, qnorm, qdot, wf = _layer_tables(mesh, layers)
    q2 = np.einsum("mk,mk->m", qn, qn)
    if gradient:
        out = np.zeros((len(pts), 3))
    else:
        out = np.zeros(len(pts))
    if fundamental_side:
        scales = {m: _fundamental_scale(m) for m in layers}
        powers = {m: _fundamental_power(m) for m in layers}
    else:
        scales = {m: _poisson_scale(m) for m in layers}
        powers = {m: _poisson_power(m) for m in layers}
    grad_scales = {m: _poisson_scale(m) for m in layers}
    grad_powers = {m: _poisson_power(m) for m in layers}
    for lo in range(0, len(pts), chunk):
        x = pts[lo : lo + chunk]
        x2 = np.einsum("bk,bk->b", x, x)
        r2 = x2[:, None] + q2[None, :] - 2.0 * (x @ qn.T)
        np.maximum(r2, 1e-300, out=r2)
        r = np.sqrt(r2)
        if gradient and fundamental_side:
            # gradient of the fundamental sum = Poisson vector sum
            coeff = np.zeros_like(r)
            for m, f in wf.items():
                coeff += (grad_scales[m] * _rpow(r, r2, grad_powers[m])) * f[None, :]
            out[lo : lo + chunk] = x * coeff.sum(axis=1)[:, None] - coeff @ qn
        elif gradient:
            dot = x @ qnorm.T - qdot[None, :]
            an = np.zeros_like(r)
            bd = np.zeros_like(r)
            for m, f in wf.items():
                rp = _rpow(r, r2, powers[m])
                an += (scales[m] * rp) * f[None, :]
                bd += (scales[m] * powers[m] * rp / r2 * dot) * f[None, :]
            out[lo : lo + chunk] = (
                an @ qnorm + x * bd.sum(axis=1)[:, None] - bd @ qn
            )
        elif fundamental_side:
            acc = np.zeros(len(x))
            for m, f in wf.items():
                acc += (scales[m] * _rpow(r, r2, powers[m])) @ f
            out[lo : lo + chunk] = acc
        else:
            dot = x @ qnorm.T - qdot[None, :]
            acc = np.zeros(len(x))
            for m, f in wf.items():
                acc += ((scales[m] * _rpow(r, r2, powers[m])) * dot) @ f
            out[lo : lo + chunk] = acc
    return out[0] if single else out


def potential_poisson_many(mesh, layers, points, allow_near=False):
    """Sum over orders of normal-paired Poisson potentials of the layer
    densities; ``layers`` maps order -> density values."""
    return _potential_engine(mesh, layers, points, False, False, allow_near)


def potential_poisson(mesh, order, values, points, allow_near=False):
    """Interior potential of the order-m normal-paired Poisson kernel."""
    return potential_poisson_many(mesh, {order: values}, points, allow_near)


def potential_poisson_gradient_many(mesh, layers, points, allow_near=False):
    return _potential_engine(mesh, layers, points, False, True, allow_near)


def potential_poisson_gradient(mesh, order, values, points, allow_near=False):
    """Gradient of ``potential_poisson`` by closed-form differentiation."""
    return potential_poisson_gradient_many(mesh, {order: values}, points, allow_near)


def potential_fundamental_many(mesh, layers, points, allow_near=False):
    return _potential_engine(mesh, layers, points, True, False, allow_near)


def potential_fundamental(mesh, order, values, points, allow_near=False):
    """Interior potential of the order-m fundamental kernel."""
    return potential_fundamental_many(mesh, {order: values}, points, allow_near)


def potential_fundamental_gradient_many(mesh, layers, points, allow_near=False):
    return _potential_engine(mesh, layers, points, True, True, allow_near)


def potential_fundamental_gradient(mesh, order, values, points, allow_near=False):
    """Gradient of the order-m fundamental potential: the x-gradient of the
    kernel is exactly the order-m Poisson vector, so no differentiation of
    quadrature sums is involved."""
    return potential_fundamental_gradient_many(mesh, {order: values}, points, allow_near)


# -- Newtonian potentials ------------------------------------------------------

_TET4_BARY = None


def _tet4():
    global _TET4_BARY
    if _TET4_BARY is None:
        a = 0.5854101966249685
        b = 0.1381966011250105
        pts = np.full((4, 4), b)
        np.fill_diagonal(pts, a)
        _TET4_BARY = pts
    return _TET4_BARY


def _tet_volume(tets):
    d1 = tets[:, 1] - tets[:, 0]
    d2 = tets[:, 2] - tets[:, 0]
    d3 = tets[:, 3] - tets[:, 0]
    return np.abs(np.einsum("tk,tk->t", d1, np.cross(d2, d3))) / 6.0


def _split_tet(t):
    a, b, c, d = t
    ab, ac, ad = 0.5 * (a + b), 0.5 * (a + c), 0.5 * (a + d)
    bc, bd, cd = 0.5 * (b + c), 0.5 * (b + d), 0.5 * (c + d)
    return [
        np.stack([a, ab, ac, ad]),
        np.stack([b, ab, bc, bd]),
        np.stack([c, ac, bc, cd]),
        np.stack([d, ad, bd, cd]),
        np.stack([ab, ac, ad, bc]),
        np.stack([ab, ad, bc, bd]),
        np.stack([ac, ad, bc, cd]),
        np.stack([ad, bc, bd, cd]),
    ]


def newtonian_potential(mesh: SurfaceMesh, order: int, point, max_depth: int = 6) -> float:
    """Volume integral of the order-m fundamental kernel over the enclosed
    solid, by a tetrahedral fan from the vertex centroid with adaptive
    splitting toward the evaluation point."""
    y = np.asarray(point, dtype=float)
    anchor = mesh.vertices.mean(axis=0)
    corners = mesh.corners
    base = np.concatenate(
        [np.broadcast_to(anchor, (mesh.panel_count, 1, 3)), corners], axis=1
    )
    scale = _fundamental_scale(order)
    power = _fundamental_power(order)
    bary = _tet4()
    total = 0.0
    queue = [base]
    depth = 0
    while queue:
        tets = np.concatenate(queue, axis=0) if len(queue) > 1 else queue[0]
        queue = []
        centers = tets.mean(axis=1)
        spread = np.linalg.norm(tets - centers[:, None, :], axis=2).max(axis=1)
        dist = np.linalg.norm(centers - y[None, :], axis=1)
        refine = (spread > 0.5 * dist) & (depth < max_depth)
        keep = tets[~refine]
        if len(keep):
            vol = _tet_volume(keep)
            nodes = np.einsum("qb,tbk->tqk", bary, keep).reshape(-1, 3)
            diff = nodes - y[None, :]
            r2 = np.einsum("mk,mk->m", diff, diff)
            np.maximum(r2, 1e-300, out=r2)
            r = np.sqrt(r2)
            vals = scale * _rpow(r, r2, power)
            total += float(vals.reshape(-1, 4).mean(axis=1) @ vol)
        to_split = tets[refine]
        if len(to_split):
            children = []
            for t in to_split:
                children.extend(_split_tet(t))
            queue = [np.stack(children)]
        depth += 1
    return total


def newtonian_potential_ball(
    order: int, point, radius: float = 1.0, center=(0.0, 0.0, 0.0), n_radial: int = 96, n_polar: int = 96
) -> float:
    """Volume integral of the order-m fundamental kernel over a ball, by a
    product rule: Gauss radial panels split at the evaluation radius, Gauss
    in the polar cosine about the axis through the point, exact azimuth."""
    y = np.asarray(point, dtype=float) - np.asarray(center, dtype=float)
    ay = float(np.linalg.norm(y))
    if ay >= radius:
        raise ValueError("evaluation point must be inside the ball")
    scale = _fundamental_scale(order)
    power = _fundamental_power(order)
    gx, gw = roots_legendre(n_radial)
    segs = [(0.0, ay), (ay, radius)] if ay > 0.0 else [(0.0, radius)]
    rs, rw = [], []
    for lo, hi in segs:
        if hi - lo <= 0.0:
            continue
        rs.append(0.5 * (hi + lo) + 0.5 * (hi - lo) * gx)
        rw.append(0.5 * (hi - lo) * gw)
    r = np.concatenate(rs)
    wr = np.concatenate(rw)
    tx, tw = roots_legendre(n_polar)
    sep2 = r[:, None] ** 2 + ay**2 - 2.0 * ay * r[:, None] * tx[None, :]
    sep2 = np.maximum(sep2, 1e-300)
    sep = np.sqrt(sep2)
    vals = scale * _rpow(sep, sep2, power)
    shell = (vals @ tw) * (2.0 * np.pi * r**2)
    return float(shell @ wr)


# -- persistence ----------------------------------------------------------------

_HEADER = struct.Struct("<Q8s")


def save_operator(op: DenseOperator, path) -> None:
    """Flat binary dump: 16-byte header (uint64 N, 8-byte kind tag), then the
    row-major float64 matrix body."""
    n = op.matrix.shape[0]
    kind = op.kind.encode("ascii")[:8].ljust(8)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(n, kind))
        fh.write(np.ascontiguousarray(op.matrix, dtype=float).tobytes())


def load_operator(path, mesh: SurfaceMesh | None = None) -> DenseOperator:
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        n, kind = _HEADER.unpack(head)
        body = np.frombuffer(fh.read(), dtype=float)
    if body.size != n * n:
        raise ValueError(f"matrix body has {body.size} entries, expected {n * n}")
    return DenseOperator(body.reshape(n, n).copy(), kind.decode("ascii").rstrip(), mesh)


# -- area-weighted helpers -------------------------------------------------------


def area_weighted_mean(mesh: SurfaceMesh, values) -> float:
    values = np.asarray(values, dtype=float)
    return float(mesh.areas @ values / mesh.total_area)


def area_inner(mesh: SurfaceMesh, f, g) -> float:
    return float(np.sum(mesh.areas * np.asarray(f, dtype=float) * np.asarray(g, dtype=float)))


def area_norm(mesh: SurfaceMesh, values, p: float = 2.0) -> float:
    values = np.asarray(values, dtype=float)
    return float(np.sum(mesh.areas * np.abs(values) ** p) ** (1.0 / p))
