"""Triangular cascade solvers for polyharmonic boundary value problems.

A polyharmonic solution of order m is represented as a sum of m layer
potentials whose densities are determined stage by stage, from the highest
Laplacian trace down to the function trace. Each stage is one dense linear
solve; corrections from already-known higher densities enter the right-hand
side, so the overall system is block-triangular and never formed explicitly.

Families:
  dirichlet  -- normal-paired Poisson layers; stage matrix 1/2 I + T.
  neumann    -- fundamental-kernel layers; stage matrix 1/2 I - T*, which is
                the interior normal-derivative trace of the single layer in
                the kernel conventions used here (locked by the sphere
                eigenvalue checks in the test suite). The stage matrix
                annihilates constants, so stages are solved deflated, and
                the constant component of each intermediate density is
                chained from the solvability of the next stage down. The
                final density keeps mean zero: the solution is reported
                modulo an additive constant.
  regularity -- fundamental-kernel layers matched to value traces; stage
                matrix is the first-kind single-layer matrix, solved by
                pivoted LU with an optional spectral-cutoff fallback.

Laplacians of the reconstruction are evaluated by shifting the layer order
down, never by numerical differentiation: the analytic Laplacian of a
discrete layer sum of order j is exactly the discrete sum of order j - 1
with the same weights.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lu_factor, lu_solve, svd
from scipy.linalg.lapack import dgecon

from . import operators as ops
from .geometry import SurfaceMesh

__all__ = [
    "BvpProblem",
    "SolveReport",
    "SolutionValues",
    "CascadeSolution",
    "SingularSystemError",
    "operator_cache",
    "cached_operator",
    "solve_dirichlet",
    "solve_neumann",
    "solve_regularity",
    "solve",
    "evaluate",
]

KINDS = ("dirichlet", "neumann", "regularity")

STAGE_RESIDUAL_TOL = 1e-10
NEUMANN_MEAN_TOL = 1e-8
COMPAT_TOL = 1e-6
DEFAULT_SPECTRAL_CUTOFF = 1e-10


class SingularSystemError(np.linalg.LinAlgError):
    """A stage matrix is numerically singular; carries the stage index."""

    def __init__(self, message: str, stage: int, condition: float):
        super().__init__(message)
        self.stage = stage
        self.condition = condition


@dataclass(frozen=True)
class BvpProblem:
    """One boundary value problem: family, order, mesh, and m data vectors.

    data[k] holds panel values of the k-th trace: the Dirichlet/regularity
    value traces of the k-fold Laplacian, or the Neumann outward normal
    derivatives of the k-fold Laplacian.
    """

    kind: str
    order: int
    mesh: SurfaceMesh
    data: tuple

    def __post_init__(self):
        kind = str(self.kind).lower()
        if kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        if self.order < 1:
            raise ValueError("order must be >= 1")
        rows = []
        data = self.data if isinstance(self.data, (tuple, list)) else [self.data]
        if len(data) != self.order:
            raise ValueError(
                f"data must supply {self.order} boundary vectors, got {len(data)}"
            )
        for k, values in enumerate(data):
            values = np.ascontiguousarray(values, dtype=float)
            if values.shape != (self.mesh.panel_count,):
                raise ValueError(
                    f"data[{k}] must have one value per panel "
                    f"({self.mesh.panel_count}), got shape {values.shape}"
                )
            if not np.all(np.isfinite(values)):
                raise ValueError(f"data[{k}] contains non-finite values")
            values.flags.writeable = False
            rows.append(values)
        object.__setattr__(self, "data", tuple(rows))
        if kind == "neumann":
            g = self.data[-1]
            mean = float(self.mesh.areas @ g) / self.mesh.total_area
            rms = float(np.sqrt(self.mesh.areas @ (g * g) / self.mesh.total_area))
            if abs(mean) > NEUMANN_MEAN_TOL * rms + 1e-300:
                raise ValueError(
                    f"data[{self.order - 1}] must have area-weighted mean zero "
                    f"for the Neumann problem (|mean| = {abs(mean):.3e}, "
                    f"allowed {NEUMANN_MEAN_TOL:.0e} * rms = {NEUMANN_MEAN_TOL * rms:.3e})"
                )


@dataclass(frozen=True)
class SolveReport:
    """Solve diagnostics: residuals, conditioning, compatibility, timing."""

    kind: str
    order: int
    residuals: tuple
    condition: float
    timings: dict
    flags: dict
    compatibility: dict = field(default_factory=dict)
    regularization: float | None = None


@dataclass(frozen=True)
class SolutionValues:
    """Point values of a solution: u, its iterated Laplacians, and grad u.

    laplacians[k-1] holds the k-fold Laplacian for k = 1..m-1 (empty tuple
    when m = 1); gradient has one 3-vector per evaluation point.
    """

    u: np.ndarray
    laplacians: tuple
    gradient: np.ndarray


@dataclass(frozen=True)
class CascadeSolution:
    """Densities of the layer representation plus the solve report."""

    mesh: SurfaceMesh
    kind: str
    order: int
    densities: tuple
    report: SolveReport

    def evaluate(self, points, allow_near: bool = False) -> SolutionValues:
        return evaluate(self, points, allow_near=allow_near)


# -- operator cache -----------------------------------------------------------


def operator_cache(mesh: SurfaceMesh) -> dict:
    """Fresh cache for the dense operators and factorizations of one mesh."""
    return {"mesh": mesh}


def _cache_for(mesh: SurfaceMesh, cache: dict | None) -> dict:
    if cache is None:
        return {"mesh": mesh}
    if cache.setdefault("mesh", mesh) is not mesh:
        raise ValueError("operator cache belongs to a different mesh")
    return cache


def cached_operator(cache: dict, key, builder):
    """Fetch key from the cache, building and storing it on a miss."""
    if key not in cache:
        cache[key] = builder()
    return cache[key]


def _double_layer(cache, threads):
    return cached_operator(
        cache, ("T",), lambda: ops.assemble_double_layer(cache["mesh"], threads)
    )


def _double_layer_adjoint(cache, threads):
    return cached_operator(
        cache, ("TSTAR",), lambda: ops.adjoint_operator(_double_layer(cache, threads))
    )


def _poisson_layer(cache, order, threads):
    return cached_operator(
        cache,
        ("K", order),
        lambda: ops.assemble_poisson_layer(cache["mesh"], order, threads),
    )


def _poisson_layer_adjoint(cache, order, threads):
    return cached_operator(
        cache,
        ("KSTAR", order),
        lambda: ops.adjoint_operator(_poisson_layer(cache, order, threads)),
    )


def _fundamental_layer(cache, order, threads):
    return cached_operator(
        cache,
        ("S", order),
        lambda: ops.assemble_fundamental_layer(cache["mesh"], order, threads),
    )


# -- factorizations -----------------------------------------------------------


class _Factor:
    """Pivoted LU of a stage matrix with a 1-norm condition estimate."""

    def __init__(self, matrix: np.ndarray, stage_label: str):
        self.norm1 = float(np.abs(matrix).sum(axis=0).max())
        self.lu = lu_factor(matrix)
        rcond, info = dgecon(self.lu[0], self.norm1, norm="1")
        if info != 0:
            raise SingularSystemError(
                f"condition estimation failed for {stage_label}", 0, float("inf")
            )
        self.condition = 1.0 / max(float(rcond), 1e-300)
        self.stage_label = stage_label

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        return lu_solve(self.lu, rhs)


class _CutoffFactor:
    """SVD solve that drops singular values below cutoff * sigma_max."""

    def __init__(self, matrix: np.ndarray, cutoff: float):
        u, s, vt = svd(matrix, full_matrices=False)
        keep = s > cutoff * s[0]
        self.dropped = int(np.size(s) - np.count_nonzero(keep))
        self.condition = float(s[0] / s[keep][-1])
        self._ut = np.ascontiguousarray(u[:, keep].T)
        self._sinv = 1.0 / s[keep]
        self._v = np.ascontiguousarray(vt[keep].T)

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        return self._v @ (self._sinv * (self._ut @ rhs))


def _relative_residual(matrix, x, rhs) -> float:
    scale = float(np.linalg.norm(rhs))
    if scale == 0.0:
        return float(np.linalg.norm(matrix @ x))
    return float(np.linalg.norm(matrix @ x - rhs)) / scale


def _check_condition(factor, stage: int):
    if not np.isfinite(factor.condition) or factor.condition > 1e15:
        raise SingularSystemError(
            f"stage {stage} matrix is numerically singular "
            f"(condition estimate {factor.condition:.3e})",
            stage,
            factor.condition,
        )


# -- the three cascades --------------------------------------------------------


def solve_dirichlet(problem: BvpProblem, threads: int | None = None, cache: dict | None = None) -> CascadeSolution:
    """Back-substitute the value-trace cascade through 1/2 I + T solves.

    Stage l receives the value trace of the l-fold Laplacian minus the
    traces of the higher layers already determined; the solution is the sum
    of normal-paired Poisson potentials of the stage densities.
    """
    if problem.kind != "dirichlet":
        raise ValueError(f"expected a dirichlet problem, got {problem.kind!r}")
    mesh, m = problem.mesh, problem.order
    cache = _cache_for(mesh, cache)
    t0 = time.perf_counter()
    top = _double_layer(cache, threads)
    layers = {j: _poisson_layer(cache, j, threads) for j in range(2, m + 1)}
    t_asm = time.perf_counter() - t0

    t0 = time.perf_counter()
    factor = cached_operator(
        cache,
        ("LU", "dirichlet"),
        lambda: _Factor(0.5 * np.eye(mesh.panel_count) + top.matrix, "1/2 I + T"),
    )
    _check_condition(factor, m - 1)
    t_fac = time.perf_counter() - t0

    t0 = time.perf_counter()
    densities = [None] * m
    residuals = [0.0] * m
    stage_matrix = 0.5 * np.eye(mesh.panel_count) + top.matrix
    for l in range(m - 1, -1, -1):
        rhs = problem.data[l].copy()
        for j in range(l + 2, m + 1):
            rhs -= layers[j - l].apply(densities[j - 1])
        densities[l] = factor.solve(rhs)
        residuals[l] = _relative_residual(stage_matrix, densities[l], rhs)
    t_solve = time.perf_counter() - t0

    report = SolveReport(
        kind="dirichlet",
        order=m,
        residuals=tuple(residuals),
        condition=factor.condition,
        timings={
            "assembly": t_asm,
            "factorization": t_fac,
            "solve": t_solve,
            "total": t_asm + t_fac + t_solve,
        },
        flags={
            "stage_residuals_ok": all(r <= STAGE_RESIDUAL_TOL for r in residuals),
            "unique_up_to_constant": False,
        },
    )
    return CascadeSolution(mesh, "dirichlet", m, tuple(densities), report)


def solve_neumann(problem: BvpProblem, threads: int | None = None, cache: dict | None = None) -> CascadeSolution:
    """Back-substitute the normal-derivative cascade through deflated solves.

    The stage matrix 1/2 I - T* annihilates constants, so each right-hand
    side is projected to area-weighted mean zero (the projected amount is
    the reported stage compatibility defect) and the solve is deflated to
    pin the mean-free representative. For intermediate stages the dropped
    constant is recovered from the solvability of the next stage down; the
    lowest stage keeps mean zero, leaving the solution determined modulo an
    additive constant.
    """
    if problem.kind != "neumann":
        raise ValueError(f"expected a neumann problem, got {problem.kind!r}")
    mesh, m = problem.mesh, problem.order
    cache = _cache_for(mesh, cache)
    areas, total = mesh.areas, mesh.total_area
    ones = np.ones(mesh.panel_count)

    t0 = time.perf_counter()
    adj = _double_layer_adjoint(cache, threads)
    layers = {j: _poisson_layer_adjoint(cache, j, threads) for j in range(2, m + 1)}
    t_asm = time.perf_counter() - t0

    t0 = time.perf_counter()
    stage_matrix = 0.5 * np.eye(mesh.panel_count) - adj.matrix

    def build_factor():
        deflated = stage_matrix + np.outer(ones, areas) / total
        return _Factor(deflated, "deflated 1/2 I - T*")

    factor = cached_operator(cache, ("LU", "neumann"), build_factor)
    _check_condition(factor, m - 1)
    t_fac = time.perf_counter() - t0

    def stage_rhs(l, densities):
        rhs = problem.data[l].copy()
        for j in range(l + 2, m + 1):
            rhs += layers[j - l].apply(densities[j - 1])
        return rhs

    t0 = time.perf_counter()
    densities = [None] * m
    residuals = [0.0] * m
    defects = [0.0] * m
    if m >= 2:
        chain_weight = layers[2].apply(ones)
        chain_mass = float(areas @ chain_weight)
    for l in range(m - 1, -1, -1):
        rhs = stage_rhs(l, densities)
        mean = float(areas @ rhs) / total
        rms = float(np.sqrt(areas @ (rhs * rhs) / total))
        defects[l] = abs(mean) / (rms + 1e-300) if rms > 0.0 else abs(mean)
        projected = rhs - mean
        x = factor.solve(projected)
        residuals[l] = _relative_residual(stage_matrix, x, projected)
        if l >= 1:
            # fix the constant so the next stage's right-hand side integrates
            # to zero; the correction enters through the order-2 adjoint layer
            densities[l] = x
            pending = float(areas @ stage_rhs(l - 1, densities))
            densities[l] = x - (pending / chain_mass) * ones
        else:
            densities[l] = x
    t_solve = time.perf_counter() - t0

    moments = []
    for j in range(1, m):
        gj = densities[j]
        for l in range(1, j + 1):
            newton = -(_poisson_layer(cache, l + 1, threads).apply(ones))
            raw = float(areas @ (newton * gj))
            scale = float(
                np.sqrt(areas @ (newton * newton)) * np.sqrt(areas @ (gj * gj))
            )
            moments.append(
                {"l": l, "j": j, "value": raw, "normalized": raw / (scale + 1e-300)}
            )

    compatibility = {
        "stage_mean_defect": tuple(defects),
        "newtonian_moments": tuple(moments),
    }
    report = SolveReport(
        kind="neumann",
        order=m,
        residuals=tuple(residuals),
        condition=factor.condition,
        timings={
            "assembly": t_asm,
            "factorization": t_fac,
            "solve": t_solve,
            "total": t_asm + t_fac + t_solve,
        },
        flags={
            "stage_residuals_ok": all(r <= STAGE_RESIDUAL_TOL for r in residuals),
            "compatibility_ok": all(d <= COMPAT_TOL for d in defects[: m - 1])
            and defects[m - 1] <= NEUMANN_MEAN_TOL * 10,
            "unique_up_to_constant": True,
        },
        compatibility=compatibility,
    )
    return CascadeSolution(mesh, "neumann", m, tuple(densities), report)


def solve_regularity(
    problem: BvpProblem,
    threads: int | None = None,
    cache: dict | None = None,
    spectral_cutoff: float | None = None,
) -> CascadeSolution:
    """Back-substitute the value-trace cascade through first-kind solves.

    Every stage inverts the single-layer matrix; higher fundamental layers
    are subtracted from the right-hand side at the collocation nodes. Pass
    spectral_cutoff to replace the LU solve with a truncated-SVD solve that
    drops singular values below cutoff * sigma_max; the solver also falls
    back to that cutoff on its own when the LU condition estimate overflows.
    """
    if problem.kind != "regularity":
        raise ValueError(f"expected a regularity problem, got {problem.kind!r}")
    mesh, m = problem.mesh, problem.order
    cache = _cache_for(mesh, cache)

    t0 = time.perf_counter()
    single = _fundamental_layer(cache, 1, threads)
    layers = {j: _fundamental_layer(cache, j, threads) for j in range(2, m + 1)}
    t_asm = time.perf_counter() - t0

    t0 = time.perf_counter()
    used_cutoff = spectral_cutoff
    if spectral_cutoff is None:
        factor = cached_operator(
            cache,
            ("LU", "regularity"),
            lambda: _Factor(single.matrix.copy(), "single layer"),
        )
        if not np.isfinite(factor.condition) or factor.condition > 1e15:
            used_cutoff = DEFAULT_SPECTRAL_CUTOFF
    if used_cutoff is not None:
        factor = cached_operator(
            cache,
            ("SVD", "regularity", used_cutoff),
            lambda: _CutoffFactor(single.matrix, used_cutoff),
        )
    t_fac = time.perf_counter() - t0

    t0 = time.perf_counter()
    densities = [None] * m
    residuals = [0.0] * m
    for l in range(m - 1, -1, -1):
        rhs = problem.data[l].copy()
        for j in range(l + 2, m + 1):
            rhs -= layers[j - l].apply(densities[j - 1])
        densities[l] = factor.solve(rhs)
        residuals[l] = _relative_residual(single.matrix, densities[l], rhs)
    t_solve = time.perf_counter() - t0

    tol = STAGE_RESIDUAL_TOL if used_cutoff is None else 1e-6
    report = SolveReport(
        kind="regularity",
        order=m,
        residuals=tuple(residuals),
        condition=factor.condition,
        timings={
            "assembly": t_asm,
            "factorization": t_fac,
            "solve": t_solve,
            "total": t_asm + t_fac + t_solve,
        },
        flags={
            "stage_residuals_ok": all(r <= tol for r in residuals),
            "ill_conditioned": factor.condition > 1e12,
            "unique_up_to_constant": False,
        },
        regularization=used_cutoff,
    )
    return CascadeSolution(mesh, "regularity", m, tuple(densities), report)


_SOLVERS = {
    "dirichlet": solve_dirichlet,
    "neumann": solve_neumann,
    "regularity": solve_regularity,
}


def solve(problem: BvpProblem, threads: int | None = None, cache: dict | None = None) -> CascadeSolution:
    """Dispatch to the family-specific cascade."""
    return _SOLVERS[problem.kind](problem, threads=threads, cache=cache)


# -- evaluation -----------------------------------------------------------------


def evaluate(solution: CascadeSolution, points, allow_near: bool = False) -> SolutionValues:
    """Values, iterated Laplacians, and gradient of the layer reconstruction.

    The k-fold Laplacian is the same layer sum with every order lowered by
    k (layers of order <= k are annihilated), evaluated with identical
    quadrature weights, so no numerical differentiation is involved.
    """
    mesh, m, dens = solution.mesh, solution.order, solution.densities
    if solution.kind == "dirichlet":
        value_many = ops.potential_poisson_many
        grad_many = ops.potential_poisson_gradient_many
    else:
        value_many = ops.potential_fundamental_many
        grad_many = ops.potential_fundamental_gradient_many

    u = value_many(mesh, {j: dens[j - 1] for j in range(1, m + 1)}, points, allow_near)
    laplacians = tuple(
        value_many(
            mesh,
            {j - k: dens[j - 1] for j in range(k + 1, m + 1)},
            points,
            allow_near,
        )
        for k in range(1, m)
    )
    gradient = grad_many(
        mesh, {j: dens[j - 1] for j in range(1, m + 1)}, points, allow_near
    )
    return SolutionValues(u=u, laplacians=laplacians, gradient=gradient)
