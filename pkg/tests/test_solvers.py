"""Cascade solvers: problem validation, the three families, evaluation."""

import numpy as np
import pytest

from polypot import operators as ops
from polypot import solvers as sv
from polypot.verify import fd_laplacian, manufactured

PROBES = np.array(
    [
        [0.0, 0.0, 0.0],
        [0.3, 0.0, 0.0],
        [0.0, 0.5, 0.0],
        [-0.2, 0.3, 0.4],
    ]
)


# -- problem validation -----------------------------------------------------------


def test_problem_validation(mesh2):
    ones = np.ones(mesh2.panel_count)
    with pytest.raises(ValueError, match="kind"):
        sv.BvpProblem("robin", 1, mesh2, [ones])
    with pytest.raises(ValueError, match="order"):
        sv.BvpProblem("dirichlet", 0, mesh2, [])
    with pytest.raises(ValueError, match="2 boundary vectors"):
        sv.BvpProblem("dirichlet", 2, mesh2, [ones])
    with pytest.raises(ValueError, match=r"data\[0\]"):
        sv.BvpProblem("dirichlet", 1, mesh2, [np.ones(5)])
    bad = ones.copy()
    bad[3] = np.nan
    with pytest.raises(ValueError, match="non-finite"):
        sv.BvpProblem("dirichlet", 1, mesh2, [bad])
    # family names are case-insensitive
    assert sv.BvpProblem("DIRICHLET", 1, mesh2, [ones]).kind == "dirichlet"


def test_neumann_requires_mean_zero_top_trace(mesh2):
    ones = np.ones(mesh2.panel_count)
    with pytest.raises(ValueError, match="mean zero"):
        sv.BvpProblem("neumann", 1, mesh2, [ones])
    # the constraint binds the top trace only
    x1 = mesh2.centroids[:, 0]
    problem = sv.BvpProblem("neumann", 2, mesh2, [ones + x1, x1])
    assert problem.order == 2


def test_problem_data_is_frozen(mesh2):
    ones = np.ones(mesh2.panel_count)
    problem = sv.BvpProblem("dirichlet", 1, mesh2, [ones])
    with pytest.raises(ValueError):
        problem.data[0][0] = 2.0


# -- dirichlet cascade ------------------------------------------------------------


def test_dirichlet_constant_data_is_exact(mesh2, cache2):
    problem = sv.BvpProblem("dirichlet", 1, mesh2, [np.ones(mesh2.panel_count)])
    sol = sv.solve(problem, cache=cache2)
    # the stage matrix maps the constant density to the constant trace
    assert np.max(np.abs(sol.densities[0] - 1.0)) < 1e-13
    vals = sol.evaluate(PROBES)
    assert np.max(np.abs(vals.u - 1.0)) < 1e-3
    assert vals.laplacians == ()


def test_dirichlet_harmonic_coordinate(mesh2, cache2):
    f = mesh2.centroids[:, 0]
    sol = sv.solve(sv.BvpProblem("dirichlet", 1, mesh2, [f]), cache=cache2)
    vals = sol.evaluate(PROBES[1:])
    assert np.max(np.abs(vals.u - PROBES[1:, 0])) < 5e-3
    assert np.max(np.abs(vals.gradient - (1.0, 0.0, 0.0))) < 1e-2


def test_dirichlet_biharmonic_manufactured(mesh3, cache3):
    ms = manufactured("radial-square")
    problem = sv.BvpProblem("dirichlet", 2, mesh3, ms.dirichlet_data(mesh3))
    sol = sv.solve(problem, cache=cache3)
    vals = sol.evaluate(PROBES)
    want_u = np.einsum("pk,pk->p", PROBES, PROBES)
    assert np.max(np.abs(vals.u - want_u)) < 5e-4
    assert np.max(np.abs(vals.laplacians[0] - 6.0)) < 1e-3
    assert np.max(np.abs(vals.gradient - 2.0 * PROBES)) < 1e-3
    assert sol.report.flags["stage_residuals_ok"]
    assert max(sol.report.residuals) < 1e-12
    assert sol.report.condition > 1.0


def test_dirichlet_cascade_is_triangular(mesh2, cache2):
    # the top-stage density depends only on the top trace: replacing the
    # lower trace must reproduce the same stage-2 density bit for bit
    rng = np.random.default_rng(3)
    f1 = mesh2.centroids[:, 0] ** 2
    a = sv.solve(
        sv.BvpProblem("dirichlet", 2, mesh2, [rng.normal(size=mesh2.panel_count), f1]),
        cache=cache2,
    )
    b = sv.solve(
        sv.BvpProblem("dirichlet", 2, mesh2, [rng.normal(size=mesh2.panel_count), f1]),
        cache=cache2,
    )
    assert a.densities[1].tobytes() == b.densities[1].tobytes()
    assert a.densities[0].tobytes() != b.densities[0].tobytes()


def test_zero_data_gives_zero_solution(mesh2, cache2):
    ms = manufactured("zero")
    sol = sv.solve(
        sv.BvpProblem("dirichlet", 2, mesh2, ms.dirichlet_data(mesh2)), cache=cache2
    )
    assert np.max(np.abs(np.concatenate(sol.densities))) < 1e-14
    vals = sol.evaluate(PROBES)
    assert np.max(np.abs(vals.u)) < 1e-14
    assert np.max(np.abs(vals.gradient)) < 1e-14


# -- neumann cascade ---------------------------------------------------------------


def test_neumann_linear_flux(mesh2, cache2):
    ms = manufactured("linear")
    problem = sv.BvpProblem("neumann", 1, mesh2, ms.neumann_data(mesh2))
    sol = sv.solve(problem, cache=cache2)
    vals = sol.evaluate(PROBES)
    # determined modulo a constant: the gradient and u differences match
    assert np.max(np.abs(vals.gradient - (1.0, 0.0, 0.0))) < 3e-2
    drift = (vals.u - vals.u[0]) - (PROBES[:, 0] - PROBES[0, 0])
    assert np.max(np.abs(drift)) < 1e-2
    assert sol.report.flags["unique_up_to_constant"]
    assert sol.report.flags["compatibility_ok"]
    defects = sol.report.compatibility["stage_mean_defect"]
    assert len(defects) == 1 and defects[0] < 1e-12


def test_neumann_biharmonic_manufactured(mesh2, cache2):
    ms = manufactured("radial-plus-linear")
    problem = sv.BvpProblem("neumann", 2, mesh2, ms.neumann_data(mesh2))
    sol = sv.solve(problem, cache=cache2)
    vals = sol.evaluate(PROBES)
    want_grad = 2.0 * PROBES + (1.0, 0.0, 0.0)
    assert np.max(np.abs(vals.gradient - want_grad)) < 5e-2
    moments = sol.report.compatibility["newtonian_moments"]
    assert [(mo["l"], mo["j"]) for mo in moments] == [(1, 1)]
    assert all(np.isfinite(mo["normalized"]) for mo in moments)
    # the solve pins the next stage's solvability: the lower right-hand side
    # integrates to zero after the constant recovery
    assert sol.report.flags["stage_residuals_ok"]


def test_neumann_solution_mean_free_representative(mesh2, cache2):
    ms = manufactured("linear")
    sol = sv.solve(
        sv.BvpProblem("neumann", 1, mesh2, ms.neumann_data(mesh2)), cache=cache2
    )
    # the deflated solve returns the area-weighted mean-free density
    assert abs(ops.area_weighted_mean(mesh2, sol.densities[0])) < 1e-12


# -- regularity cascade --------------------------------------------------------------


def test_regularity_first_kind_solve(mesh2, cache2):
    f = mesh2.centroids[:, 0]
    sol = sv.solve(sv.BvpProblem("regularity", 1, mesh2, [f]), cache=cache2)
    vals = sol.evaluate(PROBES[1:])
    assert np.max(np.abs(vals.u - PROBES[1:, 0])) < 1e-2
    assert sol.report.regularization is None
    assert np.isfinite(sol.report.condition) and sol.report.condition > 1.0
    assert "ill_conditioned" in sol.report.flags


def test_regularity_spectral_cutoff_path(mesh2, cache2):
    f = mesh2.centroids[:, 0]
    problem = sv.BvpProblem("regularity", 1, mesh2, [f])
    sol = sv.solve_regularity(problem, cache=cache2, spectral_cutoff=1e-10)
    assert sol.report.regularization == 1e-10
    vals = sol.evaluate(PROBES[1:])
    assert np.max(np.abs(vals.u - PROBES[1:, 0])) < 1e-2


def test_regularity_biharmonic_manufactured(mesh2, cache2):
    ms = manufactured("radial-square")
    sol = sv.solve(
        sv.BvpProblem("regularity", 2, mesh2, ms.regularity_data(mesh2)), cache=cache2
    )
    vals = sol.evaluate(PROBES)
    want_u = np.einsum("pk,pk->p", PROBES, PROBES)
    assert np.max(np.abs(vals.u - want_u)) < 2e-2
    assert np.max(np.abs(vals.laplacians[0] - 6.0)) < 5e-2


# -- dispatch and caching --------------------------------------------------------------


def test_solver_dispatch_and_kind_guards(mesh2, cache2):
    f = [mesh2.centroids[:, 0]]
    dirichlet = sv.BvpProblem("dirichlet", 1, mesh2, f)
    with pytest.raises(ValueError, match="neumann"):
        sv.solve_neumann(dirichlet, cache=cache2)
    with pytest.raises(ValueError, match="regularity"):
        sv.solve_regularity(dirichlet, cache=cache2)
    with pytest.raises(ValueError, match="dirichlet"):
        sv.solve_dirichlet(
            sv.BvpProblem("regularity", 1, mesh2, f), cache=cache2
        )


def test_cache_is_shared_and_mesh_bound(mesh2, cache2):
    f = [np.ones(mesh2.panel_count)]
    sv.solve(sv.BvpProblem("dirichlet", 1, mesh2, f), cache=cache2)
    assert ("T",) in cache2 and ("LU", "dirichlet") in cache2
    second = sv.solve(sv.BvpProblem("dirichlet", 1, mesh2, f), cache=cache2)
    # a warm cache skips assembly and factorization almost entirely
    assert second.report.timings["assembly"] < 0.05
    assert second.report.timings["factorization"] < 0.05
    from polypot.geometry import sphere_mesh

    with pytest.raises(ValueError, match="different mesh"):
        sv.solve(sv.BvpProblem("dirichlet", 1, sphere_mesh(0), [np.ones(20)]), cache=cache2)


def test_singular_system_error_payload():
    err = sv.SingularSystemError("stage matrix is singular", 2, 3.5e16)
    assert err.stage == 2
    assert err.condition == 3.5e16
    assert isinstance(err, np.linalg.LinAlgError)


# -- evaluation ------------------------------------------------------------------------


def test_evaluate_laplacian_chain_and_polyharmonicity(mesh3, cache3):
    ms = manufactured("radial-square")
    sol = sv.solve(
        sv.BvpProblem("dirichlet", 2, mesh3, ms.dirichlet_data(mesh3)), cache=cache3
    )
    p = np.array([0.15, -0.2, 0.1])
    vals = sol.evaluate(p[None])

    def u_of(X):
        return sol.evaluate(np.atleast_2d(X)).u

    def lap_of(X):
        return sol.evaluate(np.atleast_2d(X)).laplacians[0]

    # independent finite-difference route for the evaluator's Laplacian chain
    assert fd_laplacian(u_of, p, step=0.03) == pytest.approx(
        float(vals.laplacians[0][0]), rel=1e-3, abs=1e-3
    )
    # the top of the chain is harmonic: one more Laplacian vanishes
    assert abs(fd_laplacian(lap_of, p, step=0.03)) < 1e-2


def test_evaluate_order_shift_identity(mesh2, cache2):
    ms = manufactured("radial-square")
    sol = sv.solve(
        sv.BvpProblem("dirichlet", 2, mesh2, ms.dirichlet_data(mesh2)), cache=cache2
    )
    pts = PROBES[:2]
    direct = ops.potential_poisson(mesh2, 1, sol.densities[1], pts)
    assert sol.evaluate(pts).laplacians[0] == pytest.approx(direct, rel=1e-14)


def test_evaluate_near_boundary_guard(mesh2, cache2):
    sol = sv.solve(
        sv.BvpProblem("dirichlet", 1, mesh2, [np.ones(mesh2.panel_count)]),
        cache=cache2,
    )
    close = 0.999 * mesh2.centroids[0]
    with pytest.raises(ops.NearBoundaryError):
        sol.evaluate(close[None])
    vals = sol.evaluate(close[None], allow_near=True)
    assert np.isfinite(vals.u).all()
