"""Boundary integral solver for polyharmonic boundary value problems.

Higher-order Poisson and fundamental-solution kernels, dense Nystrom
boundary operators on triangulated closed surfaces, triangular cascades of
second-kind solves for Dirichlet, Neumann, and regularity data, and a
verification harness of independent oracles.
"""

from .geometry import (
    MeshFormatError,
    MeshOrientationError,
    MeshStatistics,
    MeshTopologyError,
    SurfaceMesh,
    icosahedron,
    load_mesh,
    mesh_statistics,
    nontangential_samples,
    octahedron,
    save_mesh,
    sphere_mesh,
)
from .kernels import (
    BOUNDED,
    GRAPH,
    CoincidentPointsError,
    EqualRadiiError,
    KernelSpec,
    fundamental,
    fundamental_gradient,
    fundamental_growth,
    fundamental_kernel,
    poisson_component,
    poisson_field,
    poisson_growth,
    poisson_kernel,
)
from .operators import (
    DenseOperator,
    NearBoundaryError,
    adjoint_operator,
    area_inner,
    area_norm,
    area_weighted_mean,
    assemble_double_layer,
    assemble_fundamental_layer,
    assemble_poisson_layer,
    load_operator,
    newtonian_potential,
    newtonian_potential_ball,
    potential_fundamental,
    potential_fundamental_gradient,
    potential_poisson,
    potential_poisson_gradient,
    resolve_threads,
    save_operator,
)
from .solvers import (
    KINDS,
    BvpProblem,
    CascadeSolution,
    SingularSystemError,
    SolutionValues,
    SolveReport,
    evaluate,
    operator_cache,
    solve,
    solve_dirichlet,
    solve_neumann,
    solve_regularity,
)
from .ultraspherical import (
    ultraspherical_p,
    ultraspherical_p_table,
    ultraspherical_pq_table,
    ultraspherical_q,
)
from .verify import (
    CheckResult,
    ConvergenceRecord,
    ManufacturedSolution,
    convergence_study,
    fd_gradient,
    fd_laplacian,
    jump_relation_sweep,
    manufactured,
    manufactured_catalog,
    newtonian_compatibility,
    nontangential_max,
    norm_stability_study,
    run_suite,
    suite_names,
)

__version__ = "0.1.0"

__all__ = [
    "BOUNDED",
    "GRAPH",
    "KINDS",
    "BvpProblem",
    "CascadeSolution",
    "CheckResult",
    "CoincidentPointsError",
    "ConvergenceRecord",
    "DenseOperator",
    "EqualRadiiError",
    "KernelSpec",
    "ManufacturedSolution",
    "MeshFormatError",
    "MeshOrientationError",
    "MeshStatistics",
    "MeshTopologyError",
    "NearBoundaryError",
    "SingularSystemError",
    "SolutionValues",
    "SolveReport",
    "SurfaceMesh",
    "adjoint_operator",
    "area_inner",
    "area_norm",
    "area_weighted_mean",
    "assemble_double_layer",
    "assemble_fundamental_layer",
    "assemble_poisson_layer",
    "convergence_study",
    "evaluate",
    "fd_gradient",
    "fd_laplacian",
    "fundamental",
    "fundamental_gradient",
    "fundamental_growth",
    "fundamental_kernel",
    "icosahedron",
    "jump_relation_sweep",
    "load_mesh",
    "load_operator",
    "manufactured",
    "manufactured_catalog",
    "mesh_statistics",
    "newtonian_compatibility",
    "newtonian_potential",
    "newtonian_potential_ball",
    "nontangential_max",
    "nontangential_samples",
    "norm_stability_study",
    "octahedron",
    "operator_cache",
    "poisson_component",
    "poisson_field",
    "poisson_growth",
    "poisson_kernel",
    "potential_fundamental",
    "potential_fundamental_gradient",
    "potential_poisson",
    "potential_poisson_gradient",
    "resolve_threads",
    "run_suite",
    "save_mesh",
    "save_operator",
    "solve",
    "solve_dirichlet",
    "solve_neumann",
    "solve_regularity",
    "sphere_mesh",
    "suite_names",
    "ultraspherical_p",
    "ultraspherical_p_table",
    "ultraspherical_pq_table",
    "ultraspherical_q",
    "__version__",
]
