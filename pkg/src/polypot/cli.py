"""Batch front door: parse a run configuration, ingest meshes and boundary
data, dispatch solves, verification suites, and convergence studies, and
emit machine readable reports.

Subcommands
-----------
solve      assemble and solve one boundary value problem
verify     run a named identity-check suite
converge   refinement study for a manufactured problem family
mesh-info  parse a mesh and print its statistics

Boundary data for ``solve`` is given by one ``--data`` tag per trace, in
trace order: ``const:<v>`` (constant panel values), ``coord:<j>`` (the j-th
collocation-node coordinate, 0-based), or ``expr:manufactured:<name>:<k>``
(the k-th trace of the named catalog solution, generated for the requested
problem kind).  Symbolic tags rather than free expressions keep the
provenance of every reported number auditable.

Reports land in the ``--out`` directory as ``report.json`` (configuration
echo, solver diagnostics, probe table, check verdicts, wall-clock timings)
and ``table.csv`` (fixed header ``level,probe,quantity,value,reference,
abs_err,rel_err``).  CSV bodies are deterministic for a fixed configuration
and thread count; timestamps appear only in report.json.

The environment variable ``POLYPOT_THREADS`` overrides any ``--threads``
value.  Exit status: 0 when every asserted check passes, 1 when a check
fails or the solver errors out, 2 on configuration errors (the message
names the offending field).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .geometry import (
    MeshFormatError,
    MeshOrientationError,
    MeshTopologyError,
    SurfaceMesh,
    load_mesh,
    mesh_statistics,
    sphere_mesh,
)
from .operators import DenseOperator, area_norm, resolve_threads, save_operator
from .solvers import KINDS, BvpProblem, SingularSystemError, operator_cache, solve
from .verify import (
    CSV_HEADER,
    CheckResult,
    convergence_study,
    manufactured,
    manufactured_catalog,
    probe_points,
    run_suite,
    suite_names,
    write_csv,
)

__all__ = [
    "ConfigError",
    "RunConfig",
    "RunReport",
    "main",
    "parse_data_spec",
    "resolve_mesh",
    "run",
]

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2

PROBE_FRACTIONS = (0.0, 0.3, 0.5, 0.7)

# Matched-reference probe tolerance. Generous enough to absorb the
# inscribed-polyhedron domain bias on coarse spheres (the discrete boundary
# sits slightly inside the ideal one); tighten per run with --tol.
DEFAULT_TOL = 5e-2

_DEFAULT_FAMILY = {
    "dirichlet": "radial-square",
    "neumann": "radial-plus-linear",
    "regularity": "radial-square",
}


class ConfigError(ValueError):
    """Invalid run configuration; carries the offending field name."""

    def __init__(self, field_name: str, message: str):
        self.field_name = field_name
        super().__init__(f"{field_name}: {message}")


# -- configuration ------------------------------------------------------------


@dataclass(frozen=True)
class RunConfig:
    """One validated CLI run: command plus everything it needs."""

    command: str
    mesh_source: str | None = None
    kind: str | None = None
    order: int = 1
    data_specs: tuple = ()
    solution: str | None = None
    levels: tuple = ()
    suite: str | None = None
    level: int = 3
    radius: float = 1.0
    tol: float = DEFAULT_TOL
    min_order: float = 1.0
    out_dir: str | None = None
    threads: int | None = None
    dump_operators: bool = False
    as_json: bool = False

    def validate(self) -> None:
        if self.command == "solve":
            if self.order < 1:
                raise ConfigError("m", f"order must be >= 1, got {self.order}")
            if len(self.data_specs) != self.order:
                raise ConfigError(
                    "data",
                    f"expected {self.order} --data entries (one per trace), got {len(self.data_specs)}",
                )
            if self.tol <= 0.0:
                raise ConfigError("tol", "tolerance must be positive")
            if self.dump_operators and self.out_dir is None:
                raise ConfigError("dump-operators", "requires --out")
        if self.command == "converge":
            if len(self.levels) < 2:
                raise ConfigError("levels", "need at least two levels, use lo:hi")
            if any(b <= a for a, b in zip(self.levels, self.levels[1:])):
                raise ConfigError("levels", f"levels must increase, got {self.levels}")
            if self.levels[0] < 0 or self.levels[-1] > 5:
                raise ConfigError("levels", f"levels must lie in 0..5, got {self.levels}")
        if self.command == "verify" and self.suite not in suite_names():
            raise ConfigError("suite", f"unknown suite {self.suite!r}; available: {', '.join(suite_names())}")
        if self.threads is not None and self.threads < 1:
            raise ConfigError("threads", "thread count must be >= 1")


@dataclass(frozen=True)
class RunReport:
    """Everything one run produced, ready for serialization."""

    config: RunConfig
    generated_at: str
    threads: int
    payload: dict
    rows: tuple
    checks: tuple
    timings: dict

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self) -> dict:
        return {
            "command": self.config.command,
            "config": asdict(self.config),
            "generated_at": self.generated_at,
            "threads": self.threads,
            **self.payload,
            "probes": [dict(r) for r in self.rows],
            "checks": [asdict(c) for c in self.checks],
            "passed": self.passed,
            "timings": self.timings,
        }


def _json_default(value):
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.bool_,)):
        return bool(value)
    raise TypeError(f"not JSON serializable: {type(value)!r}")


def _emit(report: RunReport, out_dir: str | None) -> None:
    for check in report.checks:
        print(check.line())
    if out_dir is None:
        return
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "report.json"), "w") as fh:
        json.dump(report.to_dict(), fh, indent=2, default=_json_default)
        fh.write("\n")
    write_csv(os.path.join(out_dir, "table.csv"), report.rows)


# -- mesh and data ingestion ---------------------------------------------------


def _infer_level(panel_count: int) -> int:
    """Refinement level of an icosphere-sized mesh, -1 when not one."""
    if panel_count % 20 == 0:
        quads = panel_count // 20
        level = 0
        while quads % 4 == 0:
            quads //= 4
            level += 1
        if quads == 1:
            return level
    return -1


def resolve_mesh(source: str | None) -> tuple[SurfaceMesh, int]:
    """Build the mesh named by ``sphere:<level>[:<radius>]`` or a file path.

    Returns the mesh and its refinement level (-1 for general files).
    """
    if source is None:
        raise ConfigError("mesh", "a mesh source is required (sphere:<level>:<radius> or a file path)")
    if source.startswith("sphere:"):
        parts = source.split(":")
        if len(parts) not in (2, 3):
            raise ConfigError("mesh", f"malformed sphere spec {source!r}, use sphere:<level>:<radius>")
        try:
            level = int(parts[1])
            radius = float(parts[2]) if len(parts) == 3 else 1.0
        except ValueError:
            raise ConfigError("mesh", f"malformed sphere spec {source!r}, use sphere:<level>:<radius>") from None
        if level < 0:
            raise ConfigError("mesh", f"sphere level must be >= 0, got {level}")
        if radius <= 0.0:
            raise ConfigError("mesh", f"sphere radius must be positive, got {radius}")
        return sphere_mesh(level, radius), level
    if not os.path.isfile(source):
        raise ConfigError("mesh", f"mesh file not found: {source}")
    try:
        mesh = load_mesh(source)
    except (MeshFormatError, MeshTopologyError, MeshOrientationError, ValueError) as exc:
        raise ConfigError("mesh", f"cannot read mesh file {source}: {exc}") from exc
    return mesh, _infer_level(mesh.panel_count)


def parse_data_spec(spec: str, index: int, kind: str, mesh: SurfaceMesh) -> np.ndarray:
    """One boundary data vector from its symbolic tag."""
    parts = spec.split(":")
    tag = parts[0]
    if tag == "const" and len(parts) == 2:
        try:
            value = float(parts[1])
        except ValueError:
            raise ConfigError("data", f"entry {index}: malformed constant in {spec!r}") from None
        return np.full(mesh.panel_count, value)
    if tag == "coord" and len(parts) == 2:
        try:
            axis = int(parts[1])
        except ValueError:
            raise ConfigError("data", f"entry {index}: malformed axis in {spec!r}") from None
        if not 0 <= axis < 3:
            raise ConfigError("data", f"entry {index}: axis must be 0, 1, or 2 in {spec!r}")
        return mesh.centroids[:, axis].copy()
    if tag == "expr":
        if len(parts) != 4 or parts[1] != "manufactured":
            raise ConfigError("data", f"entry {index}: use expr:manufactured:<name>:<k>, got {spec!r}")
        try:
            entry = manufactured(parts[2])
        except KeyError as exc:
            raise ConfigError("data", f"entry {index}: {exc.args[0]}") from None
        try:
            k = int(parts[3])
        except ValueError:
            raise ConfigError("data", f"entry {index}: malformed trace index in {spec!r}") from None
        if not 0 <= k < entry.order:
            raise ConfigError(
                "data",
                f"entry {index}: trace index {k} out of range for {entry.name!r} (order {entry.order})",
            )
        return entry.data_for(kind, mesh)[k]
    raise ConfigError(
        "data",
        f"entry {index}: unknown tag {spec!r} (use const:<v>, coord:<j>, expr:manufactured:<name>:<k>)",
    )


def _match_reference(kind: str, order: int, data, mesh: SurfaceMesh):
    """Catalog solution whose traces reproduce the supplied data, if any.

    Matching is numeric (area-weighted relative residual <= 5e-2) so that
    constant tags hit the catalog entry they were derived from; the match
    and its residual are echoed in the report for auditability.
    """
    best = None
    for entry in manufactured_catalog():
        if entry.order != order:
            continue
        ref = entry.data_for(kind, mesh)
        scale = max(max(area_norm(mesh, r) for r in ref), 1e-12)
        resid = max(area_norm(mesh, np.asarray(d) - r) for d, r in zip(data, ref)) / scale
        if resid <= 5e-2 and (best is None or resid < best[1]):
            best = (entry, resid)
    return best if best is not None else (None, None)


# -- solve ---------------------------------------------------------------------


def _interior_probes(mesh: SurfaceMesh, fractions=PROBE_FRACTIONS):
    """Probe points at fixed ball fractions inside the mesh."""
    center = mesh.vertices.mean(axis=0)
    # summation roundoff in the vertex mean would otherwise contaminate the
    # relative-error column for references that vanish at the center
    extent = float(np.max(np.abs(mesh.vertices)))
    center[np.abs(center) < 1e-12 * extent] = 0.0
    rad = float(np.min(np.linalg.norm(mesh.vertices - center, axis=1)))
    pts, labels = probe_points(rad, fractions)
    return pts + center, labels


def _probe_rows(level, labels, quantities, per_probe, matched):
    rows = []
    for q in quantities:
        got, ref = per_probe[q]
        for i, label in enumerate(labels):
            value = float(got[i])
            if matched:
                r = float(ref[i])
                a = abs(value - r)
                rows.append(
                    {
                        "level": level,
                        "probe": label,
                        "quantity": q,
                        "value": value,
                        "reference": r,
                        "abs_err": a,
                        "rel_err": a / abs(r) if r != 0.0 else a,
                    }
                )
            else:
                rows.append(
                    {
                        "level": level,
                        "probe": label,
                        "quantity": q,
                        "value": value,
                        "reference": "",
                        "abs_err": "",
                        "rel_err": "",
                    }
                )
    return rows


def _run_solve(config: RunConfig) -> RunReport:
    timings: dict[str, float] = {}
    t_total = time.perf_counter()

    t0 = time.perf_counter()
    mesh, level = resolve_mesh(config.mesh_source)
    timings["mesh"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    data = tuple(
        parse_data_spec(spec, k, config.kind, mesh) for k, spec in enumerate(config.data_specs)
    )
    timings["data"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    cache = operator_cache(mesh)
    problem = BvpProblem(kind=config.kind, order=config.order, mesh=mesh, data=data)
    solution = solve(problem, threads=config.threads, cache=cache)
    timings["solve"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    pts, labels = _interior_probes(mesh)
    # Outer probes may graze the coarse-mesh resolution band; the probe
    # protocol is fixed, so evaluation there is deliberate.
    out = solution.evaluate(pts, allow_near=True)
    entry, match_resid = _match_reference(config.kind, config.order, data, mesh)

    got_u = out.u.copy()
    per_probe = {"u": (got_u, None)}
    quantities = ["u", "grad"] + [f"lap{k}" for k in range(1, config.order)]
    if entry is not None:
        ref_u = entry.value(pts)
        if config.kind == "neumann":
            got_u -= float(np.mean(got_u - ref_u))
        ref_grad = entry.gradient(pts)
        per_probe = {
            "u": (got_u, ref_u),
            "grad": (np.linalg.norm(out.gradient, axis=1), np.linalg.norm(ref_grad, axis=1)),
        }
        for k in range(1, config.order):
            per_probe[f"lap{k}"] = (out.laplacians[k - 1], entry.laplacian(k, pts))
    else:
        per_probe["grad"] = (np.linalg.norm(out.gradient, axis=1), None)
        for k in range(1, config.order):
            per_probe[f"lap{k}"] = (out.laplacians[k - 1], None)
    rows = _probe_rows(level, labels, quantities, per_probe, entry is not None)
    timings["evaluate"] = time.perf_counter() - t0

    checks = []
    worst_resid = max(solution.report.residuals) if solution.report.residuals else 0.0
    checks.append(
        CheckResult(
            "stage residuals",
            worst_resid <= 1e-8,
            float(worst_resid),
            1e-8,
            f"{config.order} stage(s), direct solves",
        )
    )
    if entry is not None:
        worst = 0.0
        for q in quantities:
            got, ref = per_probe[q]
            scale = float(np.linalg.norm(ref))
            err = float(np.linalg.norm(got - ref))
            worst = max(worst, err / scale if scale > 0.0 else err)
        checks.append(
            CheckResult(
                "probe error vs matched reference",
                worst <= config.tol,
                worst,
                config.tol,
                f"reference {entry.name!r}, data residual {match_resid:.2e}",
            )
        )

    if config.dump_operators:
        os.makedirs(config.out_dir, exist_ok=True)
        for value in cache.values():
            if isinstance(value, DenseOperator):
                save_operator(value, os.path.join(config.out_dir, f"{value.kind}.bin"))

    timings["total"] = time.perf_counter() - t_total
    payload = {
        "mesh": {
            "source": config.mesh_source,
            "level": level,
            "panels": mesh.panel_count,
            "vertices": len(mesh.vertices),
        },
        "solve": asdict(solution.report),
        "reference": {
            "matched": entry.name if entry is not None else None,
            "data_residual": match_resid,
        },
    }
    return RunReport(
        config=config,
        generated_at=_utc_stamp(),
        threads=resolve_threads(config.threads),
        payload=payload,
        rows=tuple(rows),
        checks=tuple(checks),
        timings=timings,
    )


# -- verify / converge / mesh-info ---------------------------------------------


def _run_verify(config: RunConfig) -> RunReport:
    t0 = time.perf_counter()
    results = run_suite(config.suite, level=config.level, threads=config.threads)
    timings = {"suite": time.perf_counter() - t0, "total": time.perf_counter() - t0}
    payload = {"suite": config.suite, "level": config.level}
    return RunReport(
        config=config,
        generated_at=_utc_stamp(),
        threads=resolve_threads(config.threads),
        payload=payload,
        rows=(),
        checks=tuple(results),
        timings=timings,
    )


def _run_converge(config: RunConfig) -> RunReport:
    t0 = time.perf_counter()
    record = convergence_study(
        config.kind,
        config.solution,
        levels=config.levels,
        radius=config.radius,
        threads=config.threads,
    )
    timings = {"study": time.perf_counter() - t0, "total": time.perf_counter() - t0}

    errs = record.errors["u"]
    checks = []
    if max(errs) <= 1e-12:
        checks.append(CheckResult("u errors negligible", True, max(errs), 1e-12, "zero-data family"))
    else:
        decreasing = all(b < a for a, b in zip(errs, errs[1:]))
        checks.append(
            CheckResult(
                "u error decreases under refinement",
                decreasing,
                float(errs[-1] / errs[0]),
                1.0,
                f"levels {record.levels}",
            )
        )
        fitted = record.fitted_orders["u"]
        checks.append(
            CheckResult(
                "u convergence order",
                bool(fitted >= config.min_order),
                float(fitted),
                float(config.min_order),
                "tolerance is a lower bound here",
            )
        )
    payload = {
        "study": {
            "kind": record.kind,
            "order": record.order,
            "solution": record.solution,
            "levels": list(record.levels),
            "mesh_sizes": list(record.mesh_sizes),
            "errors": {q: list(v) for q, v in record.errors.items()},
            "fitted_orders": record.fitted_orders,
        }
    }
    return RunReport(
        config=config,
        generated_at=_utc_stamp(),
        threads=resolve_threads(config.threads),
        payload=payload,
        rows=tuple(record.rows),
        checks=tuple(checks),
        timings=timings,
    )


def _run_mesh_info(config: RunConfig) -> int:
    mesh, level = resolve_mesh(config.mesh_source)
    stats = mesh_statistics(mesh)
    info = {"source": config.mesh_source, "level": level, **asdict(stats)}
    if config.as_json:
        print(json.dumps(info, indent=2, default=_json_default))
    else:
        width = max(len(k) for k in info)
        for key, value in info.items():
            if isinstance(value, float):
                print(f"{key:<{width}}  {value:.12g}")
            else:
                print(f"{key:<{width}}  {value}")
    return EXIT_OK


def _utc_stamp() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())


# -- dispatch ------------------------------------------------------------------


def run(config: RunConfig) -> int:
    """Validate and execute one run; returns the process exit code."""
    config.validate()
    if config.command == "mesh-info":
        return _run_mesh_info(config)
    if config.command == "solve":
        report = _run_solve(config)
    elif config.command == "verify":
        report = _run_verify(config)
    elif config.command == "converge":
        report = _run_converge(config)
    else:
        raise ConfigError("command", f"unknown command {config.command!r}")
    _emit(report, config.out_dir)
    return EXIT_OK if report.passed else EXIT_CHECK_FAILED


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="polypot",
        description="Boundary integral solver for polyharmonic boundary value problems.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="solve one boundary value problem")
    p_solve.add_argument("kind", choices=KINDS)
    p_solve.add_argument("--mesh", required=True, help="sphere:<level>:<radius> or a POLYMESH file path")
    p_solve.add_argument("--m", type=int, required=True, dest="order", help="problem order (>= 1)")
    p_solve.add_argument(
        "--data",
        action="append",
        default=[],
        help="one tag per trace: const:<v> | coord:<j> | expr:manufactured:<name>:<k>",
    )
    p_solve.add_argument("--tol", type=float, default=DEFAULT_TOL, help="probe-error tolerance vs a matched reference")
    p_solve.add_argument("--out", default=None, help="directory for report.json and table.csv")
    p_solve.add_argument("--threads", type=int, default=None)
    p_solve.add_argument("--dump-operators", action="store_true", help="save assembled matrices next to the report")

    p_verify = sub.add_parser("verify", help="run an identity-check suite")
    p_verify.add_argument("suite", choices=suite_names())
    p_verify.add_argument("--level", type=int, default=3, help="sphere refinement level for mesh-based suites")
    p_verify.add_argument("--out", default=None, help="directory for report.json")
    p_verify.add_argument("--threads", type=int, default=None)

    p_conv = sub.add_parser("converge", help="refinement study for a manufactured family")
    p_conv.add_argument("kind", choices=KINDS)
    p_conv.add_argument("--solution", default=None, help="catalog solution name (defaults per kind)")
    p_conv.add_argument("--levels", default="2:4", help="inclusive refinement range lo:hi")
    p_conv.add_argument("--radius", type=float, default=1.0)
    p_conv.add_argument("--min-order", type=float, default=1.0, dest="min_order")
    p_conv.add_argument("--out", default=None, help="directory for report.json and table.csv")
    p_conv.add_argument("--threads", type=int, default=None)

    p_info = sub.add_parser("mesh-info", help="parse a mesh and print statistics")
    p_info.add_argument("mesh", help="sphere:<level>:<radius> or a POLYMESH file path")
    p_info.add_argument("--json", action="store_true", dest="as_json")

    return parser


def _parse_levels(text: str) -> tuple:
    parts = text.split(":")
    if len(parts) != 2:
        raise ConfigError("levels", f"use lo:hi, got {text!r}")
    try:
        lo, hi = int(parts[0]), int(parts[1])
    except ValueError:
        raise ConfigError("levels", f"use integer lo:hi, got {text!r}") from None
    return tuple(range(lo, hi + 1))


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    if args.command == "solve":
        return RunConfig(
            command="solve",
            mesh_source=args.mesh,
            kind=args.kind,
            order=args.order,
            data_specs=tuple(args.data),
            tol=args.tol,
            out_dir=args.out,
            threads=args.threads,
            dump_operators=args.dump_operators,
        )
    if args.command == "verify":
        return RunConfig(
            command="verify",
            suite=args.suite,
            level=args.level,
            out_dir=args.out,
            threads=args.threads,
        )
    if args.command == "converge":
        return RunConfig(
            command="converge",
            kind=args.kind,
            solution=args.solution or _DEFAULT_FAMILY[args.kind],
            levels=_parse_levels(args.levels),
            radius=args.radius,
            min_order=args.min_order,
            out_dir=args.out,
            threads=args.threads,
        )
    return RunConfig(command="mesh-info", mesh_source=args.mesh, as_json=args.as_json)


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        config = _config_from_args(args)
        return run(config)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SingularSystemError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_CHECK_FAILED


if __name__ == "__main__":
    sys.exit(main())
