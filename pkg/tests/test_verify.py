"""Verification harness: FD oracles, manufactured catalog, sweeps, studies."""

import numpy as np
import pytest

from polypot import verify as vf


# -- finite-difference oracles -----------------------------------------------------


def test_fd_gradient_on_polynomial():
    def f(X):
        X = np.atleast_2d(X)
        return X[:, 0] ** 3 * X[:, 1] - 2.0 * X[:, 2] ** 2

    p = np.array([0.4, -0.3, 0.2])
    want = np.array([3 * 0.4**2 * -0.3, 0.4**3, -4.0 * 0.2])
    got = vf.fd_gradient(f, p, step=0.05)
    assert np.max(np.abs(got - want)) < 1e-10


def test_fd_laplacian_on_polynomial():
    def f(X):
        X = np.atleast_2d(X)
        return X[:, 0] ** 2 + 2.0 * X[:, 1] ** 2 + 3.0 * X[:, 2] ** 2

    assert vf.fd_laplacian(f, np.array([0.3, 0.1, -0.2]), step=0.05) == pytest.approx(
        12.0, abs=1e-9
    )


# -- manufactured catalog ------------------------------------------------------------


def test_catalog_entries_self_check():
    for entry in vf.manufactured_catalog():
        assert entry.self_check() < 1e-9, entry.name


def test_catalog_lookup_and_errors():
    ms = vf.manufactured("radial-square")
    assert ms.order == 2
    with pytest.raises(KeyError, match="available"):
        vf.manufactured("missing-name")
    with pytest.raises(ValueError):
        vf.manufactured_catalog(boundary_dim=3)


def test_manufactured_data_shapes(mesh2):
    ms = vf.manufactured("radial-plus-linear")
    for kind in ("dirichlet", "neumann", "regularity"):
        data = ms.data_for(kind, mesh2)
        assert len(data) == ms.order
        assert all(d.shape == (mesh2.panel_count,) for d in data)
    with pytest.raises(ValueError):
        ms.data_for("robin", mesh2)
    # the top Neumann trace of this entry vanishes, so it is solvable as-is
    assert np.max(np.abs(ms.neumann_data(mesh2)[1])) == 0.0


# -- jump-relation sweeps -------------------------------------------------------------


def test_jump_sweep_value_mode(mesh2, cache2):
    from polypot.geometry import interpolation_scale

    x1 = mesh2.centroids[:, 0]
    sweeps = vf.jump_relation_sweep(
        mesh2, x1, order=1, mode="value", panels=[0, 100, 250], cache=cache2
    )
    assert [s.panel for s in sweeps] == [0, 100, 250]
    T = cache2[("T",)]
    scale = interpolation_scale(mesh2, x1)
    for s in sweeps:
        assert s.mode == "value" and s.order == 1
        assert s.target == pytest.approx(0.5 * x1[s.panel] + T.apply(x1)[s.panel])
        assert s.band == pytest.approx(float(mesh2.diameters[s.panel]))
        assert np.array_equal(s.errors, np.abs(s.values - s.target))
        above = s.errors[s.distances >= s.band]
        assert above.min() < 3.0 * scale
        assert vf.sweep_decreasing(s)


def test_jump_sweep_normal_mode(mesh2, cache2):
    x1 = mesh2.centroids[:, 0]
    sweeps = vf.jump_relation_sweep(
        mesh2, x1, order=1, mode="normal", panels=[5], cache=cache2
    )
    (s,) = sweeps
    Ts = cache2[("TSTAR",)]
    assert s.target == pytest.approx(0.5 * x1[5] - Ts.apply(x1)[5])


def test_jump_sweep_validation(mesh2, cache2):
    with pytest.raises(ValueError, match="per panel"):
        vf.jump_relation_sweep(mesh2, np.ones(4), cache=cache2)
    with pytest.raises(ValueError, match="mode"):
        vf.jump_relation_sweep(
            mesh2, np.ones(mesh2.panel_count), mode="sideways", cache=cache2
        )


def test_sweep_decreasing_synthetic():
    def sweep_with(errors, band=0.1):
        errors = np.asarray(errors, dtype=float)
        d = 1.0 * 0.5 ** np.arange(len(errors))
        return vf.JumpSweep(
            panel=0,
            mode="value",
            order=1,
            target=0.0,
            band=band,
            distances=d,
            values=errors.copy(),
            errors=errors,
        )

    assert vf.sweep_decreasing(sweep_with([0.8, 0.4, 0.2, 0.1]))
    assert not vf.sweep_decreasing(sweep_with([0.8, 0.4, 0.2, 0.9]))
    # wiggle below the saturation floor is tolerated
    assert vf.sweep_decreasing(sweep_with([0.8, 0.4, 0.01, 0.012]), noise=0.2)
    # samples inside the resolution band are exempt from the decrease demand
    spiky_tail = sweep_with([0.8, 0.4, 0.2, 0.1, 5.0, 9.0], band=0.09)
    assert vf.sweep_decreasing(spiky_tail)


# -- non-tangential maximal function ---------------------------------------------------


def test_nontangential_max_constant_field(mesh2):
    mf = vf.nontangential_max(lambda X: np.ones(len(X)), mesh2, count=8)
    assert np.all(mf.sample_counts > 0)
    assert mf.values == pytest.approx(np.ones(mesh2.panel_count))
    assert mf.norm(mesh2) == pytest.approx(np.sqrt(mesh2.total_area), rel=1e-12)


def test_nontangential_max_vector_field_uses_magnitude(mesh2):
    def field(X):
        out = np.zeros((len(X), 3))
        out[:, 0] = 3.0
        out[:, 1] = 4.0
        return out

    mf = vf.nontangential_max(field, mesh2, count=4, panels=[0, 7])
    assert mf.values == pytest.approx([5.0, 5.0])
    assert mf.values.shape == (2,)


def test_nontangential_max_validation(mesh2):
    with pytest.raises(ValueError):
        vf.nontangential_max(lambda X: np.ones(len(X)), mesh2, gamma=0.9)
    with pytest.raises(ValueError):
        vf.nontangential_max(lambda X: np.ones(len(X)), mesh2, count=0)


def test_convex_fast_path_matches_exact_distance(mesh2, rng):
    assert vf._is_convex(mesh2)
    pts = rng.uniform(-0.4, 0.4, size=(40, 3))
    fast, inside = vf._interior_plane_distance(mesh2, pts, chunk=16)
    exact = mesh2.surface_distance(pts)
    assert np.max(np.abs(fast - exact)) < 1e-12
    assert np.all(inside)


# -- probes, studies, reporting ---------------------------------------------------------


def test_probe_points_layout():
    pts, labels = vf.probe_points(radius=2.0)
    assert labels[0] == "origin"
    assert len(pts) == len(labels) == 10
    assert "0.5e2" in labels
    k = labels.index("0.5e2")
    assert pts[k] == pytest.approx([0.0, 1.0, 0.0])


def test_convergence_study_zero_family():
    record = vf.convergence_study("dirichlet", "zero", levels=(1, 2))
    assert record.solution == "zero"
    assert record.errors["u"] == (0.0, 0.0)
    assert np.isnan(record.fitted_orders["u"])
    assert len(record.rows) == 2 * 10 * 3  # levels x probes x quantities
    row = record.rows[0]
    assert set(row) == set(vf.CSV_HEADER)
    # vanishing reference: the relative column falls back to the absolute one
    assert row["reference"] == 0.0 and row["rel_err"] == row["abs_err"]


def test_convergence_study_validation():
    with pytest.raises(ValueError, match="increasing"):
        vf.convergence_study("dirichlet", "zero", levels=(2, 2))
    with pytest.raises(ValueError, match="levels"):
        vf.convergence_study("dirichlet", "zero", levels=(5, 6))
    with pytest.raises(ValueError, match="finite"):
        vf.ConvergenceRecord(
            kind="dirichlet",
            order=1,
            solution="x",
            levels=(1, 2),
            mesh_sizes=(0.5, 0.25),
            errors={"u": (0.1, np.nan)},
            fitted_orders={},
        )


def test_write_csv_is_byte_deterministic(tmp_path):
    rows = [
        {
            "level": 2,
            "probe": "origin",
            "quantity": "u",
            "value": 1.0 / 3.0,
            "reference": 0.25,
            "abs_err": 1.0 / 12.0,
            "rel_err": 1.0 / 3.0,
        },
        (3, "0.3e1", "grad", 0.5, 0.5, 0.0, 0.0),
    ]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    vf.write_csv(a, rows)
    vf.write_csv(b, rows)
    assert a.read_bytes() == b.read_bytes()
    lines = a.read_text().splitlines()
    assert lines[0] == "level,probe,quantity,value,reference,abs_err,rel_err"
    assert lines[1].startswith("2,origin,u,0.33333333333333331,")


def test_norm_stability_record(monkeypatch):
    record = vf.norm_stability_study("dirichlet", levels=(1, 2))
    assert record.kind == "dirichlet" and record.order == 2
    assert len(record.ratios) == 2
    assert all(r > 0 for r in record.ratios)
    assert record.spread >= 0.0
    with pytest.raises(ValueError, match="data_fn"):
        vf.norm_stability_study("regularity", levels=(1,))
    with pytest.raises(ValueError, match="per cascade stage"):
        vf.norm_stability_study(
            "dirichlet", levels=(1,), data_fn=lambda mesh: [np.ones(mesh.panel_count)]
        )


# -- compatibility ------------------------------------------------------------------


def test_newtonian_compatibility_report(mesh2, cache2):
    rep = vf.newtonian_compatibility(mesh2, 2, cache=cache2)
    # the projected moment vanishes by exact adjointness of the discrete pair
    assert rep.normalized < 1e-14
    assert abs(rep.raw_moment) > 1e-3  # the projection removed a real moment
    assert rep.trace_agreement < 5e-2
    with pytest.raises(ValueError, match="orders >= 2"):
        vf.newtonian_compatibility(mesh2, 1, cache=cache2)


# -- named suites -----------------------------------------------------------------------


def test_check_result_line_format():
    good = vf.CheckResult("sample check", True, 1e-4, 1e-3, "detail")
    bad = vf.CheckResult("sample check", False, 2.0, 1e-3)
    assert good.line().startswith("[PASS] sample check: measured 1.000e-04")
    assert good.line().endswith("detail")
    assert bad.line().startswith("[FAIL]")


def test_suite_names_and_unknown_suite():
    assert vf.suite_names() == ["kernels", "gauss", "jump", "compat", "all"]
    with pytest.raises(KeyError, match="unknown suite"):
        vf.run_suite("nope")


def test_kernel_suite_passes():
    checks = vf.verify_kernels(pairs=2)
    assert checks and all(c.passed for c in checks), [c.line() for c in checks]


def test_gauss_suite_passes_on_shared_mesh(cache3):
    checks = vf.verify_gauss(cache=cache3)
    assert len(checks) == 4
    assert all(c.passed for c in checks), [c.line() for c in checks]


def test_compat_suite_passes():
    checks = vf.verify_compat(level=1, orders=(2,))
    assert all(c.passed for c in checks), [c.line() for c in checks]


def test_log_moment_report_is_finite():
    rows = vf.log_moment_report(powers=(1, 2), radii=(0.5, 2.0))
    assert len(rows) == 4
    for row in rows:
        assert row["near_constant"] > 0.0 and np.isfinite(row["near_constant"])
        assert row["far_constant"] > 0.0 and np.isfinite(row["far_constant"])
