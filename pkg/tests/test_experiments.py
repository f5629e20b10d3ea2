import csv
import json
import math

import numpy as np
import pytest

from dfnflow.cli import main
from dfnflow.experiments import CSV_COLUMNS, TEST1_DELTAS, TEST1_WEIGHTS, RunConfig, fine_reference, load_problem, \
    make_test2, run
from dfnflow.experiments import Test2Geometry as Geometry2
from dfnflow.experiments import test2_oracle as series_oracle
from dfnflow.saddle import assemble_system, solve


def read_csv(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_test1_exact_values(test1):
    h1 = test1.exact.value[1]
    assert h1(0.5, 0.5) == pytest.approx(0.09375, abs=1e-15)
    y = np.linspace(0, 1, 11)
    assert np.all(h1(0 * y, y) == 0)
    assert np.all(test1.exact.value[2](0 * y, y) == 0)
    for e in (-1.0, 1.0):
        assert np.all(h1(e + 0 * y, y) == 0)
    x = np.linspace(-1, 1, 11)
    assert np.all(h1(x, 0 * x) == 0) and np.all(h1(x, 1 + 0 * x) == 0)


@pytest.mark.parametrize("fid", [1, 2])
def test_test1_flux_jump_by_finite_differences(test1, fid):
    h = test1.exact.value[fid]
    eps = 1e-6
    t = test1.network.traces[0]
    for s in (0.1, 0.37, 0.5, 0.8):
        # sum of the outward conormal derivatives of the two sides of the trace
        y = s
        jump = -(h(eps, y) - h(0.0, y)) / eps + (h(0.0, y) - h(-eps, y)) / eps
        assert test1.exact.flux[(fid, t.id)](s) == pytest.approx(jump, abs=1e-5)


@pytest.mark.parametrize("fid", [1, 2])
def test_test1_forcing_is_minus_laplacian(test1, fid):
    h, g = test1.exact.value[fid], test1.forcing[fid]
    eps = 1e-4
    for x, y in [(0.3, 0.4), (-0.7, 0.2), (0.55, 0.9)]:
        lap = (h(x + eps, y) + h(x - eps, y) + h(x, y + eps) + h(x, y - eps) - 4 * h(x, y)) / eps ** 2
        assert g(x, y) == pytest.approx(-lap, rel=1e-5)


def test_test1_gradients_match_values(test1):
    for fid in (1, 2):
        h, gr = test1.exact.value[fid], test1.exact.grad[fid]
        eps = 1e-7
        for x, y in [(0.3, 0.4), (-0.7, 0.2)]:
            gx, gy = gr(x, y)
            assert gx == pytest.approx((h(x + eps, y) - h(x - eps, y)) / (2 * eps), rel=1e-6)
            assert gy == pytest.approx((h(x, y + eps) - h(x, y - eps)) / (2 * eps), rel=1e-6)


def test_test1_solved_multiplier_tracks_exact_flux(test1, disc1_fine):
    sol = solve(assemble_system(disc1_fine, "natural", 0.1, 0.0))
    sm = disc1_fine.segmeshes[0]
    for fid in (1, 2):
        exact = test1.exact.flux[(fid, 0)](sm.coords)
        err = np.linalg.norm(sol.lam[(fid, 0)] - exact) / np.linalg.norm(exact)
        assert err < 0.3


@pytest.mark.parametrize("which", ["A", "B"])
def test_test2_oracle(which):
    p = make_test2(which)
    ex = p.exact
    psi1, psi2 = ex.psi[0](0.0), ex.psi[1](0.0)
    assert psi1 + psi2 == pytest.approx(1.0)
    assert ex.value[1](0.0, 0.5) == pytest.approx(0.5)
    assert ex.flux[(1, 0)](0.3) == pytest.approx(-ex.flux[(1, 1)](0.3))
    d = 0.4 if which == "A" else 0.05
    q = 1 / (1 + d)
    assert ex.flux[(1, 0)](0.3) == pytest.approx(q)
    # continuity across both traces and the Dirichlet data
    assert ex.value[1](d / 2, 0.3) == pytest.approx(ex.value[2](0.0, 0.3)) == pytest.approx(psi1)
    assert ex.value[1](-d / 2, 0.3) == pytest.approx(ex.value[3](0.0, 0.3)) == pytest.approx(psi2)
    assert ex.value[2](0.5, 0.3) == pytest.approx(1.0)
    assert ex.value[3](0.5, 0.3) == pytest.approx(0.0)
    # per-fracture balance: what enters F1 through one trace leaves through the other
    assert ex.flux[(2, 0)](0.5) + ex.flux[(1, 0)](0.5) == pytest.approx(0.0)


def test_test2_oracle_geometry():
    q, psi1, psi2 = series_oracle(Geometry2(0.4, half_height=1.0))
    assert q == pytest.approx(1 / 2.4)
    assert psi1 == pytest.approx(1 - q)
    with pytest.raises(ValueError):
        make_test2("C")


def test_load_problem():
    assert load_problem("test1").name == "test1"
    assert load_problem("test2B").name == "test2B"
    with pytest.raises(ValueError):
        load_problem("custom")
    with pytest.raises(ValueError):
        load_problem("test3")


@pytest.mark.parametrize("kwargs", [
    dict(deltas=()), dict(weights=()), dict(deltas=(0.1, 0.2)), dict(deltas=(0.1, -0.05)),
    dict(weights=(1.0, 0.0)), dict(variants=("robust",)), dict(reference="oracle"),
    dict(reference="fine", ref_factor=2.0), dict(test="custom"),
])
def test_config_errors(kwargs):
    with pytest.raises(ValueError):
        RunConfig(**kwargs).validate()


def test_run_rows_and_reports(tmp_path):
    cfg = RunConfig(test="test1", variants=("natural", "meshdep", "none"), deltas=(0.22, 0.1),
                    weights=(1.0, 0.1, 0.01), out=str(tmp_path), dump_meshes=True, dump_matrix=True)
    rep = run(cfg)
    assert len(rep.rows) == 2 * 2 * 3 + 2
    rows = read_csv(tmp_path / "report.csv")
    assert tuple(rows[0]) == CSV_COLUMNS
    assert len(rows) == len(rep.rows) + 1
    meta = json.loads((tmp_path / "report.json").read_text())
    assert len(meta["rows"]) == len(rep.rows)
    assert (tmp_path / "mesh_F1_0.22.txt").exists()
    assert len(list(tmp_path.glob("matrix_*.mtx"))) == len(rep.rows)
    for r in rep.rows:
        if r.variant != "none":
            assert r.status == "ok"
            assert r.conservation <= 1e-9
            assert math.isfinite(r.cond)
            assert 0 < r.errL2 < r.errH1 < 1


def test_reports_are_deterministic(tmp_path):
    bodies = []
    for k in range(2):
        out = tmp_path / str(k)
        run(RunConfig(test="test2A", variants=("natural", "meshdep"), deltas=(0.22, 0.1), weights=(0.1,),
                      out=str(out)))
        rows = read_csv(out / "report.csv")
        seconds = rows[0].index("seconds")
        bodies.append([r[:seconds] + r[seconds + 1:] for r in rows])
    assert bodies[0] == bodies[1]


def test_unstabilised_rows_fail_on_fine_traces(tmp_path):
    rep = run(RunConfig(test="test1", variants=("none",), deltas=(0.1,), weights=(1.0,), trace_ratio=0.1,
                        compute_cond=False))
    assert [r.status for r in rep.rows] == ["failed"]
    assert "singular" in rep.rows[0].message


def test_fine_reference_close_to_analytic(test1):
    ref = fine_reference(test1, 0.05)
    cfg = RunConfig(test="test1", deltas=(0.22,), weights=(0.1,), compute_cond=False)
    a = run(cfg).rows[0]
    cfg.reference = "fine"
    cfg.ref_factor = 4.0
    b = run(cfg).rows[0]
    assert b.errH1 == pytest.approx(a.errH1, rel=0.3)
    assert np.isfinite(ref.value[1](np.array([0.3]), np.array([0.4]))).all()


def test_custom_network(tmp_path):
    data = {"fractures": [
        {"id": 1, "origin": [0, 0, 0], "axis1": [1, 0, 0], "axis2": [0, 1, 0],
         "vertices": [[-1, 0], [1, 0], [1, 1], [-1, 1]],
         "bc": [{"edge": 1, "kind": "dirichlet", "value": 1.0}, {"edge": 3, "kind": "dirichlet", "value": 0.0}]},
        {"id": 2, "origin": [0, 0, 0], "axis1": [0, 0, 1], "axis2": [0, 1, 0],
         "vertices": [[-1, 0], [1, 0], [1, 1], [-1, 1]]},
    ]}
    path = tmp_path / "net.json"
    path.write_text(json.dumps(data))
    rep = run(RunConfig(test="custom", network=str(path), deltas=(0.3,), weights=(0.1,), ref_factor=4.0))
    assert rep.all_ok
    assert rep.rows[0].errH1 < 0.05


def test_cli_exit_codes(tmp_path, capsys):
    out = tmp_path / "ok"
    assert main(["run", "--test", "test2A", "--variant", "natural,meshdep", "--deltas", "0.22",
                 "--weights", "0.1", "--out", str(out), "--quiet"]) == 0
    assert len(read_csv(out / "report.csv")) == 3
    assert main(["run", "--test", "test1", "--variant", "none", "--deltas", "0.1", "--trace-ratio", "0.1",
                 "--no-cond", "--out", str(tmp_path / "bad")]) == 2
    assert "failed" in capsys.readouterr().out
    assert main(["run", "--deltas", "0.1,0.2", "--out", str(tmp_path / "x")]) == 1
    assert main(["run", "--deltas", "", "--out", str(tmp_path / "x")]) == 1
    assert main(["run", "--variant", "robust", "--out", str(tmp_path / "x")]) == 1
    assert main(["run", "--deltas", "a,b", "--out", str(tmp_path / "x")]) == 1
    assert main(["frobnicate"]) == 1


@pytest.mark.slow
def test_full_test1_sweep(tmp_path):
    rep = run(RunConfig(test="test1", variants=("natural", "meshdep"), deltas=TEST1_DELTAS,
                        weights=TEST1_WEIGHTS, out=str(tmp_path)))
    assert len(rep.rows) == 2 * 5 * 5
    assert rep.all_ok
    assert max(r.conservation for r in rep.rows) <= 1e-9
