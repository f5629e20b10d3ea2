"""Benchmark problems and parameter sweeps."""
from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .analysis import ExactSolution, combine, error_L2_H1, norm_1_delta
from .geometry import DIRICHLET0, NEUMANN0, BoundaryCondition, Fracture, Network, build_network, load_network_json
from .meshing import dump_mesh
from .saddle import (SingularSystem, assemble_system, condition_number, discretize, dump_matrix,
                     flux_conservation_residual, solve)

CSV_COLUMNS = ("test", "variant", "delta", "weight", "t", "dofs_u", "dofs_lambda", "dofs_psi",
               "errL2", "errH1", "err1delta", "cond", "conservation", "status", "seconds")

TEST1_DELTAS = (0.22, 0.1, 0.071, 0.032, 0.014)
TEST1_WEIGHTS = (10.0, 1.0, 0.1, 0.01, 0.001)
TEST2_WEIGHTS = (1.0, 0.1, 0.01, 0.001, 0.0001)

X = np.array([1.0, 0.0, 0.0])
Y = np.array([0.0, 1.0, 0.0])
Z = np.array([0.0, 0.0, 1.0])


def _rect(u0, u1, v0, v1):
    return [(u0, v0), (u1, v0), (u1, v1), (u0, v1)]


@dataclass
class Problem:
    name: str
    network: Network
    exact: Optional[ExactSolution]
    forcing: Dict[int, Optional[Callable]]


# ---------------------------------------------------------------------------
# test1: two perpendicular fractures, homogeneous Dirichlet everywhere


def _kinked(a):
    return np.abs(a) ** 3 - np.abs(a)


def _kinked_d(a):
    return 3 * a * np.abs(a) - np.sign(a)


def make_test1() -> Problem:
    bc = (DIRICHLET0,) * 4
    f1 = Fracture(1, np.zeros(3), [X, Y], _rect(-1, 1, 0, 1), np.eye(2), bc)
    f2 = Fracture(2, np.zeros(3), [Z, Y], _rect(-1, 1, 0, 1), np.eye(2), bc)
    net = build_network([f1, f2])

    def h1(x, y):
        return y * (y - 1) * _kinked(x)

    def h2(z, y):
        return y * (1 - y) * _kinked(z)

    def g1(x, y):
        return -2 * _kinked(x) - 6 * np.abs(x) * y * (y - 1)

    def g2(z, y):
        return 2 * _kinked(z) + 6 * np.abs(z) * y * (y - 1)

    exact = ExactSolution(
        value={1: h1, 2: h2},
        grad={1: lambda x, y: (y * (y - 1) * _kinked_d(x), (2 * y - 1) * _kinked(x)),
              2: lambda z, y: (y * (1 - y) * _kinked_d(z), (1 - 2 * y) * _kinked(z))},
        flux={(1, 0): lambda s: 2 * s * (s - 1), (2, 0): lambda s: 2 * s * (1 - s)},
        psi={0: lambda s: 0.0 * s},
    )
    return Problem("test1", net, exact, {1: g1, 2: g2})


# ---------------------------------------------------------------------------
# test2: flow from F2's top edge through F1 to F3's top edge


@dataclass(frozen=True)
class Test2Geometry:
    distance: float
    half_height: float = 0.5  # z-extent of F2 and F3 is [-h, h]; the top edge is z = +h
    f1_halfwidth: float = 1.0


def test2_oracle(geom: Test2Geometry):
    """Series-circuit solution: leg lengths h (F2), d (F1), h (F3)."""
    h, d = geom.half_height, geom.distance
    q = 1.0 / (h + d + h)
    return q, 1.0 - h * q, h * q


def make_test2(which: str = "A", geom: Optional[Test2Geometry] = None) -> Problem:
    if geom is None:
        if which not in ("A", "B"):
            raise ValueError("test2 variant must be 'A' or 'B'")
        geom = Test2Geometry(0.4 if which == "A" else 0.05)
    d, h, a = geom.distance, geom.half_height, geom.f1_halfwidth
    top = lambda val: (NEUMANN0, BoundaryCondition("dirichlet", val), NEUMANN0, NEUMANN0)
    f1 = Fracture(1, np.zeros(3), [X, Y], _rect(-a, a, 0, 1), np.eye(2), (NEUMANN0,) * 4)
    f2 = Fracture(2, np.array([d / 2, 0, 0]), [Z, Y], _rect(-h, h, 0, 1), np.eye(2), top(1.0))
    f3 = Fracture(3, np.array([-d / 2, 0, 0]), [Z, Y], _rect(-h, h, 0, 1), np.eye(2), top(0.0))
    net = build_network([f1, f2, f3])
    q, psi1, psi2 = test2_oracle(geom)

    def u1(x, y):
        return psi2 + q * (np.clip(x, -d / 2, d / 2) + d / 2) + 0.0 * y

    def g1(x, y):
        return np.where(np.abs(x) < d / 2, q, 0.0) + 0.0 * y, 0.0 * x

    def u2(z, y):
        return psi1 + q * np.maximum(z, 0.0) + 0.0 * y

    def g2(z, y):
        return np.where(z > 0, q, 0.0) + 0.0 * y, 0.0 * z

    def u3(z, y):
        return psi2 - q * np.maximum(z, 0.0) + 0.0 * y

    def g3(z, y):
        return np.where(z > 0, -q, 0.0) + 0.0 * y, 0.0 * z

    const = lambda c: (lambda s: c + 0.0 * np.asarray(s))
    exact = ExactSolution(
        value={1: u1, 2: u2, 3: u3},
        grad={1: g1, 2: g2, 3: g3},
        flux={(1, 0): const(q), (2, 0): const(-q), (1, 1): const(-q), (3, 1): const(q)},
        psi={0: const(psi1), 1: const(psi2)},
    )
    return Problem(f"test2{which}", net, exact, {1: None, 2: None, 3: None})


def load_problem(test: str, network_path=None) -> Problem:
    if test == "test1":
        return make_test1()
    if test in ("test2A", "test2B"):
        return make_test2(test[-1])
    if test == "custom":
        if network_path is None:
            raise ValueError("custom test needs a network file")
        net, forcing = load_network_json(network_path)
        return Problem("custom", net, None, forcing)
    raise ValueError(f"unknown test {test!r}")


# ---------------------------------------------------------------------------
# sweeps


@dataclass
class RunConfig:
    test: str = "test1"
    variants: Tuple[str, ...] = ("natural",)
    deltas: Tuple[float, ...] = TEST1_DELTAS
    weights: Tuple[float, ...] = TEST1_WEIGHTS
    t: float = 0.0
    out: Optional[str] = None
    network: Optional[str] = None
    reference: str = "analytic"
    ref_factor: float = 4.0
    trace_ratio: float = 1.0
    jitter: float = 0.15
    odd_cells: bool = True
    compute_cond: bool = True
    dump_meshes: bool = False
    dump_matrix: bool = False

    def validate(self):
        if not self.deltas:
            raise ValueError("at least one meshsize is required")
        if not self.weights:
            raise ValueError("at least one weight is required")
        d = np.asarray(self.deltas, dtype=float)
        if np.any(d <= 0) or np.any(np.diff(d) >= 0):
            raise ValueError("meshsizes must be positive and strictly decreasing")
        if any(w <= 0 for w in self.weights):
            raise ValueError("weights must be positive")
        for v in self.variants:
            if v not in ("none", "natural", "meshdep"):
                raise ValueError(f"unknown variant {v!r}")
        if self.reference not in ("analytic", "fine"):
            raise ValueError("reference must be 'analytic' or 'fine'")
        if self.reference == "fine" and self.ref_factor < 4:
            raise ValueError("fine-mesh reference needs a refinement factor of at least 4")
        if self.test == "custom" and self.network is None:
            raise ValueError("custom test needs --network")


@dataclass
class RunRow:
    test: str
    variant: str
    delta: float
    weight: float
    t: float
    dofs_u: int = 0
    dofs_lambda: int = 0
    dofs_psi: int = 0
    errL2: float = math.nan
    errH1: float = math.nan
    err1delta: float = math.nan
    cond: float = math.nan
    conservation: float = math.nan
    status: str = "ok"
    seconds: float = 0.0
    message: str = ""
    fluxes: Dict[str, float] = field(default_factory=dict)

    def csv_values(self):
        out = []
        for c in CSV_COLUMNS:
            v = getattr(self, c)
            out.append(f"{v:.6g}" if c == "seconds" else (repr(v) if isinstance(v, float) else str(v)))
        return out


@dataclass
class RunReport:
    config: RunConfig
    rows: List[RunRow]
    wall_time: float

    @property
    def all_ok(self):
        return all(r.status == "ok" for r in self.rows)

    def write(self, out_dir):
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "report.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(CSV_COLUMNS)
            for r in self.rows:
                w.writerow(r.csv_values())
        meta = {"config": asdict(self.config), "wall_time": self.wall_time,
                "rows": [asdict(r) for r in self.rows]}
        with open(out / "report.json", "w") as fh:
            json.dump(meta, fh, indent=2, default=_json_default)


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    return str(o)


def trace_fluxes(sol, disc) -> Dict[str, float]:
    """Total flux ``int lam`` per (fracture, trace)."""
    out = {}
    for t in disc.network.traces:
        sm = disc.segmeshes[t.id]
        h = np.diff(sm.coords)
        for fid in t.fracture_ids:
            lam = sol.lam[(fid, t.id)]
            out[f"{fid}:{t.id}"] = float(np.sum(0.5 * h * (lam[:-1] + lam[1:])))
    return out


def fine_reference(problem: Problem, delta_ref: float, trace_ratio: float = 1.0, jitter: float = 0.15,
                   odd_cells: bool = True) -> ExactSolution:
    """Natural variant, omega = 0.1, on a fine mesh, wrapped as an exact solution."""
    from matplotlib.tri import LinearTriInterpolator, Triangulation

    disc = discretize(problem.network, delta_ref, problem.forcing, trace_ratio, jitter, odd_cells)
    sol = solve(assemble_system(disc, "natural", 0.1, 0.0))
    value, grad = {}, {}
    for f in problem.network.fractures:
        mesh = disc.meshes[f.id]
        interp = LinearTriInterpolator(Triangulation(mesh.nodes[:, 0], mesh.nodes[:, 1], mesh.triangles),
                                       sol.u[f.id])

        def v(x, y, it=interp):
            return np.ma.filled(it(x, y), np.nan)

        def g(x, y, it=interp):
            gx, gy = it.gradient(x, y)
            return np.ma.filled(gx, np.nan), np.ma.filled(gy, np.nan)

        value[f.id], grad[f.id] = v, g
    return ExactSolution(value, grad)


def run_point(problem: Problem, variant, delta, weight, cfg: RunConfig, exact=None, disc=None) -> Tuple[RunRow, object]:
    row = RunRow(problem.name, variant, float(delta), float(weight), float(cfg.t))
    t0 = time.perf_counter()
    sol = None
    try:
        if disc is None:
            disc = discretize(problem.network, delta, problem.forcing, cfg.trace_ratio, cfg.jitter, cfg.odd_cells)
        sys = assemble_system(disc, variant, weight, cfg.t)
        dm = sys.dofmap
        row.dofs_u, row.dofs_lambda, row.dofs_psi = dm.count("u"), dm.count("lam"), dm.count("psi")
        if cfg.compute_cond:
            row.cond = condition_number(sys.matrix)
        if cfg.out and cfg.dump_matrix:
            dump_matrix(sys, Path(cfg.out) / f"matrix_{variant}_{delta:g}_{weight:g}.mtx")
        sol = solve(sys)
        row.conservation = flux_conservation_residual(sol, sys)
        row.fluxes = trace_fluxes(sol, disc)
        exact = exact if exact is not None else problem.exact
        if exact is not None:
            per = error_L2_H1(sol, exact, disc)
            row.errL2, row.errH1 = combine(per)
            row.err1delta = norm_1_delta(sol, disc, exact, h1=row.errH1)
        bad = [v for v in (row.errL2, row.errH1, row.err1delta, row.conservation)
               if exact is not None and not np.isfinite(v)]
        if bad:
            row.status = "failed"
            row.message = "non-finite error norms"
    except SingularSystem as exc:
        row.status, row.message = "failed", f"singular: {exc}"
    except (ValueError, np.linalg.LinAlgError) as exc:
        row.status, row.message = "failed", str(exc)
    row.seconds = time.perf_counter() - t0
    return row, sol


def _weights_for(variant, weights):
    # the unstabilised scheme has no weight; one row per meshsize
    return weights if variant != "none" else weights[:1]


def run(cfg: RunConfig, progress: Optional[Callable[[RunRow], None]] = None) -> RunReport:
    cfg.validate()
    problem = load_problem(cfg.test, cfg.network)
    exact = problem.exact
    if cfg.reference == "fine" or exact is None:
        exact = fine_reference(problem, min(cfg.deltas) / cfg.ref_factor, cfg.trace_ratio, cfg.jitter, cfg.odd_cells)
    start = time.perf_counter()
    rows = []
    for delta in cfg.deltas:
        try:
            disc = discretize(problem.network, delta, problem.forcing, cfg.trace_ratio, cfg.jitter, cfg.odd_cells)
        except ValueError as exc:
            for variant in cfg.variants:
                for w in _weights_for(variant, cfg.weights):
                    r = RunRow(problem.name, variant, float(delta), float(w), float(cfg.t), status="failed",
                               message=str(exc))
                    rows.append(r)
                    if progress:
                        progress(r)
            continue
        if cfg.out and (cfg.dump_meshes or cfg.dump_matrix):
            Path(cfg.out).mkdir(parents=True, exist_ok=True)
        if cfg.out and cfg.dump_meshes:
            for fid, mesh in disc.meshes.items():
                dump_mesh(mesh, Path(cfg.out) / f"mesh_F{fid}_{delta:g}.txt")
        for variant in cfg.variants:
            for w in _weights_for(variant, cfg.weights):
                row, _ = run_point(problem, variant, delta, w, cfg, exact, disc)
                rows.append(row)
                if progress:
                    progress(row)
    report = RunReport(cfg, rows, time.perf_counter() - start)
    if cfg.out:
        report.write(cfg.out)
    return report
