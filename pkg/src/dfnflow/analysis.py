"""Error norms, mesh-dependent norms and convergence rates."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np

from .fem import assemble_coupling_C, p1_gradients, trace_integral
from .quadrature import gauss_interval, triangle_rule
from .meshing import TriMesh


@dataclass
class ExactSolution:
    """Per-fracture value and gradient callables of local coordinates ``(u, v)``.

    ``flux[(fid, tid)](s)`` and ``psi[tid](s)`` are optional trace data as
    functions of arc length.
    """

    value: Dict[int, Callable]
    grad: Dict[int, Callable]
    flux: Dict[Tuple[int, int], Callable] = field(default_factory=dict)
    psi: Dict[int, Callable] = field(default_factory=dict)


@dataclass
class ErrorReport:
    errL2: float
    errH1: float
    err1delta: float
    per_fracture: Dict[int, Tuple[float, float]]
    lambda_norm: float = math.nan
    psi_norm: float = math.nan


def _det2(a, b):
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def _clip_halfplane(poly, n, c):
    """Part of a convex polygon with ``n . x >= c``."""
    out = []
    m = len(poly)
    for k in range(m):
        a, b = poly[k], poly[(k + 1) % m]
        da, db = n @ a - c, n @ b - c
        if da >= 0:
            out.append(a)
        if da * db < 0:
            out.append(a + (b - a) * (da / (da - db)))
    return out


def _split_triangle(pts, lines):
    """Split a triangle along the given lines ``(n, c)``; returns sub-triangles (k, 3, 2)."""
    pieces = [list(pts)]
    for n, c in lines:
        nxt = []
        for poly in pieces:
            for sgn in (1.0, -1.0):
                q = _clip_halfplane(poly, sgn * n, sgn * c)
                if len(q) >= 3:
                    nxt.append(q)
        pieces = nxt
    tris = []
    for poly in pieces:
        for k in range(1, len(poly) - 1):
            tri = np.array([poly[0], poly[k], poly[k + 1]])
            area = 0.5 * abs(_det2(tri[1] - tri[0], tri[2] - tri[0]))
            if area > 0:
                tris.append(tri)
    return np.array(tris)


def _trace_lines(disc, fid):
    lines = []
    for tid in disc.network.traces_of_fracture[fid]:
        start, d = disc.network.trace(tid).local_params[fid]
        n = np.array([-d[1], d[0]])
        lines.append((tid, n, float(n @ start), start, d))
    return lines


def _cut_cells(mesh: TriMesh, disc, fid):
    cut: Dict[int, list] = {}
    for tid, n, c, start, d in _trace_lines(disc, fid):
        L = disc.network.trace(tid).length
        cells, _, _ = mesh.segment_intervals(start, d, L)
        for k in cells:
            cut.setdefault(int(k), []).append((n, c))
    return cut


def _fracture_errors(mesh: TriMesh, u, value, grad, cut, order=5):
    bary, w = triangle_rule(order)
    u = np.asarray(u, dtype=float)
    g = p1_gradients(mesh)
    gu = np.einsum("ti,tid->td", u[mesh.triangles], g)
    p = mesh.nodes[mesh.triangles]
    plain = np.ones(mesh.n_triangles, dtype=bool)
    plain[list(cut)] = False
    idx = np.flatnonzero(plain)
    pts = np.einsum("qi,tid->tqd", bary, p[idx])
    wt = mesh.areas[idx, None] * w[None]
    uh = np.einsum("qi,ti->tq", bary, u[mesh.triangles[idx]])
    ex = value(pts[..., 0], pts[..., 1])
    gx, gy = grad(pts[..., 0], pts[..., 1])
    l2 = float(np.sum(wt * (uh - ex) ** 2))
    h1 = float(np.sum(wt * ((gu[idx, 0, None] - gx) ** 2 + (gu[idx, 1, None] - gy) ** 2)))
    for k, lines in cut.items():
        subs = _split_triangle(p[k], lines)
        if len(subs) == 0:
            continue
        sp_ = np.einsum("qi,sid->sqd", bary, subs)
        sa = 0.5 * np.abs(_det2(subs[:, 1] - subs[:, 0], subs[:, 2] - subs[:, 0]))
        swt = sa[:, None] * w[None]
        flat = sp_.reshape(-1, 2)
        lam = mesh.barycentric(np.full(len(flat), k), flat)
        uh = (lam @ u[mesh.triangles[k]]).reshape(sp_.shape[:2])
        ex = value(sp_[..., 0], sp_[..., 1])
        gx, gy = grad(sp_[..., 0], sp_[..., 1])
        l2 += float(np.sum(swt * (uh - ex) ** 2))
        h1 += float(np.sum(swt * ((gu[k, 0] - gx) ** 2 + (gu[k, 1] - gy) ** 2)))
    return l2, h1


def error_L2_H1(sol, exact: ExactSolution, disc, split: bool = True, order: int = 5) -> Dict[int, Tuple[float, float]]:
    """Per-fracture ``(||u - u_h||_0, |u - u_h|_1)``; trace-cut triangles are split before quadrature."""
    out = {}
    for f in disc.network.fractures:
        mesh = disc.meshes[f.id]
        cut = _cut_cells(mesh, disc, f.id) if split else {}
        l2, h1 = _fracture_errors(mesh, sol.u[f.id], exact.value[f.id], exact.grad[f.id], cut, order)
        out[f.id] = (math.sqrt(l2), math.sqrt(h1))
    return out


def combine(per_fracture) -> Tuple[float, float]:
    l2 = math.sqrt(sum(a * a for a, _ in per_fracture.values()))
    h1 = math.sqrt(sum(b * b for _, b in per_fracture.values()))
    return l2, h1


def broken_seminorm(sol, disc) -> float:
    tot = 0.0
    for f in disc.network.fractures:
        mesh = disc.meshes[f.id]
        g = np.einsum("ti,tid->td", np.asarray(sol.u[f.id])[mesh.triangles], p1_gradients(mesh))
        tot += float(np.sum(mesh.areas * np.sum(g * g, axis=1)))
    return math.sqrt(tot)


def jump_means(sol, disc, exact: Optional[ExactSolution] = None) -> Dict[int, float]:
    """Mean over each trace of ``[[u_h]] = u_i - u_j`` (i < j), minus the exact jump mean if given."""
    xg, wg = gauss_interval(8)
    out = {}
    for t in disc.network.traces:
        i, j = t.fracture_ids
        L = t.length
        mi = trace_integral(disc.meshes[i], sol.u[i], t, i) / L
        mj = trace_integral(disc.meshes[j], sol.u[j], t, j) / L
        m = mi - mj
        if exact is not None:
            n = 64
            s = (np.arange(n)[:, None] + xg[None]) * (L / n)
            w = np.broadcast_to(wg[None] / n, s.shape)
            pi = t.local_point(i, s.ravel())
            pj = t.local_point(j, s.ravel())
            ji = exact.value[i](pi[:, 0], pi[:, 1]) - exact.value[j](pj[:, 0], pj[:, 1])
            m -= float(np.sum(w.ravel() * ji))
        out[t.id] = m
    return out


def norm_1_delta(sol, disc, exact: Optional[ExactSolution] = None, h1: Optional[float] = None) -> float:
    """``sqrt(|e|_1^2 + sum_m |S_m| mean([[e]])^2)`` with ``e = u - u_h``, or ``e = u_h`` without exact."""
    if h1 is None:
        h1 = combine(error_L2_H1(sol, exact, disc))[1] if exact is not None else broken_seminorm(sol, disc)
    jm = jump_means(sol, disc, exact)
    tot = h1 ** 2 + sum(disc.network.trace(tid).length * m ** 2 for tid, m in jm.items())
    return math.sqrt(tot)


def norms_half_delta(vectors: Dict, segmeshes: Dict, kind: str) -> float:
    """``||lam||_{-1/2,delta}`` (``kind='lambda'``) or ``||psi||_{1/2,delta}`` (``kind='psi'``).

    Keys of ``vectors`` are trace ids, or ``(fid, tid)`` pairs.
    """
    if kind not in ("lambda", "psi"):
        raise ValueError("kind must be 'lambda' or 'psi'")
    tot = 0.0
    for key, v in vectors.items():
        sm = segmeshes[key[1] if isinstance(key, tuple) else key]
        v = np.asarray(v, dtype=float)
        l2sq = float(v @ (assemble_coupling_C(sm) @ v))
        tot += (sm.meshsize if kind == "lambda" else 1.0 / sm.meshsize) * l2sq
    return math.sqrt(tot)


def eoc(errors: Sequence[float], deltas: Sequence[float]):
    """Pairwise rates ``log(e_k / e_k+1) / log(d_k / d_k+1)``."""
    e = np.asarray(errors, dtype=float)
    d = np.asarray(deltas, dtype=float)
    if len(e) != len(d) or len(e) < 2:
        raise ValueError("need matching sequences of length >= 2")
    if np.any(e <= 0) or np.any(d <= 0):
        raise ValueError("errors and meshsizes must be positive")
    return list(np.log(e[:-1] / e[1:]) / np.log(d[:-1] / d[1:]))


def eoc_lsq(errors: Sequence[float], deltas: Sequence[float], last: int = 3) -> float:
    """Least-squares slope of ``log e`` against ``log delta`` over the last ``last`` points."""
    e = np.asarray(errors, dtype=float)[-last:]
    d = np.asarray(deltas, dtype=float)[-last:]
    if len(e) < 2 or np.any(e <= 0) or np.any(d <= 0):
        raise ValueError("need at least two positive points")
    return float(np.polyfit(np.log(d), np.log(e), 1)[0])
