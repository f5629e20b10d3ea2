"""Stabilisation terms coupling fracture residuals to the trace multipliers.

Both variants share the bilinear form

    [f, g] = sum_{k,l} S[k, l] <f, eta_l> <g, eta_k>

where the ``eta_l`` are the band hat functions attached to the free trace
nodes.  The natural variant uses ``S = R^{-1}`` with ``R`` the band
stiffness matrix; the mesh-dependent one uses ``S = delta * M^{-1}`` with
``M`` the trace mass matrix.  Applied to the local residual
``<A u - B^T lam - g, eta> = X u - M lam - G`` this yields four blocks per
(fracture, trace) pair, see :func:`stab_blocks`.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Dict, Optional

import numpy as np
import scipy.sparse as sp

from .fem import assemble_coupling_C, assemble_load, assemble_stiffness, flux_jump_operator
from .meshing import AuxBandMesh, SegMesh, TriMesh, overlay_segment

MAX_COND = 1e14


@dataclass
class ThetaTable:
    """``matrix[l, e] = int_e eta_l`` over fracture-mesh edges."""

    matrix: sp.csr_matrix

    def value(self, l, e):
        return float(self.matrix[l, e])


@dataclass
class StabOperators:
    """Dense/sparse ingredients of one (fracture, trace) stabilisation term.

    Rows of ``X``, ``M``, ``S`` and ``G`` run over the free trace nodes;
    columns of ``X`` over all fracture-mesh nodes.
    """

    fracture_id: int
    trace_id: int
    X: sp.csr_matrix
    M: np.ndarray
    S: np.ndarray
    G: np.ndarray
    delta: float
    R: Optional[np.ndarray] = None


def compute_theta(band: AuxBandMesh, fmesh: TriMesh) -> ThetaTable:
    """Integrals of the band hats along every fracture edge that meets the band."""
    nfree = len(band.free_nodes)
    E = len(fmesh.edges)
    if nfree == 0 or band.mesh.n_triangles == 0:
        return ThetaTable(sp.csr_matrix((nfree, E)))
    slot = np.full(band.mesh.n_nodes, -1, dtype=np.int64)
    slot[band.free_nodes] = np.arange(nfree)
    bmin = band.mesh.nodes.min(axis=0) - 1e-12
    bmax = band.mesh.nodes.max(axis=0) + 1e-12
    p = fmesh.nodes[fmesh.edges]
    emin, emax = p.min(axis=1), p.max(axis=1)
    cand = np.flatnonzero(np.all((emax >= bmin) & (emin <= bmax), axis=1))
    tri = band.mesh.triangles
    rows, cols, vals = [], [], []
    for e in cand:
        ov = overlay_segment(p[e, 0], p[e, 1], [band.mesh], require_cover=False)
        c = ov.cells[:, 0]
        hit = c >= 0
        if not hit.any():
            continue
        c = c[hit]
        s0, s1 = ov.breakpoints[:-1][hit], ov.breakpoints[1:][hit]
        lam0 = band.mesh.barycentric(c, ov.points(s0))
        lam1 = band.mesh.barycentric(c, ov.points(s1))
        contrib = 0.5 * (lam0 + lam1) * (s1 - s0)[:, None]
        owner = slot[tri[c]]
        keep = owner >= 0
        rows.append(owner[keep])
        cols.append(np.full(keep.sum(), e))
        vals.append(contrib[keep])
    if not rows:
        return ThetaTable(sp.csr_matrix((nfree, E)))
    T = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(nfree, E)).tocsr()
    T.sum_duplicates()
    T.data[np.abs(T.data) < 1e-14 * band.mesh.meshsize] = 0.0
    T.eliminate_zeros()
    return ThetaTable(T)


def residual_operator(band: AuxBandMesh, fmesh: TriMesh, K=None) -> sp.csr_matrix:
    """``X[l, j] = <A phi_j, eta_l>``, the fracture operator tested against band hats."""
    return (compute_theta(band, fmesh).matrix @ flux_jump_operator(fmesh, K)).tocsr()


def eval_Au_functional(band: AuxBandMesh, fmesh: TriMesh, u, K=None) -> np.ndarray:
    return residual_operator(band, fmesh, K) @ np.asarray(u, dtype=float)


def band_load(band: AuxBandMesh, g: Optional[Callable]) -> np.ndarray:
    """``G[l] = int_band g eta_l`` with the 3-point rule on band triangles."""
    if band.mesh.n_triangles == 0:
        return np.zeros(len(band.free_nodes))
    return assemble_load(band.mesh, g, order=2)[band.free_nodes]


def band_stiffness(band: AuxBandMesh) -> np.ndarray:
    if band.mesh.n_triangles == 0:
        return np.zeros((len(band.free_nodes),) * 2)
    R = assemble_stiffness(band.mesh)
    return R[band.free_nodes][:, band.free_nodes].toarray()


def trace_mass_free(sm: SegMesh) -> np.ndarray:
    f = sm.free_nodes
    return assemble_coupling_C(sm)[f][:, f].toarray()


def build_natural_stab(band: AuxBandMesh, fmesh: TriMesh, sm: SegMesh, g=None, K=None) -> StabOperators:
    """Operators of the natural variant, ``S = R^{-1}``."""
    R = band_stiffness(band)
    if R.size:
        c = np.linalg.cond(R)
        if not np.isfinite(c) or c > MAX_COND:
            raise ValueError(f"band stiffness of trace {band.trace_id} on fracture {band.fracture_id} "
                             f"is ill-conditioned (cond {c:.3g})")
        S = np.linalg.inv(R)
    else:
        S = R
    return StabOperators(band.fracture_id, band.trace_id, residual_operator(band, fmesh, K),
                         trace_mass_free(sm), S, band_load(band, g), sm.meshsize, R=R)


def build_meshdep_stab(band: AuxBandMesh, fmesh: TriMesh, sm: SegMesh, g=None, K=None) -> StabOperators:
    """Operators of the mesh-dependent variant, ``S = delta M^{-1}``."""
    M = trace_mass_free(sm)
    S = sm.meshsize * np.linalg.inv(M) if M.size else M
    return StabOperators(band.fracture_id, band.trace_id, residual_operator(band, fmesh, K),
                         M, S, band_load(band, g), sm.meshsize)


def dual_product(ops: StabOperators, f_vals, g_vals) -> float:
    """``[f, g]`` from the tested values ``<f, eta_l>`` and ``<g, eta_l>``."""
    return float(np.asarray(g_vals) @ ops.S @ np.asarray(f_vals))


def residual(ops: StabOperators, u, lam, t: float = 1.0) -> np.ndarray:
    """Tested residual ``<t A u - B^T lam, eta_l>``; ``lam`` on free trace nodes."""
    return t * (ops.X @ np.asarray(u, dtype=float)) - ops.M @ np.asarray(lam, dtype=float)


def apply_natural_stab_bilinear(ops: StabOperators, u, lam, v, mu, t: float = 0.0) -> float:
    """Stabilising form: state residual paired with the test residual (A-part scaled by ``t``)."""
    return dual_product(ops, residual(ops, u, lam), residual(ops, v, mu, t))


def apply_meshdep_blocks(ops: StabOperators, u, lam, v, mu, t: float = 0.0) -> float:
    """Same form for ``S = delta M^{-1}``, evaluated through the closed-form blocks."""
    X, M, d = ops.X, ops.M, ops.delta
    Xu, Xv = X @ u, X @ v
    MiXu = np.linalg.solve(M, Xu) if M.size else Xu
    return float(d * (t * (Xv @ MiXu) - t * (Xv @ lam) - mu @ Xu + mu @ (M @ lam)))


def _compress(X: sp.csr_matrix):
    cols = np.unique(X.indices)
    return cols, X[:, cols].toarray()


def _scatter(dense, rows, cols, shape):
    r = np.repeat(rows, len(cols))
    c = np.tile(cols, len(rows))
    out = sp.coo_matrix((dense.ravel(), (r, c)), shape=shape).tocsr()
    out.eliminate_zeros()
    return out


def stab_blocks(ops: StabOperators, weight: float, t: float) -> Dict[str, object]:
    """Generic contributions for any ``S``.

    Keys: ``uu`` (n_u x n_u), ``ul`` (n_u x n_free), ``lu`` (n_free x n_u),
    ``ll`` (n_free x n_free), ``fu`` (n_u) and ``fl`` (n_free).
    """
    X, M, S, G = ops.X, ops.M, ops.S, ops.G
    nu, nf = X.shape[1], X.shape[0]
    cols, Xc = _compress(X)
    SX = S @ Xc
    SM = S @ M
    SG = S @ G
    allf = np.arange(nf)
    w = float(weight)
    fu = np.zeros(nu)
    fu[cols] = w * t * (Xc.T @ SG)
    return {
        "uu": _scatter(w * t * (Xc.T @ SX), cols, cols, (nu, nu)),
        "ul": _scatter(-w * t * (Xc.T @ SM), cols, allf, (nu, nf)),
        "lu": _scatter(w * (M @ SX), allf, cols, (nf, nu)),
        "ll": sp.csr_matrix(-w * (M @ SM)),
        "fu": fu,
        "fl": w * (M @ SG),
    }


def meshdep_blocks(ops: StabOperators, weight: float, t: float) -> Dict[str, object]:
    """Closed-form contributions for ``S = delta M^{-1}``, avoiding the products with ``M``."""
    X, M, G, d = ops.X, ops.M, ops.G, ops.delta
    nu, nf = X.shape[1], X.shape[0]
    cols, Xc = _compress(X)
    w = float(weight)
    MiX = np.linalg.solve(M, Xc) if nf else Xc
    MiG = np.linalg.solve(M, G) if nf else G
    fu = np.zeros(nu)
    fu[cols] = w * t * d * (Xc.T @ MiG)
    return {
        "uu": _scatter(w * t * d * (Xc.T @ MiX), cols, cols, (nu, nu)),
        "ul": (-w * t * d) * X.T.tocsr(),
        "lu": (w * d) * X,
        "ll": sp.csr_matrix(-w * d * M),
        "fu": fu,
        "fl": w * d * G,
    }



def build_stab(variant: str, band, fmesh, sm, g=None, K=None) -> StabOperators:
    if variant == "natural":
        return build_natural_stab(band, fmesh, sm, g, K)
    if variant == "meshdep":
        return build_meshdep_stab(band, fmesh, sm, g, K)
    raise ValueError(f"no stabilisation operators for variant {variant!r}")
