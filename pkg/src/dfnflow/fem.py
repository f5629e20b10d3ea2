"""P1 assembly on fracture and trace meshes.

Fracture operators act on all mesh nodes; Dirichlet nodes are eliminated
later by lifting (:func:`lift`), so every block keeps its natural size until
the global system is reduced.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Hashable, List, Tuple

import numpy as np
import scipy.sparse as sp

from .geometry import Fracture, Trace
from .meshing import DIRICHLET, OverlaySegment, SegMesh, TriMesh, overlay_segment
from .quadrature import gauss_interval, triangle_rule


def p1_gradients(mesh: TriMesh):
    """Gradients of the three barycentric functions per triangle, shape (T, 3, 2)."""
    p = mesh.nodes[mesh.triangles]
    twice = 2.0 * mesh.areas
    g = np.empty((mesh.n_triangles, 3, 2))
    for i in range(3):
        a, b = p[:, (i + 1) % 3], p[:, (i + 2) % 3]
        g[:, i, 0] = (a[:, 1] - b[:, 1]) / twice
        g[:, i, 1] = (b[:, 0] - a[:, 0]) / twice
    return g


def assemble_stiffness(mesh: TriMesh, K=None) -> sp.csr_matrix:
    """``A[j, k] = int K grad phi_k . grad phi_j`` over all nodes."""
    K = np.eye(2) if K is None else np.asarray(K, dtype=float)
    g = p1_gradients(mesh)
    local = mesh.areas[:, None, None] * np.einsum("tia,ab,tjb->tij", g, K, g)
    rows = np.repeat(mesh.triangles, 3, axis=1).ravel()
    cols = np.tile(mesh.triangles, (1, 3)).ravel()
    n = mesh.n_nodes
    A = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    A.sum_duplicates()
    # summation order differs between (j, k) and (k, j); averaging makes A == A.T bitwise
    return ((A + A.T) * 0.5).tocsr()


def quadrature_points(mesh: TriMesh, order):
    """Physical quadrature points (T, q, 2), weights (T, q) and barycentrics (q, 3)."""
    bary, w = triangle_rule(order)
    p = mesh.nodes[mesh.triangles]
    pts = np.einsum("qi,tid->tqd", bary, p)
    return pts, mesh.areas[:, None] * w[None, :], bary


def assemble_load(mesh: TriMesh, g, order: int = 2) -> np.ndarray:
    """``b[j] = int g phi_j`` with a triangle rule of the given order (default 3-point)."""
    if g is None:
        return np.zeros(mesh.n_nodes)
    pts, w, bary = quadrature_points(mesh, order)
    vals = np.asarray(g(pts[..., 0], pts[..., 1]), dtype=float)
    vals = np.broadcast_to(vals, pts.shape[:2])
    local = np.einsum("tq,tq,qi->ti", vals, w, bary)
    return np.bincount(mesh.triangles.ravel(), local.ravel(), minlength=mesh.n_nodes)


def assemble_mass(mesh: TriMesh) -> sp.csr_matrix:
    local = mesh.areas[:, None, None] * (np.ones((3, 3)) + np.eye(3))[None] / 12.0
    rows = np.repeat(mesh.triangles, 3, axis=1).ravel()
    cols = np.tile(mesh.triangles, (1, 3)).ravel()
    return sp.coo_matrix((local.ravel(), (rows, cols)), shape=(mesh.n_nodes,) * 2).tocsr()


def flux_jump_operator(mesh: TriMesh, K=None) -> sp.csr_matrix:
    """Edge-wise conormal flux jump ``[K grad u . nu]`` as a linear map of nodal values.

    Interior edges sum the outward fluxes of both neighbours; boundary edges
    carry the one-sided outward flux.
    """
    K = np.eye(2) if K is None else np.asarray(K, dtype=float)
    g = p1_gradients(mesh)
    outward = -mesh._unit_inward  # (T, 3, 2), edge k joins local vertices k, k+1
    coeff = np.einsum("tka,ab,tjb->tkj", outward, K, g)
    rows = np.repeat(mesh.tri_edges, 3, axis=1).ravel()
    cols = np.tile(mesh.triangles, (1, 3)).ravel()
    J = sp.coo_matrix((coeff.ravel(), (rows, cols)), shape=(len(mesh.edges), mesh.n_nodes)).tocsr()
    J.sum_duplicates()
    return J


def interpolate(mesh: TriMesh, func) -> np.ndarray:
    return np.asarray(func(mesh.nodes[:, 0], mesh.nodes[:, 1]), dtype=float) + 0.0 * mesh.nodes[:, 0]


# ---------------------------------------------------------------------------
# 1D trace meshes


def assemble_coupling_C(sm: SegMesh) -> sp.csr_matrix:
    """P1 mass matrix of a trace mesh (all nodes)."""
    h = np.diff(sm.coords)
    n = sm.n_nodes
    main = np.zeros(n)
    main[:-1] += h / 3
    main[1:] += h / 3
    return sp.diags([h / 6, main, h / 6], [-1, 0, 1], shape=(n, n), format="csr")


segment_mass = assemble_coupling_C


def segment_hat_values(sm: SegMesh, elem, s):
    """Values of the two hats of element ``elem`` at arc length ``s``."""
    a = sm.coords[elem]
    h = sm.coords[elem + 1] - a
    r = (s - a) / h
    return np.column_stack([1 - r, r])


def trace_overlay(mesh: TriMesh, t: Trace, fid, sm: SegMesh = None) -> OverlaySegment:
    """Overlay of a trace (in ``fid``'s local frame) with the fracture mesh and optionally its SegMesh."""
    p0, p1 = t.local_segment(fid)
    meshes = [mesh] if sm is None else [mesh, sm]
    return overlay_segment(p0, p1, meshes)


def assemble_coupling_B(mesh: TriMesh, sm: SegMesh, t: Trace, fid) -> sp.csr_matrix:
    """``B[k, j] = int_S mu_k phi_j|_S``: rows SegMesh nodes, columns fracture nodes.

    Both factors are linear on every overlay piece, so 2-point Gauss is exact.
    """
    ov = trace_overlay(mesh, t, fid, sm)
    xg, wg = gauss_interval(2)
    s0, s1 = ov.breakpoints[:-1], ov.breakpoints[1:]
    h = s1 - s0
    rows, cols, vals = [], [], []
    for x, w in zip(xg, wg):
        s = s0 + x * h
        mu = segment_hat_values(sm, ov.cells[:, 1], s)
        lam = mesh.barycentric(ov.cells[:, 0], ov.points(s))
        tri = mesh.triangles[ov.cells[:, 0]]
        for a in range(2):
            for b in range(3):
                rows.append(ov.cells[:, 1] + a)
                cols.append(tri[:, b])
                vals.append(w * h * mu[:, a] * lam[:, b])
    B = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(sm.n_nodes, mesh.n_nodes)).tocsr()
    B.sum_duplicates()
    return B


def trace_integral(mesh: TriMesh, u, t: Trace, fid) -> float:
    """``int_S u_h`` for a P1 function on the fracture mesh."""
    ov = trace_overlay(mesh, t, fid)
    s0, s1 = ov.breakpoints[:-1], ov.breakpoints[1:]
    mid = 0.5 * (s0 + s1)
    lam = mesh.barycentric(ov.cells[:, 0], ov.points(mid))
    vals = np.einsum("ki,ki->k", lam, np.asarray(u)[mesh.triangles[ov.cells[:, 0]]])
    return float(np.sum(vals * (s1 - s0)))


# ---------------------------------------------------------------------------
# Dirichlet data and elimination


def dirichlet_data(mesh: TriMesh, f: Fracture):
    """Constrained node indices and their values (first matching Dirichlet edge wins)."""
    idx = np.flatnonzero(mesh.node_markers == DIRICHLET)
    vals = np.zeros(len(idx))
    bnd = mesh.boundary_edges
    bnd = bnd[mesh.edge_bc[bnd] >= 0]
    assigned = np.zeros(mesh.n_nodes, dtype=bool)
    value = np.zeros(mesh.n_nodes)
    for e in bnd:
        bc = f.boundary_conditions[mesh.edge_bc[e]]
        if not bc.is_dirichlet:
            continue
        ends = mesh.edges[e]
        todo = ends[~assigned[ends]]
        if todo.size:
            value[todo] = bc.evaluate(mesh.nodes[todo])
            assigned[todo] = True
    vals = value[idx]
    return idx, vals


def lift(matrix, rhs, constrained, values):
    """Eliminate known unknowns: returns ``(M_ff, b_f - M_fc x_c, free)``."""
    matrix = sp.csr_matrix(matrix)
    n = matrix.shape[0]
    mask = np.ones(n, dtype=bool)
    mask[constrained] = False
    free = np.flatnonzero(mask)
    xc = np.zeros(n)
    xc[constrained] = values
    b = np.asarray(rhs, dtype=float) - matrix @ xc
    return matrix[free][:, free], b[free], free


def apply_dirichlet(A, b, mesh: TriMesh, f: Fracture):
    """Single-fracture elimination; returns ``(A_ff, b_f, free_nodes, full_values)``."""
    idx, vals = dirichlet_data(mesh, f)
    Aff, bf, free = lift(A, b, idx, vals)
    full = np.zeros(mesh.n_nodes)
    full[idx] = vals
    return Aff, bf, free, full


# ---------------------------------------------------------------------------
# global numbering


@dataclass
class DofMap:
    """Numbering of the reduced unknown vector.

    Keys are ``("u", fid)``, ``("lam", fid, tid)`` and ``("psi", tid)``, in
    that order.  Each block has a full local size (all mesh nodes), a set of
    free local indices that become unknowns, and prescribed values on the
    remaining ones.
    """

    keys: List[Hashable] = field(default_factory=list)
    sizes: Dict[Hashable, int] = field(default_factory=dict)
    free: Dict[Hashable, np.ndarray] = field(default_factory=dict)
    fixed: Dict[Hashable, Tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)
    full_offset: Dict[Hashable, int] = field(default_factory=dict)
    offset: Dict[Hashable, int] = field(default_factory=dict)

    def add(self, key, size, fixed_idx=(), fixed_vals=()):
        if key in self.sizes:
            raise ValueError(f"duplicate block {key}")
        fixed_idx = np.asarray(fixed_idx, dtype=np.int64)
        mask = np.ones(size, dtype=bool)
        mask[fixed_idx] = False
        self.full_offset[key] = self.full_size
        self.offset[key] = self.total
        self.keys.append(key)
        self.sizes[key] = size
        self.free[key] = np.flatnonzero(mask)
        self.fixed[key] = (fixed_idx, np.asarray(fixed_vals, dtype=float))

    @property
    def full_size(self):
        return sum(self.sizes.values())

    @property
    def total(self):
        return sum(len(v) for v in self.free.values())

    def slice(self, key):
        a = self.offset[key]
        return slice(a, a + len(self.free[key]))

    def full_slice(self, key):
        a = self.full_offset[key]
        return slice(a, a + self.sizes[key])

    def count(self, kind):
        return sum(len(self.free[k]) for k in self.keys if k[0] == kind)

    def constrained_full(self):
        idx, vals = [], []
        for k in self.keys:
            i, v = self.fixed[k]
            idx.append(i + self.full_offset[k])
            vals.append(v)
        return np.concatenate(idx), np.concatenate(vals)

    def expand(self, x):
        """Reduced vector -> dict of full block vectors with prescribed values reinstated."""
        out = {}
        for k in self.keys:
            v = np.zeros(self.sizes[k])
            i, vals = self.fixed[k]
            v[i] = vals
            v[self.free[k]] = x[self.slice(k)]
            out[k] = v
        return out
