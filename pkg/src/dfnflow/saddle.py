"""Global (u, lambda, psi) saddle-point system: assembly, direct solve, conditioning.

Block rows, per fracture ``i`` and trace ``m``::

    u_i       :  A_i u_i - sum_m B_im^T lam_im              = g_i
    lam_im    : -B_im u_i                 + C_m psi_m        = 0
    psi_m     :            sum_i C_m^T lam_im                = 0

plus the stabilisation blocks of :mod:`dfnflow.stabilization`.  With this
sign choice the stabilised matrix is symmetric exactly when ``t = -1``.
"""
from __future__ import annotations

import contextlib
import ctypes
import math
import os
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Tuple

import numpy as np
import scipy.io
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fem import (DofMap, assemble_coupling_B, assemble_coupling_C, assemble_load, assemble_stiffness,
                  dirichlet_data, lift)
from .geometry import Network
from .meshing import AuxBandMesh, SegMesh, TriMesh, build_aux_band, mesh_trace, triangulate_fracture
from .stabilization import StabOperators, build_stab, meshdep_blocks, stab_blocks

VARIANTS = ("none", "natural", "meshdep")
PIVOT_TOL = 1e-14


class SingularSystem(RuntimeError):
    """The direct solver failed or returned an inaccurate solution."""


@dataclass
class Discretization:
    network: Network
    meshes: Dict[int, TriMesh]
    segmeshes: Dict[int, SegMesh]
    bands: Dict[Tuple[int, int], AuxBandMesh]
    forcing: Dict[int, Optional[Callable]]
    delta: float
    trace_ratio: float = 1.0
    jitter: float = 0.0
    odd_cells: bool = False


def discretize(network: Network, delta: float, forcing=None, trace_ratio: float = 1.0,
               jitter: float = 0.0, odd_cells: bool = False, bands: bool = True,
               fracture_deltas: Optional[Dict[int, float]] = None) -> Discretization:
    """Independent meshes of every fracture and trace, plus the stabilisation bands.

    Trace meshes use ``trace_ratio * delta``; ``fracture_deltas`` overrides
    the meshsize of individual fractures.
    """
    forcing = dict(forcing or {})
    fd = dict(fracture_deltas or {})
    meshes = {f.id: triangulate_fracture(f, fd.get(f.id, delta), jitter=jitter, odd_cells=odd_cells)
              for f in network.fractures}
    segs = {t.id: mesh_trace(t, trace_ratio * delta, network) for t in network.traces}
    band = {}
    if bands:
        for t in network.traces:
            for fid in t.fracture_ids:
                band[(fid, t.id)] = build_aux_band(network.fracture(fid), t, segs[t.id], network.separation)
    return Discretization(network, meshes, segs, band, {f.id: forcing.get(f.id) for f in network.fractures},
                          float(delta), float(trace_ratio), float(jitter), bool(odd_cells))


@dataclass
class SaddleSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    dofmap: DofMap
    variant: str
    weight: float
    t: float
    disc: Discretization
    stab: Dict[Tuple[int, int], StabOperators] = field(default_factory=dict)
    full_matrix: Optional[sp.csr_matrix] = None
    full_rhs: Optional[np.ndarray] = None

    @property
    def size(self):
        return self.matrix.shape[0]


@dataclass
class Solution:
    u: Dict[int, np.ndarray]
    lam: Dict[Tuple[int, int], np.ndarray]
    psi: Dict[int, np.ndarray]
    vector: np.ndarray


class _Builder:
    def __init__(self, n):
        self.n = n
        self.rows, self.cols, self.vals = [], [], []
        self.rhs = np.zeros(n)

    def block(self, M, r, c):
        M = sp.coo_matrix(M)
        self.rows.append(np.asarray(r)[M.row])
        self.cols.append(np.asarray(c)[M.col])
        self.vals.append(M.data)

    def matrix(self):
        if not self.rows:
            return sp.csr_matrix((self.n, self.n))
        M = sp.coo_matrix((np.concatenate(self.vals), (np.concatenate(self.rows), np.concatenate(self.cols))),
                          shape=(self.n, self.n)).tocsr()
        M.sum_duplicates()
        return M


def build_dofmap(disc: Discretization) -> DofMap:
    dm = DofMap()
    net = disc.network
    for f in net.fractures:
        idx, vals = dirichlet_data(disc.meshes[f.id], f)
        dm.add(("u", f.id), disc.meshes[f.id].n_nodes, idx, vals)
    for t in net.traces:
        sm = disc.segmeshes[t.id]
        for fid in t.fracture_ids:
            c = sm.constrained_nodes
            dm.add(("lam", fid, t.id), sm.n_nodes, c, np.zeros(len(c)))
    for t in net.traces:
        sm = disc.segmeshes[t.id]
        c = sm.constrained_nodes
        vals = [sm.endpoint_values[0] if k == 0 else sm.endpoint_values[1] for k in c]
        dm.add(("psi", t.id), sm.n_nodes, c, vals)
    return dm


def assemble_system(disc: Discretization, variant: str = "natural", weight: float = 0.1, t: float = 0.0,
                    closed_form: bool = True) -> SaddleSystem:
    """Assemble and reduce the global system for one variant.

    ``weight`` is omega (natural) or alpha (meshdep) and is ignored for
    ``none``.  ``closed_form`` selects the closed-form mesh-dependent blocks
    rather than the generic dual-product path.
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    if variant != "none" and not weight > 0:
        raise ValueError("stabilisation weight must be positive")
    net = disc.network
    dm = build_dofmap(disc)
    b = _Builder(dm.full_size)
    full = {k: np.arange(dm.sizes[k]) + dm.full_offset[k] for k in dm.keys}
    stab = {}
    for f in net.fractures:
        mesh = disc.meshes[f.id]
        ru = full[("u", f.id)]
        b.block(assemble_stiffness(mesh, f.permeability), ru, ru)
        b.rhs[ru] += assemble_load(mesh, disc.forcing.get(f.id))
    for tr in net.traces:
        sm = disc.segmeshes[tr.id]
        C = assemble_coupling_C(sm)
        rp = full[("psi", tr.id)]
        for fid in tr.fracture_ids:
            f = net.fracture(fid)
            mesh = disc.meshes[fid]
            ru, rl = full[("u", fid)], full[("lam", fid, tr.id)]
            B = assemble_coupling_B(mesh, sm, tr, fid)
            b.block(-B.T, ru, rl)
            b.block(-B, rl, ru)
            b.block(C, rl, rp)
            b.block(C.T, rp, rl)
            if variant == "none":
                continue
            ops = build_stab(variant, disc.bands[(fid, tr.id)], mesh, sm, disc.forcing.get(fid), f.permeability)
            stab[(fid, tr.id)] = ops
            blocks = meshdep_blocks(ops, weight, t) if (variant == "meshdep" and closed_form) \
                else stab_blocks(ops, weight, t)
            rlf = rl[sm.free_nodes]
            b.block(blocks["uu"], ru, ru)
            b.block(blocks["ul"], ru, rlf)
            b.block(blocks["lu"], rlf, ru)
            b.block(blocks["ll"], rlf, rlf)
            b.rhs[ru] += blocks["fu"]
            b.rhs[rlf] += blocks["fl"]
    M = b.matrix()
    cidx, cval = dm.constrained_full()
    red, rhs, _ = lift(M, b.rhs, cidx, cval)
    return SaddleSystem(red.tocsr(), rhs, dm, variant, float(weight), float(t), disc, stab, M, b.rhs)


@contextlib.contextmanager
def _silence_c_stdio():
    # SuperLU reports a breakdown through xerbla on C stdout before raising
    libc = ctypes.CDLL(None)
    libc.fflush(None)
    saved = [os.dup(1), os.dup(2)]
    with open(os.devnull, "w") as null:
        os.dup2(null.fileno(), 1)
        os.dup2(null.fileno(), 2)
        try:
            yield
        finally:
            libc.fflush(None)
            os.dup2(saved[0], 1)
            os.dup2(saved[1], 2)
            for fd in saved:
                os.close(fd)


def solve(sys: SaddleSystem, check: bool = True) -> Solution:
    """Sparse LU solve; rejects near-zero pivots and large backward errors."""
    A = sys.matrix.tocsc()
    try:
        with _silence_c_stdio():
            lu = spla.splu(A)
    except RuntimeError as exc:
        raise SingularSystem(str(exc)) from exc
    piv = np.abs(lu.U.diagonal())
    if piv.size and not piv.min() > PIVOT_TOL * piv.max():
        raise SingularSystem(f"pivot ratio {piv.min() / piv.max():.3e} below {PIVOT_TOL:g}")
    x = lu.solve(sys.rhs)
    if not np.all(np.isfinite(x)):
        raise SingularSystem("non-finite solution")
    if check:
        res = np.linalg.norm(A @ x - sys.rhs)
        scale = np.linalg.norm(sys.rhs) + spla.norm(A) * np.linalg.norm(x)
        if res > 1e-9 * scale:
            raise SingularSystem(f"residual {res:.3e} exceeds tolerance (scale {scale:.3e})")
    return unpack(sys, x)


def unpack(sys: SaddleSystem, x) -> Solution:
    blocks = sys.dofmap.expand(x)
    u = {k[1]: v for k, v in blocks.items() if k[0] == "u"}
    lam = {(k[1], k[2]): v for k, v in blocks.items() if k[0] == "lam"}
    psi = {k[1]: v for k, v in blocks.items() if k[0] == "psi"}
    return Solution(u, lam, psi, np.asarray(x))


def flux_conservation_residual(sol: Solution, sys: SaddleSystem) -> float:
    """``max_k |sum_i int lam_i psi_k|`` over free trace nodes, over ``sum_i ||lam_i||_0``."""
    worst, norm = 0.0, 0.0
    for tr in sys.disc.network.traces:
        sm = sys.disc.segmeshes[tr.id]
        C = assemble_coupling_C(sm)
        r = np.zeros(sm.n_nodes)
        for fid in tr.fracture_ids:
            lam = sol.lam[(fid, tr.id)]
            r += C @ lam
            norm += math.sqrt(max(float(lam @ (C @ lam)), 0.0))
        free = sm.free_nodes
        if free.size:
            worst = max(worst, float(np.max(np.abs(r[free]))))
    return worst / norm if norm > 0 else worst


def condition_number(matrix, dense_limit: int = 4000, maxiter: int = 200, rtol: float = 1e-6,
                     seed: int = 12345) -> float:
    """2-norm condition number; dense SVD up to ``dense_limit``, else an iterative estimate."""
    A = sp.csc_matrix(matrix)
    n = A.shape[0]
    if n == 0:
        return 1.0
    if n <= dense_limit:
        s = scipy.linalg.svdvals(A.toarray())
        if s[-1] < 1e-300:
            return math.inf
        return float(s[0] / s[-1])
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(n)
    x /= np.linalg.norm(x)
    smax = 0.0
    for _ in range(maxiter):
        y = A.T @ (A @ x)
        nrm = np.linalg.norm(y)
        if nrm == 0:
            return math.inf
        new = math.sqrt(nrm)
        x = y / nrm
        if abs(new - smax) <= rtol * new:
            smax = new
            break
        smax = new
    try:
        with _silence_c_stdio():
            lu = spla.splu(A)
    except RuntimeError:
        return math.inf
    x = rng.standard_normal(n)
    x /= np.linalg.norm(x)
    inv = 0.0
    for _ in range(maxiter):
        y = lu.solve(lu.solve(x), trans="T")
        nrm = np.linalg.norm(y)
        if not np.isfinite(nrm):
            return math.inf
        new = math.sqrt(nrm)
        x = y / nrm
        if abs(new - inv) <= rtol * new:
            inv = new
            break
        inv = new
    smin = 1.0 / inv if inv > 0 else 0.0
    if smin < 1e-300:
        return math.inf
    return float(smax / smin)


def dump_matrix(sys: SaddleSystem, path):
    scipy.io.mmwrite(str(path), sys.matrix, comment=f"variant={sys.variant} weight={sys.weight} t={sys.t}")
