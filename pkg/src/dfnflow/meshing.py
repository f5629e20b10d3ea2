"""Fracture triangulations, trace meshes, stabilisation bands and overlays.

Fracture meshes are generated without looking at the traces, so they are
in general non-matching with every trace and with each other.  All
cross-mesh integrals are done on an :class:`OverlaySegment`, i.e. on a
segment cut into pieces that each sit inside one cell of every mesh
involved.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .geometry import Fracture, Network, Trace, clip_polygon

INTERIOR, DIRICHLET, NEUMANN = 0, 1, 2
SHAPE_FLOOR = 1e-3


@dataclass(eq=False)
class TriMesh:
    """P1 triangulation in fracture-local coordinates.

    ``edge_tris[e] = (left, right)``: the triangle on the left / right of the
    directed edge ``edges[e, 0] -> edges[e, 1]``; -1 on the outside.
    ``edge_bc[e]`` is the polygon edge index of a boundary edge, -1 inside.
    """

    nodes: np.ndarray
    triangles: np.ndarray
    meshsize: float
    fracture_id: Optional[int] = None
    node_markers: np.ndarray = None
    edges: np.ndarray = field(init=False)
    edge_tris: np.ndarray = field(init=False)
    tri_edges: np.ndarray = field(init=False)
    edge_bc: np.ndarray = field(init=False)

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes, dtype=float)
        tris = np.asarray(self.triangles, dtype=np.int64)
        p = self.nodes[tris]
        area = 0.5 * ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
                      - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1]))
        flip = area < 0
        tris[flip] = tris[flip][:, [0, 2, 1]]
        self.triangles = tris
        self._build_edges()
        if self.node_markers is None:
            self.node_markers = np.zeros(len(self.nodes), dtype=np.int8)
        self.edge_bc = np.full(len(self.edges), -1, dtype=np.int64)

    def _build_edges(self):
        t = self.triangles
        directed = np.stack([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]], axis=1).reshape(-1, 2)
        key = np.sort(directed, axis=1)
        edges, inv = np.unique(key, axis=0, return_inverse=True)
        inv = inv.ravel()
        tri_of = np.repeat(np.arange(len(t)), 3)
        side = (directed[:, 0] > directed[:, 1]).astype(np.int64)
        edge_tris = np.full((len(edges), 2), -1, dtype=np.int64)
        edge_tris[inv, side] = tri_of
        self.edges = edges
        self.edge_tris = edge_tris
        self.tri_edges = inv.reshape(-1, 3)

    # -- geometric quantities --------------------------------------------
    @property
    def n_nodes(self):
        return len(self.nodes)

    @property
    def n_triangles(self):
        return len(self.triangles)

    @cached_property
    def areas(self):
        p = self.nodes[self.triangles]
        return 0.5 * ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
                      - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1]))

    @cached_property
    def edge_lengths(self):
        return np.linalg.norm(self.nodes[self.edges[:, 1]] - self.nodes[self.edges[:, 0]], axis=1)

    @cached_property
    def diameters(self):
        p = self.nodes[self.triangles]
        return np.max(np.stack([np.linalg.norm(p[:, i] - p[:, (i + 1) % 3], axis=1) for i in range(3)]), axis=0)

    @property
    def boundary_edges(self):
        return np.flatnonzero((self.edge_tris < 0).any(axis=1))

    @cached_property
    def _unit_inward(self):
        p = self.nodes[self.triangles]
        d = np.roll(p, -1, axis=1) - p
        n = np.stack([-d[..., 1], d[..., 0]], axis=-1)
        return n / np.linalg.norm(n, axis=-1, keepdims=True)

    @cached_property
    def _bbox(self):
        p = self.nodes[self.triangles]
        return p.min(axis=1), p.max(axis=1)

    def barycentric(self, cells, pts):
        """Barycentric coordinates of ``pts`` (n, 2) in triangles ``cells`` (n,)."""
        p = self.nodes[self.triangles[cells]]
        v0, v1 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
        r = np.asarray(pts) - p[:, 0]
        det = v0[:, 0] * v1[:, 1] - v0[:, 1] * v1[:, 0]
        l1 = (r[:, 0] * v1[:, 1] - r[:, 1] * v1[:, 0]) / det
        l2 = (v0[:, 0] * r[:, 1] - v0[:, 1] * r[:, 0]) / det
        return np.column_stack([1 - l1 - l2, l1, l2])

    def segment_intervals(self, p0, d, length, tol=None, inflate=False):
        """Triangles crossed by ``p0 + s d``, ``s in [0, length]``, with their s-intervals.

        With ``inflate`` every triangle is grown by ``tol``, which never misses
        a cell but can report spurious short intervals near vertices.
        """
        tol = 1e-10 * max(self.meshsize, 1e-300) if tol is None else tol
        p1 = p0 + length * d
        lo = np.minimum(p0, p1) - tol
        hi = np.maximum(p0, p1) + tol
        bmin, bmax = self._bbox
        cand = np.flatnonzero(np.all((bmax >= lo) & (bmin <= hi), axis=1))
        if cand.size == 0:
            return cand, np.zeros(0), np.zeros(0)
        verts = self.nodes[self.triangles[cand]]
        n = self._unit_inward[cand]
        num = np.einsum("tkj,tkj->tk", n, p0 - verts)
        if inflate:
            num = num + tol
        den = n @ d
        a = np.zeros(len(cand))
        b = np.full(len(cand), float(length))
        ok = np.ones(len(cand), dtype=bool)
        with np.errstate(divide="ignore", invalid="ignore"):
            s = -num / den
        # the tolerance only decides on which side of a parallel edge we are
        par = np.abs(den) < 1e-14
        ok &= ~np.any(par & (num + tol < 0), axis=1)
        a = np.maximum(a, np.max(np.where(~par & (den > 0), s, -np.inf), axis=1))
        b = np.minimum(b, np.min(np.where(~par & (den < 0), s, np.inf), axis=1))
        ok &= b - a > 1e-12 * length
        return cand[ok], a[ok], b[ok]

    def locate(self, pts, tol=1e-10):
        """Containing triangle for each point (-1 when outside); brute force on bounding boxes."""
        pts = np.atleast_2d(pts)
        out = np.full(len(pts), -1, dtype=np.int64)
        bmin, bmax = self._bbox
        scale = tol * self.meshsize
        for k, x in enumerate(pts):
            cand = np.flatnonzero(np.all((bmin <= x + scale) & (bmax >= x - scale), axis=1))
            if cand.size:
                lam = self.barycentric(cand, np.repeat(x[None], len(cand), axis=0))
                hit = np.flatnonzero(lam.min(axis=1) >= -tol)
                if hit.size:
                    out[k] = cand[hit[0]]
        return out


@dataclass(eq=False)
class SegMesh:
    """Uniform 1D mesh of a trace, arc length from 0 to the trace length."""

    trace_id: int
    coords: np.ndarray
    meshsize: float
    endpoint_markers: Tuple[str, str] = ("free", "free")
    endpoint_values: Tuple[float, float] = (0.0, 0.0)

    @property
    def length(self):
        return float(self.coords[-1])

    @property
    def n_nodes(self):
        return len(self.coords)

    @property
    def n_elements(self):
        return len(self.coords) - 1

    @property
    def free_nodes(self):
        idx = np.arange(self.n_nodes)
        keep = np.ones(self.n_nodes, dtype=bool)
        if self.endpoint_markers[0] == "dirichlet":
            keep[0] = False
        if self.endpoint_markers[1] == "dirichlet":
            keep[-1] = False
        return idx[keep]

    @property
    def constrained_nodes(self):
        return np.setdiff1d(np.arange(self.n_nodes), self.free_nodes)


@dataclass(eq=False)
class AuxBandMesh:
    """Two rows of triangles straddling a trace inside one fracture.

    Trace breakpoints are aux nodes ``trace_node_map[k]``; every other aux
    node, plus Dirichlet trace endpoints, is a zero node.  ``free_nodes``
    lists the aux nodes carrying a basis function, in SegMesh free-node order.
    """

    fracture_id: int
    trace_id: int
    mesh: TriMesh
    trace_node_map: np.ndarray
    zero_nodes: np.ndarray
    free_nodes: np.ndarray
    halfwidth: float


@dataclass(eq=False)
class OverlaySegment:
    """Partition of a segment ``[p0, p1]`` compatible with several meshes.

    ``breakpoints`` are arc-length values; ``cells[k, m]`` is the cell of
    mesh ``m`` holding sub-interval ``k`` (-1 if the mesh does not cover it).
    """

    p0: np.ndarray
    p1: np.ndarray
    breakpoints: np.ndarray
    cells: np.ndarray

    @property
    def length(self):
        return float(np.linalg.norm(self.p1 - self.p0))

    @property
    def direction(self):
        return (self.p1 - self.p0) / self.length

    def points(self, s):
        return self.p0 + np.multiply.outer(s, self.direction)


# ---------------------------------------------------------------------------
# triangulation


def _is_axis_rectangle(v):
    if len(v) != 4:
        return False
    d = np.roll(v, -1, axis=0) - v
    return bool(np.all(np.min(np.abs(d), axis=1) <= 1e-12 * np.abs(d).max()))


def _cells(length, delta, odd):
    n = max(1, math.ceil(length / delta - 1e-12))
    return n + 1 if odd and n % 2 == 0 else n


def _structured_rectangle(xmin, xmax, ymin, ymax, delta, jitter, seed, odd=False):
    nx = _cells(xmax - xmin, delta, odd)
    ny = _cells(ymax - ymin, delta, odd)
    x = np.linspace(xmin, xmax, nx + 1)
    y = np.linspace(ymin, ymax, ny + 1)
    X, Y = np.meshgrid(x, y, indexing="ij")
    nodes = np.column_stack([X.ravel(), Y.ravel()])
    if jitter > 0:
        rng = np.random.default_rng(seed)
        inner = (X > xmin) & (X < xmax) & (Y > ymin) & (Y < ymax)
        h = min((xmax - xmin) / nx, (ymax - ymin) / ny)
        shift = rng.uniform(-jitter * h, jitter * h, size=(inner.sum(), 2))
        nodes[inner.ravel()] += shift
    idx = np.arange((nx + 1) * (ny + 1)).reshape(nx + 1, ny + 1)
    a = idx[:-1, :-1].ravel()
    b = idx[1:, :-1].ravel()
    c = idx[1:, 1:].ravel()
    d = idx[:-1, 1:].ravel()
    tris = np.concatenate([np.column_stack([a, b, c]), np.column_stack([a, c, d])])
    return nodes, tris


def _refine(nodes, tris):
    """Uniform red refinement: every triangle split into four."""
    edges = {}
    nodes = list(map(tuple, nodes))

    def mid(i, j):
        key = (min(i, j), max(i, j))
        if key not in edges:
            edges[key] = len(nodes)
            nodes.append(tuple(0.5 * (np.array(nodes[i]) + np.array(nodes[j]))))
        return edges[key]

    out = []
    for a, b, c in tris:
        ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
        out += [(a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca)]
    return np.array(nodes), np.array(out)


def _fan_refined(v, delta):
    c = v.mean(axis=0)
    nodes = np.vstack([c, v])
    m = len(v)
    tris = np.array([(0, 1 + k, 1 + (k + 1) % m) for k in range(m)])
    while True:
        p = nodes[tris]
        longest = max(np.linalg.norm(p[:, i] - p[:, (i + 1) % 3], axis=1).max() for i in range(3))
        if longest <= delta:
            return nodes, tris
        nodes, tris = _refine(nodes, tris)


def mark_boundary(mesh: TriMesh, f: Fracture):
    """Fill node markers and boundary-edge polygon ids from the fracture's conditions."""
    markers = np.zeros(mesh.n_nodes, dtype=np.int8)
    tol = 1e-9 * f.diameter
    for e in mesh.boundary_edges:
        mid = mesh.nodes[mesh.edges[e]].mean(axis=0)
        hits = f.edges_containing(mid, tol)
        if not hits:
            raise ValueError("boundary mesh edge does not lie on the fracture polygon")
        k = hits[0]
        mesh.edge_bc[e] = k
        for n in mesh.edges[e]:
            if f.boundary_conditions[k].is_dirichlet:
                markers[n] = DIRICHLET
            elif markers[n] == INTERIOR:
                markers[n] = NEUMANN
    mesh.node_markers = markers
    return mesh


def triangulate_fracture(f: Fracture, delta: float, jitter: float = 0.0, seed: Optional[int] = None,
                         odd_cells: bool = False) -> TriMesh:
    """Quasi-uniform triangulation of a fracture, blind to trace locations.

    Rectangles (in the local frame) get an ``n_x x n_y`` grid with
    ``n = ceil(side / delta)`` and every cell split along the same diagonal.
    ``jitter`` perturbs interior nodes by up to ``jitter * h`` per coordinate
    with a seeded generator, so that grid lines do not accidentally align with
    traces.  ``odd_cells`` rounds each cell count up to an odd number, which
    keeps the rectangle's centre lines off the grid.  Other convex polygons
    use a centroid fan refined uniformly.
    """
    diam = f.diameter
    if not 0 < delta < diam:
        raise ValueError(f"meshsize {delta} must be positive and below the fracture diameter {diam:.4g}")
    if not 0 <= jitter < 0.25:
        raise ValueError("jitter must lie in [0, 0.25)")
    v = f.vertices
    if _is_axis_rectangle(v):
        lo, hi = v.min(axis=0), v.max(axis=0)
        if seed is None:
            seed = abs(int(f.id)) * 7919 + 17
        nodes, tris = _structured_rectangle(lo[0], hi[0], lo[1], hi[1], delta, jitter, seed, odd_cells)
    else:
        nodes, tris = _fan_refined(v, delta)
    mesh = TriMesh(nodes, tris, float(delta), fracture_id=f.id)
    if mesh.areas.min() < SHAPE_FLOOR * delta ** 2:
        raise ValueError("shape-regularity floor not reached; polygon too elongated for this meshsize")
    return mark_boundary(mesh, f)


# ---------------------------------------------------------------------------
# traces


def _endpoint_dirichlet(network: Network, t: Trace, s):
    """Dirichlet value at a trace endpoint if it lies on any Dirichlet edge, else None."""
    for fid in t.fracture_ids:
        val = network.fracture(fid).dirichlet_value(t.local_point(fid, s))
        if val is not None:
            return val
    return None


def mesh_trace(t: Trace, delta: float, network: Network) -> SegMesh:
    """Uniform mesh of a trace with ``ceil(length / delta)`` elements."""
    if not 0 < delta < t.length:
        raise ValueError(f"trace meshsize {delta} must be positive and below the trace length {t.length:.4g}")
    n = math.ceil(t.length / delta - 1e-12)
    coords = np.linspace(0.0, t.length, n + 1)
    markers, values = [], []
    for s in (0.0, t.length):
        val = _endpoint_dirichlet(network, t, s)
        markers.append("free" if val is None else "dirichlet")
        values.append(0.0 if val is None else val)
    return SegMesh(t.id, coords, t.length / n, tuple(markers), tuple(values))


# ---------------------------------------------------------------------------
# stabilisation band


def _boundary_slide(f: Fracture, p, nrm, w):
    """Point on the polygon boundary through ``p`` whose offset along ``nrm`` is ``w``.

    Returns the achieved point, or None when the boundary is nearly parallel to ``nrm``'s normal.
    """
    best = None
    for k in f.edges_containing(p):
        a, b = f.edge(k)
        e = b - a
        L = np.linalg.norm(e)
        e = e / L
        c = float(e @ nrm)
        if abs(c) < 0.1:
            continue
        tau = w / c
        pos = float((p - a) @ e)
        tau = np.clip(tau, -pos, L - pos)
        q = p + tau * e
        off = float((q - p) @ nrm)
        if best is None or off > best[1]:
            best = (q, off)
    return best


def build_aux_band(f: Fracture, t: Trace, sm: SegMesh, separation: float = math.inf) -> AuxBandMesh:
    """Band of triangles around the trace with the trace breakpoints as its spine.

    Every breakpoint station gets offset nodes at ``+-w`` along the in-plane
    normal, ``w = min(delta_m, separation / 2)`` clipped to the polygon.
    Dirichlet endpoints are pointed caps; free endpoints on the boundary get
    offset nodes slid along the boundary edge; free endpoints inside the
    fracture get an extra node beyond the tip so that they are interior.
    """
    if sm.trace_id != t.id or f.id not in t.fracture_ids:
        raise ValueError("segment mesh / trace / fracture mismatch")
    start, d = t.local_params[f.id]
    nrm = np.array([-d[1], d[0]])
    dm = sm.meshsize
    w0 = dm if not math.isfinite(separation) else min(dm, 0.5 * separation)
    floor = 1e-3 * dm
    n = sm.n_elements
    spine = start + np.multiply.outer(sm.coords, d)

    nodes = [p for p in spine]
    upper: List[Optional[int]] = [None] * (n + 1)
    lower: List[Optional[int]] = [None] * (n + 1)
    extra_tris = []

    def add(p):
        nodes.append(np.asarray(p, dtype=float))
        return len(nodes) - 1

    def offsets(p):
        wp = min(w0, f.ray_exit(p, nrm))
        wm = min(w0, f.ray_exit(p, -nrm))
        if min(wp, wm) < floor:
            raise ValueError(f"stabilisation band collapses at trace {t.id} on fracture {f.id}")
        return wp, wm

    for k in range(1, n):
        wp, wm = offsets(spine[k])
        upper[k] = add(spine[k] + wp * nrm)
        lower[k] = add(spine[k] - wm * nrm)

    for k, tip_dir in ((0, -d), (n, d)):
        if sm.endpoint_markers[0 if k == 0 else 1] == "dirichlet":
            continue
        p = spine[k]
        on_boundary = bool(f.edges_containing(p))
        if on_boundary:
            up = _boundary_slide(f, p, nrm, w0)
            lo = _boundary_slide(f, p, -nrm, w0)
            if up is None or lo is None or min(up[1], lo[1]) < floor:
                raise ValueError(f"stabilisation band collapses at the end of trace {t.id} on fracture {f.id}")
            upper[k], lower[k] = add(up[0]), add(lo[0])
        else:
            wp, wm = offsets(p)
            upper[k] = add(p + wp * nrm)
            lower[k] = add(p - wm * nrm)
            we = min(w0, f.ray_exit(p, tip_dir))
            if we < floor:
                raise ValueError(f"stabilisation band collapses beyond the tip of trace {t.id}")
            tip = add(p + we * tip_dir)
            extra_tris += [(tip, k, upper[k]), (tip, lower[k], k)]

    tris = []
    for k in range(n):
        for side in (upper, lower):
            a, b = side[k], side[k + 1]
            if a is not None and b is not None:
                tris += [(k, k + 1, b), (k, b, a)]
            elif b is not None:
                tris.append((k, k + 1, b))
            elif a is not None:
                tris.append((k, k + 1, a))
    tris += extra_tris

    nodes = np.array(nodes)
    trace_map = np.arange(n + 1)
    free = trace_map[sm.free_nodes]
    zero = np.setdiff1d(np.arange(len(nodes)), free)
    if tris:
        mesh = TriMesh(nodes, np.array(tris), dm, fracture_id=f.id)
        if mesh.areas.min() <= 0:
            raise ValueError("degenerate stabilisation band")
    else:
        mesh = TriMesh(nodes, np.zeros((0, 3), dtype=np.int64), dm, fracture_id=f.id)
    return AuxBandMesh(f.id, t.id, mesh, trace_map, zero, free, w0)


# ---------------------------------------------------------------------------
# overlays


def overlay_segment(p0, p1, meshes: Sequence, require_cover: bool = True) -> OverlaySegment:
    """Split ``[p0, p1]`` at every crossing with the given meshes.

    ``SegMesh`` entries are taken to parametrise the same segment by arc
    length.  With ``require_cover`` every sub-interval must lie in a cell of
    every mesh.
    """
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    L = float(np.linalg.norm(p1 - p0))
    if L <= 0:
        raise ValueError("degenerate segment")
    d = (p1 - p0) / L
    pts = [np.array([0.0, L])]
    hits = []
    for m in meshes:
        if isinstance(m, SegMesh):
            if abs(m.length - L) > 1e-9 * L:
                raise ValueError("segment mesh does not match the segment length")
            pts.append(m.coords * (L / m.length))
            hits.append(None)
        else:
            _, a, b = m.segment_intervals(p0, d, L)
            pts += [a, b]
            hits.append(m.segment_intervals(p0, d, L, inflate=True))
    s = np.clip(np.sort(np.concatenate(pts)), 0.0, L)
    keep = np.concatenate([[True], np.diff(s) > 1e-9 * L])
    s = s[keep]
    s[-1] = L
    mids = 0.5 * (s[:-1] + s[1:])
    cells = np.full((len(mids), len(meshes)), -1, dtype=np.int64)
    for j, m in enumerate(meshes):
        if hits[j] is None:
            c = np.searchsorted(m.coords * (L / m.length), mids) - 1
            cells[:, j] = np.clip(c, 0, m.n_elements - 1)
            continue
        tc, a, b = hits[j]
        if tc.size == 0:
            continue
        # among the cells whose grown interval holds the midpoint, take the one it is deepest inside
        k, c = np.nonzero((a[None, :] <= mids[:, None]) & (mids[:, None] <= b[None, :]))
        if k.size == 0:
            continue
        depth = m.barycentric(tc[c], p0 + np.multiply.outer(mids[k], d)).min(axis=1)
        order = np.lexsort((-depth, k))
        first = np.concatenate([[True], k[order][1:] != k[order][:-1]])
        cells[k[order][first], j] = tc[c[order][first]]
    if require_cover and np.any(cells < 0):
        raise ValueError("segment leaves the area covered by a mesh")
    return OverlaySegment(p0, p1, s, cells)


def overlay_areas(mesh_a: TriMesh, mesh_b: TriMesh):
    """Pairs of overlapping triangles ``(ia, ib, area)`` by polygon clipping."""
    amin, amax = mesh_a._bbox
    bmin, bmax = mesh_b._bbox
    ia, ib, areas = [], [], []
    for j in range(mesh_b.n_triangles):
        cand = np.flatnonzero(np.all((amax >= bmin[j]) & (amin <= bmax[j]), axis=1))
        clip = mesh_b.nodes[mesh_b.triangles[j]]
        for i in cand:
            poly = clip_polygon(mesh_a.nodes[mesh_a.triangles[i]], clip)
            if len(poly) < 3:
                continue
            P = np.array(poly)
            x, y = P[:, 0], P[:, 1]
            area = 0.5 * abs(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))
            if area > 1e-14 * mesh_b.areas[j]:
                ia.append(i)
                ib.append(j)
                areas.append(area)
    return np.array(ia, dtype=np.int64), np.array(ib, dtype=np.int64), np.array(areas)


# ---------------------------------------------------------------------------
# inspection output

_MARKER_NAMES = {INTERIOR: "interior", DIRICHLET: "dirichlet", NEUMANN: "neumann"}


def dump_mesh(mesh: TriMesh, path):
    """Plain-text dump: ``nodes:`` lines ``u v marker`` then ``triangles:`` lines ``a b c``."""
    with open(path, "w") as fh:
        fh.write(f"# fracture {mesh.fracture_id} meshsize {mesh.meshsize:.6g}\n")
        fh.write(f"nodes: {mesh.n_nodes}\n")
        for (u, v), m in zip(mesh.nodes, mesh.node_markers):
            fh.write(f"{u:.16g} {v:.16g} {_MARKER_NAMES[int(m)]}\n")
        fh.write(f"triangles: {mesh.n_triangles}\n")
        for a, b, c in mesh.triangles:
            fh.write(f"{a} {b} {c}\n")
