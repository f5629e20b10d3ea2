"""Fractures, traces and the fracture network.

Every fracture carries its own orthonormal in-plane frame; all finite
element work happens in those local 2D coordinates and each trace is
stored once per fracture through an affine arc-length parametrisation.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

BCValue = Union[float, Callable[[np.ndarray, np.ndarray], np.ndarray]]


def _frozen(a, shape=None):
    arr = np.array(a, dtype=float)
    if shape is not None and arr.shape != shape:
        raise ValueError(f"expected shape {shape}, got {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class BoundaryCondition:
    """Condition on one polygon edge: ``dirichlet`` with a value, or homogeneous ``neumann``."""

    kind: str = "neumann"
    value: BCValue = 0.0

    def __post_init__(self):
        if self.kind not in ("dirichlet", "neumann"):
            raise ValueError(f"unknown boundary condition kind {self.kind!r}")

    @property
    def is_dirichlet(self):
        return self.kind == "dirichlet"

    def evaluate(self, pts):
        """Dirichlet value at local points ``pts`` of shape (n, 2)."""
        pts = np.atleast_2d(pts)
        if callable(self.value):
            out = np.asarray(self.value(pts[:, 0], pts[:, 1]), dtype=float)
            return np.broadcast_to(out, (len(pts),)).copy()
        return np.full(len(pts), float(self.value))


DIRICHLET0 = BoundaryCondition("dirichlet", 0.0)
NEUMANN0 = BoundaryCondition("neumann")


@dataclass(frozen=True, eq=False)
class Fracture:
    """Planar convex polygon with a local frame.

    ``vertices`` are local coordinates ``(u, v)`` with respect to ``origin``
    and the orthonormal ``axes``; edge ``k`` runs from vertex ``k`` to
    vertex ``k + 1`` and carries ``boundary_conditions[k]``.
    """

    id: int
    origin: np.ndarray
    axes: np.ndarray
    vertices: np.ndarray
    permeability: np.ndarray = field(default_factory=lambda: np.eye(2))
    boundary_conditions: Tuple[BoundaryCondition, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "origin", _frozen(self.origin, (3,)))
        object.__setattr__(self, "axes", _frozen(self.axes, (2, 3)))
        verts = _frozen(self.vertices)
        if verts.ndim != 2 or verts.shape[1] != 2 or len(verts) < 3:
            raise ValueError("vertices must be an (n>=3, 2) array")
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "permeability", _frozen(self.permeability, (2, 2)))
        bcs = tuple(self.boundary_conditions) or (NEUMANN0,) * len(verts)
        if len(bcs) != len(verts):
            raise ValueError("one boundary condition per polygon edge is required")
        object.__setattr__(self, "boundary_conditions", bcs)

        gram = self.axes @ self.axes.T
        if np.max(np.abs(gram - np.eye(2))) > 1e-12:
            raise ValueError(f"fracture {self.id}: axes are not orthonormal")
        K = self.permeability
        if abs(K[0, 1] - K[1, 0]) > 1e-14 * max(1.0, abs(K).max()) or np.linalg.eigvalsh(K).min() <= 0:
            raise ValueError(f"fracture {self.id}: permeability must be symmetric positive definite")
        if _signed_area(verts) <= 0:
            raise ValueError(f"fracture {self.id}: polygon must be positively oriented")
        if not _is_convex(verts):
            raise ValueError(f"fracture {self.id}: only convex polygons are supported")

    # -- frame ------------------------------------------------------------
    @property
    def normal(self):
        n = np.cross(self.axes[0], self.axes[1])
        return n / np.linalg.norm(n)

    def to_global(self, uv):
        uv = np.asarray(uv, dtype=float)
        return self.origin + uv @ self.axes

    def to_local(self, p):
        p = np.asarray(p, dtype=float)
        return (p - self.origin) @ self.axes.T

    # -- polygon ----------------------------------------------------------
    @property
    def n_edges(self):
        return len(self.vertices)

    def edge(self, k):
        return self.vertices[k], self.vertices[(k + 1) % self.n_edges]

    @property
    def diameter(self):
        v = self.vertices
        return float(np.max(np.linalg.norm(v[:, None, :] - v[None, :, :], axis=-1)))

    @property
    def area(self):
        return _signed_area(self.vertices)

    def inward_normals(self):
        v = self.vertices
        d = np.roll(v, -1, axis=0) - v
        n = np.column_stack([-d[:, 1], d[:, 0]])
        return n / np.linalg.norm(n, axis=1)[:, None]

    def edges_containing(self, uv, tol=None):
        """Indices of polygon edges on which the local point ``uv`` lies."""
        tol = 1e-10 * self.diameter if tol is None else tol
        uv = np.asarray(uv, dtype=float)
        hits = []
        for k in range(self.n_edges):
            a, b = self.edge(k)
            if _point_segment_distance(uv, a, b) <= tol:
                hits.append(k)
        return hits

    def contains(self, uv, tol=None):
        tol = 1e-10 * self.diameter if tol is None else tol
        uv = np.atleast_2d(uv)
        d = (uv[:, None, :] - self.vertices[None, :, :]) * self.inward_normals()[None, :, :]
        return np.all(d.sum(-1) >= -tol, axis=1)

    def ray_exit(self, p, direction):
        """Distance from interior point ``p`` along ``direction`` to the polygon boundary."""
        lo, hi = clip_line_to_convex(self.vertices, self.inward_normals(), p, direction, 0.0, np.inf)
        return 0.0 if hi is None else hi

    def dirichlet_value(self, uv):
        """Dirichlet datum at a boundary point, or None when not on a Dirichlet edge."""
        for k in self.edges_containing(uv):
            bc = self.boundary_conditions[k]
            if bc.is_dirichlet:
                return float(bc.evaluate(np.atleast_2d(uv))[0])
        return None


@dataclass(frozen=True, eq=False)
class Trace:
    """Segment shared by two fractures.

    ``local_params[fid] = (start, direction)`` maps arc length ``s`` to the
    local point ``start + s * direction`` of fracture ``fid``; ``direction``
    is a unit vector because the frames are orthonormal.
    """

    id: int
    fracture_ids: Tuple[int, int]
    endpoints: np.ndarray
    length: float
    local_params: Dict[int, Tuple[np.ndarray, np.ndarray]]

    def point(self, s):
        s = np.asarray(s, dtype=float)
        p0, p1 = self.endpoints
        return p0 + np.multiply.outer(s / self.length, p1 - p0)

    def local_point(self, fid, s):
        start, d = self.local_params[fid]
        return start + np.multiply.outer(np.asarray(s, dtype=float), d)

    def local_segment(self, fid):
        return self.local_point(fid, 0.0), self.local_point(fid, self.length)

    def other(self, fid):
        i, j = self.fracture_ids
        return j if fid == i else i


@dataclass(frozen=True, eq=False)
class Network:
    fractures: List[Fracture]
    traces: List[Trace]
    traces_of_fracture: Dict[int, List[int]]
    fractures_of_trace: Dict[int, Tuple[int, int]]
    separation: float

    def fracture(self, fid) -> Fracture:
        for f in self.fractures:
            if f.id == fid:
                return f
        raise KeyError(fid)

    def trace(self, tid) -> Trace:
        for t in self.traces:
            if t.id == tid:
                return t
        raise KeyError(tid)


# ---------------------------------------------------------------------------
# helpers


def _signed_area(v):
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _is_convex(v, tol=1e-12):
    d1 = np.roll(v, -1, axis=0) - v
    d2 = np.roll(d1, -1, axis=0)
    cross = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    scale = np.max(np.abs(v)) ** 2 + 1.0
    return bool(np.all(cross >= -tol * scale))


def _point_segment_distance(p, a, b):
    ab = b - a
    t = np.clip(np.dot(p - a, ab) / np.dot(ab, ab), 0.0, 1.0)
    return float(np.linalg.norm(p - (a + t * ab)))


def clip_line_to_convex(verts, inward, p, d, lo, hi, tol=0.0):
    """Parameter interval of ``p + s d`` inside a convex polygon, intersected with [lo, hi].

    Returns ``(lo, hi)`` or ``(None, None)`` when empty.
    """
    for a, n in zip(verts, inward):
        num = float(np.dot(n, p - a)) + tol
        den = float(np.dot(n, d))
        if abs(den) < 1e-15:
            if num < 0:
                return None, None
            continue
        s = -num / den
        if den > 0:
            lo = max(lo, s)
        else:
            hi = min(hi, s)
    if hi < lo:
        return None, None
    return lo, hi


def segment_distance(p0, p1, q0, q1):
    """Minimum distance between the 3D segments [p0, p1] and [q0, q1]."""
    d1, d2, r = p1 - p0, q1 - q0, p0 - q0
    a, e, f = d1 @ d1, d2 @ d2, d2 @ r
    c, b = d1 @ r, d1 @ d2
    denom = a * e - b * b
    s = np.clip((b * f - c * e) / denom, 0.0, 1.0) if denom > 1e-14 * a * e else 0.0
    t = (b * s + f) / e
    if t < 0.0:
        t, s = 0.0, np.clip(-c / a, 0.0, 1.0)
    elif t > 1.0:
        t, s = 1.0, np.clip((b - c) / a, 0.0, 1.0)
    return float(np.linalg.norm(p0 + s * d1 - (q0 + t * d2)))


# ---------------------------------------------------------------------------
# operations


def intersect_fractures(a: Fracture, b: Fracture, trace_id: int = 0) -> Optional[Trace]:
    """Trace shared by two fractures, or None for parallel / disjoint / point contacts."""
    if a.id == b.id:
        raise ValueError("cannot intersect a fracture with itself")
    na, nb = a.normal, b.normal
    d = np.cross(na, nb)
    if np.linalg.norm(d) < 1e-12:
        return None
    d /= np.linalg.norm(d)
    p0 = np.linalg.solve(np.vstack([na, nb, d]), [na @ a.origin, nb @ b.origin, d @ a.origin])

    lo, hi = -np.inf, np.inf
    for f in (a, b):
        start = f.to_local(p0)
        dl = f.axes @ d
        lo, hi = clip_line_to_convex(f.vertices, f.inward_normals(), start, dl, lo, hi)
        if lo is None:
            return None
    if hi - lo < 1e-12 * max(a.diameter, b.diameter):
        return None

    e0, e1 = p0 + lo * d, p0 + hi * d
    first, second = (a, b) if a.id < b.id else (b, a)
    u0, u1 = first.to_local(e0), first.to_local(e1)
    tol = 1e-12 * first.diameter
    if u1[0] < u0[0] - tol or (abs(u1[0] - u0[0]) <= tol and u1[1] < u0[1]):
        e0, e1 = e1, e0
    length = float(np.linalg.norm(e1 - e0))
    params = {}
    for f in (first, second):
        s0 = f.to_local(e0)
        dl = (f.to_local(e1) - s0) / length
        params[f.id] = (_frozen(s0), _frozen(dl))
    return Trace(trace_id, (first.id, second.id), _frozen([e0, e1]), length, params)


def _coplanar_overlap(a: Fracture, b: Fracture):
    if np.linalg.norm(np.cross(a.normal, b.normal)) > 1e-12:
        return False
    if abs(np.dot(a.normal, b.origin - a.origin)) > 1e-12 * max(a.diameter, b.diameter):
        return False
    poly = [a.to_local(b.to_global(v)) for v in b.vertices]
    clipped = clip_polygon(np.array(poly), a.vertices)
    return len(clipped) >= 3 and abs(_signed_area(np.array(clipped))) > 1e-12 * a.area


def clip_polygon(subject, clip):
    """Sutherland-Hodgman clip of ``subject`` by a convex CCW ``clip`` polygon."""
    out = [np.asarray(p, dtype=float) for p in subject]
    m = len(clip)
    for k in range(m):
        a, b = clip[k], clip[(k + 1) % m]
        n = np.array([a[1] - b[1], b[0] - a[0]])
        inp, out = out, []
        if not inp:
            break
        prev = inp[-1]
        dprev = n @ (prev - a)
        for cur in inp:
            dcur = n @ (cur - a)
            if dcur >= 0:
                if dprev < 0:
                    out.append(prev + (cur - prev) * (dprev / (dprev - dcur)))
                out.append(cur)
            elif dprev >= 0:
                out.append(prev + (cur - prev) * (dprev / (dprev - dcur)))
            prev, dprev = cur, dcur
    return out


def build_network(fractures: Sequence[Fracture]) -> Network:
    """Compute all pairwise traces and the achieved trace separation."""
    fractures = sorted(fractures, key=lambda f: f.id)
    if not fractures:
        raise ValueError("a network needs at least one fracture")
    ids = [f.id for f in fractures]
    if len(set(ids)) != len(ids):
        raise ValueError("fracture ids must be unique")
    traces: List[Trace] = []
    for k, a in enumerate(fractures):
        for b in fractures[k + 1:]:
            if _coplanar_overlap(a, b):
                raise ValueError(f"fractures {a.id} and {b.id} are coplanar and overlap")
            t = intersect_fractures(a, b, trace_id=len(traces))
            if t is not None:
                traces.append(t)
    of_fracture = {f.id: [t.id for t in traces if f.id in t.fracture_ids] for f in fractures}
    of_trace = {t.id: t.fracture_ids for t in traces}
    sep = math.inf
    for k, s in enumerate(traces):
        for r in traces[k + 1:]:
            sep = min(sep, segment_distance(*s.endpoints, *r.endpoints))
    return Network(list(fractures), traces, of_fracture, of_trace, sep)


def check_separation(network: Network, gamma0: float) -> bool:
    if gamma0 < 0:
        raise ValueError("gamma0 must be non-negative")
    return network.separation >= gamma0


# ---------------------------------------------------------------------------
# JSON input

_EXPR_NAMESPACE = {name: getattr(np, name) for name in (
    "sin", "cos", "tan", "exp", "log", "sqrt", "abs", "pi", "sinh", "cosh", "tanh", "arctan", "where")}


def parse_expression(text: str):
    """Turn ``"expr:<python expression in u, v>"`` into a vectorised callable."""
    code = compile(text, "<expr>", "eval")

    def f(u, v):
        ns = dict(_EXPR_NAMESPACE, u=u, v=v, x=u, y=v)
        return np.asarray(eval(code, {"__builtins__": {}}, ns), dtype=float) + 0.0 * u

    f.__doc__ = text
    return f


def _parse_value(val):
    if isinstance(val, str):
        if not val.startswith("expr:"):
            raise ValueError(f"bad value {val!r}: numbers or 'expr:<string>' expected")
        return parse_expression(val[len("expr:"):])
    return float(val)


def fracture_from_dict(d) -> Fracture:
    verts = np.asarray(d["vertices"], dtype=float)
    bcs = [NEUMANN0] * len(verts)
    for entry in d.get("bc", []):
        kind = entry.get("kind", "neumann")
        value = _parse_value(entry.get("value", 0.0)) if kind == "dirichlet" else 0.0
        bcs[int(entry["edge"])] = BoundaryCondition(kind, value)
    return Fracture(
        id=int(d["id"]),
        origin=d["origin"],
        axes=[d["axis1"], d["axis2"]],
        vertices=verts,
        permeability=d.get("K", np.eye(2)),
        boundary_conditions=tuple(bcs),
    )


def load_network_json(path):
    """Read a network file; returns ``(network, forcing)`` with forcing keyed by fracture id."""
    with open(path) as fh:
        data = json.load(fh)
    fractures = [fracture_from_dict(d) for d in data["fractures"]]
    forcing = {}
    for d in data["fractures"]:
        if "forcing" in d:
            val = _parse_value(d["forcing"])
            forcing[int(d["id"])] = val if callable(val) else (lambda u, v, c=val: np.full_like(u, c))
    return build_network(fractures), forcing
