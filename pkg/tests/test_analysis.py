import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from matplotlib.tri import LinearTriInterpolator, Triangulation

from conftest import unit_square
from dfnflow.analysis import (ExactSolution, broken_seminorm, combine, eoc, eoc_lsq, error_L2_H1, jump_means,
                              norm_1_delta, norms_half_delta)
from dfnflow.fem import assemble_coupling_C, p1_gradients
from dfnflow.geometry import build_network
from dfnflow.meshing import SegMesh
from dfnflow.quadrature import triangle_rule
from dfnflow.saddle import Solution, assemble_system, discretize, solve


def state(u, lam=None, psi=None):
    return Solution(u, lam or {}, psi or {}, np.zeros(0))


def interp_state(disc, funcs):
    return state({fid: funcs[fid](m.nodes[:, 0], m.nodes[:, 1]) for fid, m in disc.meshes.items()})


def test_interpolated_linear_has_no_error(disc1_coarse):
    funcs = {1: lambda x, y: 1 + 2 * y + 0.5 * x, 2: lambda z, y: 1 + 2 * y - 0.3 * z}
    grads = {1: lambda x, y: (0.5 + 0 * x, 2 + 0 * y), 2: lambda z, y: (-0.3 + 0 * z, 2 + 0 * y)}
    ex = ExactSolution(funcs, grads)
    per = error_L2_H1(interp_state(disc1_coarse, funcs), ex, disc1_coarse)
    assert max(max(v) for v in per.values()) <= 1e-12


def test_zero_against_one():
    disc = discretize(build_network([unit_square()]), 0.25, jitter=0.1)
    ex = ExactSolution({1: lambda x, y: 1 + 0 * x}, {1: lambda x, y: (0 * x, 0 * y)})
    l2, h1 = error_L2_H1(state({1: np.zeros(disc.meshes[1].n_nodes)}), ex, disc)[1]
    assert l2 == pytest.approx(1.0, rel=1e-13)
    assert h1 == 0.0


def _subdivided_errors(mesh, u, value, grad, levels=3):
    """Independent recomputation: uniform red refinement of every triangle, order-5 rule."""
    bary, w = triangle_rule(5)
    g = np.einsum("ti,tid->td", u[mesh.triangles], p1_gradients(mesh))
    # sub-triangles in reference barycentric coordinates
    n = 2 ** levels
    subs = []
    for i in range(n):
        for j in range(n - i):
            a, b, c = (i, j), (i + 1, j), (i, j + 1)
            subs.append([a, b, c])
            if i + j < n - 1:
                subs.append([(i + 1, j), (i + 1, j + 1), (i, j + 1)])
    ref = np.array([[[1 - (p + q) / n, p / n, q / n] for p, q in s] for s in subs])  # (S, 3, 3)
    qb = np.einsum("qk,skl->sql", bary, ref).reshape(-1, 3)
    qw = np.tile(w, len(subs)) / len(subs)
    P = mesh.nodes[mesh.triangles]
    pts = np.einsum("ql,tld->tqd", qb, P)
    uh = np.einsum("ql,tl->tq", qb, u[mesh.triangles])
    wt = mesh.areas[:, None] * qw[None]
    gx, gy = grad(pts[..., 0], pts[..., 1])
    l2 = np.sum(wt * (uh - value(pts[..., 0], pts[..., 1])) ** 2)
    h1 = np.sum(wt * ((g[:, 0, None] - gx) ** 2 + (g[:, 1, None] - gy) ** 2))
    return math.sqrt(l2), math.sqrt(h1)


def test_test1_errors_stable_under_refined_quadrature(test1, disc1_fine):
    sol = solve(assemble_system(disc1_fine, "natural", 0.1, 0.0))
    per = error_L2_H1(sol, test1.exact, disc1_fine)
    for fid, (l2, h1) in per.items():
        rl2, rh1 = _subdivided_errors(disc1_fine.meshes[fid], sol.u[fid], test1.exact.value[fid],
                                      test1.exact.grad[fid])
        assert h1 == pytest.approx(rh1, rel=0.2)
        assert l2 == pytest.approx(rl2, rel=0.2)
    # splitting the cut cells barely matters for these values, but it must not hurt
    unsplit = combine(error_L2_H1(sol, test1.exact, disc1_fine, split=False))
    assert combine(per)[1] == pytest.approx(unsplit[1], rel=0.05)


def test_unit_jump_term(disc1_coarse):
    m1, m2 = disc1_coarse.meshes[1], disc1_coarse.meshes[2]
    s = state({1: np.ones(m1.n_nodes), 2: np.zeros(m2.n_nodes)})
    assert jump_means(s, disc1_coarse)[0] == pytest.approx(1.0, rel=1e-13)
    assert broken_seminorm(s, disc1_coarse) < 1e-13
    assert norm_1_delta(s, disc1_coarse) == pytest.approx(1.0, rel=1e-13)


def test_continuous_state_has_no_jump(disc1_coarse):
    s = interp_state(disc1_coarse, {1: lambda x, y: 1 + 2 * y + x, 2: lambda z, y: 1 + 2 * y - 4 * z})
    assert abs(jump_means(s, disc1_coarse)[0]) < 1e-13
    assert norm_1_delta(s, disc1_coarse) == pytest.approx(broken_seminorm(s, disc1_coarse), rel=1e-12)


def test_jump_means_sampling_oracle(disc1_coarse):
    rng = np.random.default_rng(11)
    u = {fid: rng.normal(size=m.n_nodes) for fid, m in disc1_coarse.meshes.items()}
    t = disc1_coarse.network.traces[0]
    n = 100_000  # midpoint sampling; converges at second order towards the exact mean
    s = (np.arange(n) + 0.5) / n * t.length
    vals = {}
    for fid, m in disc1_coarse.meshes.items():
        f = LinearTriInterpolator(Triangulation(m.nodes[:, 0], m.nodes[:, 1], m.triangles), u[fid])
        p = t.local_point(fid, s)
        vals[fid] = np.asarray(f(p[:, 0], p[:, 1]))
    ref = np.mean(vals[1] - vals[2])
    assert jump_means(state(u), disc1_coarse)[0] == pytest.approx(ref, abs=1e-8)


def test_jump_means_with_exact(disc1_coarse):
    funcs = {1: lambda x, y: 2 + y + 0 * x, 2: lambda z, y: y + 0 * z}
    ex = ExactSolution(funcs, {})
    s = interp_state(disc1_coarse, funcs)
    assert jump_means(s, disc1_coarse)[0] == pytest.approx(2.0, rel=1e-13)
    assert abs(jump_means(s, disc1_coarse, ex)[0]) < 1e-12


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 31), st.floats(-5, 5).filter(lambda c: c == 0 or abs(c) > 1e-6))
def test_homogeneity_and_ordering(seed, c):
    from dfnflow.experiments import make_test1
    disc = _disc_cache(make_test1)
    rng = np.random.default_rng(seed)
    u = {fid: rng.normal(size=m.n_nodes) for fid, m in disc.meshes.items()}
    a = state(u)
    b = state({k: c * v for k, v in u.items()})
    n1 = norm_1_delta(a, disc)
    assert n1 >= broken_seminorm(a, disc)
    assert norm_1_delta(b, disc) == pytest.approx(abs(c) * n1, rel=1e-12, abs=1e-300)
    lam = {(1, 0): rng.normal(size=disc.segmeshes[0].n_nodes)}
    nl = norms_half_delta(lam, disc.segmeshes, "lambda")
    assert norms_half_delta({k: c * v for k, v in lam.items()}, disc.segmeshes, "lambda") == \
        pytest.approx(abs(c) * nl, rel=1e-12, abs=1e-300)


_DISC = {}


def _disc_cache(make):
    if "d" not in _DISC:
        p = make()
        _DISC["d"] = discretize(p.network, 0.22, p.forcing, 1.0, 0.15, True, bands=False)
    return _DISC["d"]


def test_half_delta_norms():
    sm = SegMesh(0, np.linspace(0, 1, 5), 0.25)
    assert norms_half_delta({0: np.ones(5)}, {0: sm}, "lambda") == pytest.approx(0.5)
    assert norms_half_delta({0: np.ones(5)}, {0: sm}, "psi") == pytest.approx(2.0)
    with pytest.raises(ValueError):
        norms_half_delta({0: np.ones(5)}, {0: sm}, "u")


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 30), st.integers(0, 2 ** 31))
def test_cauchy_schwarz(n, seed):
    rng = np.random.default_rng(seed)
    coords = np.sort(np.concatenate([[0.0, 1.0], rng.uniform(0, 1, n - 1)]))
    coords = np.unique(coords)
    sm = SegMesh(0, coords, float(np.diff(coords).mean()))
    lam, psi = rng.normal(size=sm.n_nodes), rng.normal(size=sm.n_nodes)
    pairing = abs(psi @ (assemble_coupling_C(sm) @ lam))
    bound = norms_half_delta({0: lam}, {0: sm}, "lambda") * norms_half_delta({0: psi}, {0: sm}, "psi")
    assert pairing <= bound * (1 + 1e-12)


def test_eoc():
    assert eoc([1, 0.5], [1, 0.5]) == [pytest.approx(1.0)]
    assert eoc([1, 1 / math.sqrt(2)], [1, 0.5]) == [pytest.approx(0.5)]
    d = [0.4, 0.2, 0.1, 0.05]
    assert eoc_lsq([x ** 1.5 for x in d], d) == pytest.approx(1.5)
    with pytest.raises(ValueError):
        eoc([1, 0], [1, 0.5])
    with pytest.raises(ValueError):
        eoc([1], [1])
    with pytest.raises(ValueError):
        eoc_lsq([1, -1], [1, 0.5])
