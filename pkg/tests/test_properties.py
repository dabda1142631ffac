"""Randomized invariants (hypothesis)."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from imlfista.imgcore import objective
from imlfista.linops import InpaintMask, SeparableBlur, TvOperator, nltv_build
from imlfista.mlevel import LevelProblem, build_transfer
from imlfista.proxsmooth import GroupNorm, ProxTolerance, group_prox, moreau_value, sip_update
from imlfista.solver import SolverConfig, inertia

from conftest import adjoint_gap

seeds = st.integers(0, 2**32 - 1)
dims = st.integers(1, 9)
even = st.integers(1, 12).map(lambda n: 2 * n)


@given(seeds, dims, dims, st.integers(1, 3))
def test_tv_adjoint(seed, r, c, ch):
    rng = np.random.default_rng(seed)
    shape = (r, c) if ch == 1 else (r, c, ch)
    D = TvOperator(r, c)
    assert adjoint_gap(D, rng.standard_normal(shape), rng.standard_normal(shape + (2,))) <= 1e-10


@given(seeds, dims, dims)
def test_blur_adjoint(seed, r, c):
    rng = np.random.default_rng(seed)
    B = SeparableBlur(rng.standard_normal((c, c)), rng.standard_normal((r, r)))
    assert adjoint_gap(B, rng.standard_normal((r, c)), rng.standard_normal((r, c))) <= 1e-10


@given(seeds, dims, dims, st.floats(0, 1))
def test_mask_projection(seed, r, c, p):
    rng = np.random.default_rng(seed)
    M = InpaintMask.bernoulli((r, c), p, seed)
    x = rng.standard_normal((r, c))
    assert np.array_equal(M.apply(M.apply(x)), M.apply(x))
    assert adjoint_gap(M, x, rng.standard_normal((r, c))) <= 1e-12


@settings(max_examples=25, deadline=None)
@given(seeds, st.integers(5, 10), st.integers(5, 10), st.integers(1, 6))
def test_nltv_adjoint(seed, r, c, k):
    rng = np.random.default_rng(seed)
    op = nltv_build(rng.random((r, c)), patch_radius=1, window_radius=2, k_max=k)
    assert np.all(op.weights >= 0)
    assert not np.any(op.neighbors == np.arange(r * c)[:, None])
    assert adjoint_gap(op, rng.standard_normal((r, c)), rng.standard_normal((r, c, k))) <= 1e-10


@given(seeds, even, even, st.sampled_from(["haar", "sym10", "db20", "dyadic"]))
def test_transfer_adjoint(seed, r, c, name):
    rng = np.random.default_rng(seed)
    T = build_transfer(name, (r, c))
    x, w = rng.standard_normal((r, c)), rng.standard_normal((r // 2, c // 2))
    assert adjoint_gap(T, x, w) <= 1e-10
    if name != "dyadic":
        assert np.allclose(T.row_factor @ T.row_factor.T, np.eye(c // 2), atol=1e-10)


@given(seeds, st.floats(0, 5), st.integers(1, 4))
def test_group_prox_firmly_nonexpansive(seed, theta, k):
    rng = np.random.default_rng(seed)
    u, v = rng.standard_normal((6, k)), rng.standard_normal((6, k))
    pu, pv = group_prox(u, theta), group_prox(v, theta)
    assert np.vdot(pu - pv, u - v) >= np.vdot(pu - pv, pu - pv) - 1e-12


@given(seeds, st.floats(1e-3, 10), st.floats(1e-3, 10), st.floats(1e-3, 10))
def test_moreau_sandwich(seed, lam, gamma, scale):
    rng = np.random.default_rng(seed)
    u = scale * rng.standard_normal((5, 4, 2))
    g = GroupNorm(lam)
    val = moreau_value(g, gamma, u)
    tol = 1e-12 * (1 + g.value(u))
    assert val <= g.value(u) + tol
    assert val >= g.value(u) - gamma * lam**2 * 20 / 2 - tol


@settings(deadline=None)
@given(seeds, st.floats(0, 1), st.floats(0, 0.5))
def test_objective_convex_and_nonnegative(seed, t, lam):
    rng = np.random.default_rng(seed)
    shape = (6, 5)
    prob = LevelProblem(SeparableBlur.gaussian(shape, 3, 1.0), TvOperator(*shape),
                        rng.random(shape), lam)
    x, y = rng.standard_normal(shape), rng.standard_normal(shape)
    fx, fy = objective(prob, x), objective(prob, y)
    assert objective(prob, t * x + (1 - t) * y) <= t * fx + (1 - t) * fy + 1e-10
    assert fx >= 0.0


@given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=60))
def test_sip_tolerance_nonincreasing(values):
    tol = ProxTolerance(1e-8)
    seq = [tol.tol]
    for prev, cur in zip(values, values[1:]):
        tol = sip_update(tol, cur, prev)
        seq.append(tol.tol)
    assert all(b <= a for a, b in zip(seq, seq[1:]))
    assert min(seq) >= 1e-16
    drops = sum(cur > prev for prev, cur in zip(values, values[1:]))
    assert seq[-1] == pytest.approx(max(1e-8 * 10.0 ** -drops, 1e-16), rel=1e-9)


@given(st.floats(0.05, 1.0), st.floats(0, 5), st.integers(0, 500))
def test_inertia_alpha_range(d, extra, k):
    a = max(1.0, (2 * d) ** (1 / d)) + 1e-6 + extra
    t_next, alpha = inertia(k, SolverConfig(d=d, a=a))
    assert t_next >= 1.0 and 0.0 <= alpha < 1.0
