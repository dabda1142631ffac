import math

import numpy as np
import pytest

from imlfista.harness import Scenario, build_instance
from imlfista.imgcore import ConfigError
from imlfista.linops import Identity, SeparableBlur, TvOperator
from imlfista.mlevel import LevelProblem, build_hierarchy
from imlfista.solver import (IterRecord, RunTrace, SolverConfig, inertia, rate_check,
                             rate_sequence, read_trace_csv, run)

import oracles


def test_inertia_examples():
    fb = SolverConfig.fb()
    for k in range(5):
        assert inertia(k, fb) == (1.0, 0.0)
    cfg = SolverConfig(d=1.0, a=4.0)
    assert inertia(0, cfg) == (1.0, 0.0)
    t5, a4 = inertia(4, cfg)
    assert t5 == 2.0 and a4 == pytest.approx(0.375, abs=1e-15)
    for k in range(100):
        assert 0.0 <= inertia(k, cfg)[1] < 1.0


def test_config_validation():
    with pytest.raises(ConfigError):
        SolverConfig(d=1.0, a=2.0)  # needs a > 2
    with pytest.raises(ConfigError):
        SolverConfig(d=1.5)
    SolverConfig(d=0.5, a=1.01)
    assert SolverConfig.iml_fb().ml_enabled and SolverConfig.iml_fb().d == 0.0
    assert SolverConfig.fista().with_(p=3).p == 3


def _deblur_instance(n=32, seed=0, lam=1e-3):
    sc = Scenario(image="phantom", size=n, lam=lam, seed=seed, levels=3)
    return build_instance(sc)


def test_fista_matches_oracle():
    inst = _deblur_instance(64)
    fine = inst.hierarchy.fine
    A = fine.A
    # both sides share the step and the inner step 1/||D||^2 (estimated constants)
    tau = 0.99 / fine.beta_data
    exact = (np.linalg.norm(A.row_factor, 2) * np.linalg.norm(A.col_factor, 2)) ** 2
    assert tau < 1.0 / exact
    cfg = SolverConfig.fista(max_outer=10, tau=tau)
    tr = run(inst.hierarchy, cfg, inst.x0)
    xs, fs = oracles.inertial_fb(A.col_factor, A.row_factor, fine.z, fine.lam, inst.x0, tau,
                                 fine.D.norm_sq(), 10, d=1.0, a=4.0)
    assert np.allclose(tr.objectives, fs, rtol=1e-10, atol=0)
    assert np.max(np.abs(tr.x - xs[-1])) <= 1e-10


def test_lambda_zero_identity_converges_to_z(rng):
    z = rng.random((8, 8))
    prob = LevelProblem(Identity((8, 8)), TvOperator(8, 8), z, 0.0)
    hier = build_hierarchy(prob, 1)
    tau = 0.9 / prob.beta_data
    tr = run(hier, SolverConfig.fb(tau=tau, max_outer=30, stop_rtol=0.0), np.zeros((8, 8)))
    # plain gradient descent: x_k = (1 - (1 - tau)^k) z exactly
    for r in tr.records:
        assert np.isclose(r.objective, 0.5 * (1 - tau) ** (2 * r.k) * np.sum(z * z), rtol=1e-10)
    assert all(r.inner_iters == 0 for r in tr.records)


def test_lambda_zero_nesterov_recursion(rng):
    z = rng.random((6, 6))
    prob = LevelProblem(Identity((6, 6)), TvOperator(6, 6), z, 0.0)
    tau = 0.5
    tr = run(build_hierarchy(prob, 1), SolverConfig.fista(tau=tau, max_outer=15, stop_rtol=0.0), np.zeros((6, 6)))
    x = y = np.zeros((6, 6))
    t = 1.0
    for k in range(15):
        x_new = y - tau * (y - z)
        t_next = (k + 4) / 4
        y = x_new + (t - 1) / t_next * (x_new - x)
        x, t = x_new, t_next
    assert np.array_equal(tr.x, x)


def test_step_validation():
    inst = _deblur_instance(16)
    with pytest.raises(ConfigError):
        run(inst.hierarchy, SolverConfig.fista(tau=10.0), inst.x0)


def test_trace_invariants():
    inst = _deblur_instance(32)
    cfg = SolverConfig.iml_fista(max_outer=15, p=2)
    tr = run(inst.hierarchy, cfg, inst.x0, reference=inst.x_true)
    assert len(tr.records) <= cfg.max_outer + 1
    secs = [r.seconds for r in tr.records]
    assert secs == sorted(secs)
    assert sum(r.ml_used for r in tr.records) == len(tr.ml_log) <= cfg.p
    assert [r.k for r in tr.records if r.ml_used] == [1, 2]
    assert np.all(np.diff(tr.tols) <= 0)
    assert np.all(np.isfinite(tr.snrs))


def test_ml_condition_hook():
    inst = _deblur_instance(32)
    cfg = SolverConfig.iml_fista(max_outer=8, p=5, ml_condition=lambda k, r: k % 3 == 0)
    tr = run(inst.hierarchy, cfg, inst.x0)
    assert [rec.k for rec in tr.records if rec.ml_used] == [1, 4, 7]


def test_single_level_iml_equals_fista():
    sc = Scenario(image="phantom", size=32, lam=1e-3)
    inst = build_instance(sc, levels=1)
    a = run(inst.hierarchy, SolverConfig.iml_fista(max_outer=10), inst.x0)
    b = run(inst.hierarchy, SolverConfig.fista(max_outer=10), inst.x0)
    assert np.array_equal(a.x, b.x)
    assert np.array_equal(a.objectives, b.objectives)


def test_stall_stop(rng):
    z = rng.random((4, 4))
    prob = LevelProblem(Identity((4, 4)), TvOperator(4, 4), z, 0.0)
    tr = run(build_hierarchy(prob, 1), SolverConfig.fb(tau=0.95, max_outer=500), z.copy())
    assert tr.status == "stalled" and len(tr.records) == 11


def test_non_finite_abort():
    prob = LevelProblem(Identity((4, 4)), TvOperator(4, 4), np.full((4, 4), 1e200), 0.0)
    x0 = np.full((4, 4), -1e200)
    tr = run(build_hierarchy(prob, 1), SolverConfig.fb(tau=0.5, max_outer=50), x0)
    assert tr.status == "non_finite"


def test_trace_csv_roundtrip(tmp_path):
    inst = _deblur_instance(16)
    tr = run(inst.hierarchy, SolverConfig.fista(max_outer=4), inst.x0, reference=inst.x_true)
    path = tmp_path / "t.csv"
    tr.to_csv(path, extra={"normalized_objective": np.ones(len(tr.records))})
    rows = read_trace_csv(path)
    assert list(rows[0])[:7] == ["k", "objective", "seconds", "tol", "ml_used", "inner_iters", "snr"]
    assert [float(r["objective"]) for r in rows] == list(tr.objectives)


def _trace(values):
    return RunTrace(records=[IterRecord(k, v, 0.0, 1e-8) for k, v in enumerate(values)])


def test_rate_check_constant_and_errors():
    assert rate_check(_trace([2.0] * 5), 2.0, d=1.0) == 0.0
    with pytest.raises(ValueError):
        rate_check(_trace([3.0, 2.0, 1.0]), 1.5, d=1.0)
    with pytest.raises(ValueError):
        rate_check(_trace([3.0, 2.0]), 1.0, d=1.0, k_min=10)


def test_rate_check_geometric_fb():
    # FB on a strongly convex quadratic: k^0 (F_k - F*) is maximal at k = 0
    vals = [1.0 + 0.5**k for k in range(40)]
    tr = _trace(vals)
    assert rate_check(tr, 1.0, d=0.0) == pytest.approx(1.0)
    seq = rate_sequence(tr, 1.0, d=1.0)
    assert np.argmax(seq) <= 3
