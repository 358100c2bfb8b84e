"""Tests for the four MPC problem builders and the prediction matrices."""

import numpy as np
import pytest

from knotmpc.condense import (
    FORMULATIONS,
    ConfigurationError,
    MpcSpec,
    build,
    build_large,
    build_large_param,
    build_small,
    build_small_param,
    extract_first_input,
    objective_constant,
    prediction_matrices,
)
from knotmpc.dynamics import DiscreteLinearModel, rollout
from knotmpc.param import KnotSchedule, interpolation_matrix
from knotmpc.qp import AdmmSolver, QpSolution


def _model(n=2, m=1, seed=0, spectral=0.9):
    rng = np.random.default_rng(seed)
    Ad = rng.normal(size=(n, n))
    Ad *= spectral / max(np.abs(np.linalg.eigvals(Ad)))
    return DiscreteLinearModel(Ad, rng.normal(size=(n, m)), rng.normal(size=n) * 0.1, 0.05)


def _spec(model, T, seed=0, state_bounds=False):
    rng = np.random.default_rng(seed + 100)
    n, m = model.n, model.m
    kw = {}
    if state_bounds:
        kw = {"x_min": -50.0 * np.ones(n), "x_max": 50.0 * np.ones(n)}
    return MpcSpec(
        model, T,
        Q=np.diag(rng.uniform(0.5, 2.0, n)),
        R=np.diag(rng.uniform(0.1, 1.0, m)),
        x_goal=rng.normal(size=n) * 0.3,
        u_goal=np.zeros(m),
        u_min=-2.0 * np.ones(m),
        u_max=2.0 * np.ones(m),
        **kw,
    )


# ---------------------------------------------------------------------------
# prediction matrices

def test_prediction_matrices_scalar_powers():
    # x_{k+1} = a x_k + b u_k + w unrolls to explicit powers of a
    a, b, w = 0.8, 0.3, 0.1
    model = DiscreteLinearModel(np.array([[a]]), np.array([[b]]), np.array([w]), 0.1)
    pm = prediction_matrices(model, 3, np.array([2.0]))
    S_ref = np.array([[b, 0, 0], [a * b, b, 0], [a * a * b, a * b, b]])
    v_ref = np.array([a * 2 + w, a * (a * 2 + w) + w, a * (a * (a * 2 + w) + w) + w])
    np.testing.assert_allclose(pm.S, S_ref, atol=1e-15)
    np.testing.assert_allclose(pm.v, v_ref, atol=1e-15)


def test_prediction_matches_rollout():
    rng = np.random.default_rng(4)
    model = _model(3, 2, seed=4)
    U = rng.normal(size=(7, 2))
    x0 = rng.normal(size=3)
    pm = prediction_matrices(model, 7, x0)
    X = rollout(model, x0, U)
    pred = pm.S @ U.ravel() + pm.v
    np.testing.assert_allclose(pred, X[1:].ravel(), atol=1e-12)


def test_knot_prediction_is_condensed_full_prediction():
    model = _model(2, 2, seed=6)
    sched = KnotSchedule(T=11, p=4)
    x0 = np.array([0.4, -0.2])
    W = interpolation_matrix(sched)
    Wbig = np.kron(W, np.eye(2))
    pm = prediction_matrices(model, 11, x0)
    from knotmpc.condense import _param_prediction
    Sp, vp, _ = _param_prediction(model, sched, x0)
    np.testing.assert_allclose(Sp, pm.S @ Wbig, atol=1e-10)
    np.testing.assert_allclose(vp, pm.v, atol=1e-12)


def test_knot_prediction_second_block_row():
    # for T=5, p=3 the second predicted state mixes the first two knots:
    # x_2 = Ad Bd U_0 + Bd (U_0 + U_1)/2 + ...
    model = _model(2, 1, seed=2)
    from knotmpc.condense import _param_prediction
    Sp, _, _ = _param_prediction(model, KnotSchedule(T=5, p=3), np.zeros(2))
    blk = Sp[2:4]
    want = np.hstack([
        (model.Ad + 0.5 * np.eye(2)) @ model.Bd,
        0.5 * model.Bd,
        np.zeros((2, 1)),
    ])
    np.testing.assert_allclose(blk, want, atol=1e-14)


# ---------------------------------------------------------------------------
# problem sizes and structure

def test_problem_dimensions():
    model = _model(2, 1)
    spec = _spec(model, 5)
    x0 = np.zeros(2)
    large = build_large(spec, x0)
    assert large.P.shape[0] == 18  # n(T+1) + Tm + 1
    assert large.A.shape == (18, 18)
    small = build_small(spec, x0)
    assert small.P.shape[0] == 5  # Tm
    np.testing.assert_array_equal(small.A, np.eye(5))
    sched = KnotSchedule(T=5, p=3)
    lp = build_large_param(spec, sched, x0)
    assert lp.P.shape[0] == 16  # n(T+1) + pm + 1
    sp_ = build_small_param(spec, sched, x0)
    assert sp_.P.shape[0] == 3  # pm
    assert sp_.A.shape == (3, 3)


def test_large_row_structure():
    model = _model(2, 1)
    spec = _spec(model, 5)
    prob = build_large(spec, np.ones(2))
    assert prob.A.shape[0] == 2 + 10 + 1 + 5  # pin, dynamics, unit, input bounds
    # pin, dynamics, and offset rows are equalities; input rows are boxes
    lb, ub = np.asarray(prob.lb), np.asarray(prob.ub)
    np.testing.assert_array_equal(lb[:13], ub[:13])
    A = prob.A.toarray() if hasattr(prob.A, "toarray") else np.asarray(prob.A)
    assert np.count_nonzero(A[12]) == 1 and A[12, 17] != 0  # offset var pinned to one
    np.testing.assert_array_equal(np.count_nonzero(A[13:], axis=1), np.ones(5, int))
    bounded = _spec(model, 5, state_bounds=True)
    prob2 = build_large(bounded, np.ones(2))
    assert prob2.A.shape[0] == 18 + 12  # state box rows on every stage


def test_small_builders_reject_state_bounds():
    model = _model(2, 1)
    spec = _spec(model, 5, state_bounds=True)
    with pytest.raises(ConfigurationError):
        build_small(spec, np.zeros(2))
    with pytest.raises(ConfigurationError):
        build_small_param(spec, KnotSchedule(T=5, p=3), np.zeros(2))


def test_dense_knots_reproduce_unparameterized():
    model = _model(3, 2, seed=9)
    spec = _spec(model, 8, seed=9)
    x0 = np.random.default_rng(1).normal(size=3)
    sched = KnotSchedule(T=8, p=8)
    a = build_small(spec, x0)
    b = build_small_param(spec, sched, x0)
    np.testing.assert_allclose(b.P, a.P, atol=1e-10)
    np.testing.assert_allclose(b.q, a.q, atol=1e-10)


def test_build_dispatcher():
    model = _model(2, 1)
    spec = _spec(model, 5)
    sched = KnotSchedule(T=5, p=3)
    for kind in FORMULATIONS:
        prob = build(kind, spec, np.zeros(2), sched if "param" in kind else None)
        assert prob.P.shape[0] == prob.q.shape[0]
    with pytest.raises(ValueError):
        build("medium", spec, np.zeros(2))
    with pytest.raises(ValueError):
        build("small_param", spec, np.zeros(2))  # schedule required


# ---------------------------------------------------------------------------
# solutions agree across formulations

def test_first_input_agrees_across_formulations():
    solver = AdmmSolver()
    for seed in range(3):
        model = _model(3, 2, seed=seed)
        spec = _spec(model, 9, seed=seed)
        x0 = np.random.default_rng(seed).normal(size=3)
        sched = KnotSchedule(T=9, p=9)
        u = {}
        for kind in FORMULATIONS:
            prob = build(kind, spec, x0, sched if "param" in kind else None)
            sol = solver.solve(prob)
            assert sol.status == "solved"
            u[kind] = extract_first_input(sol, kind, spec)
        for kind in FORMULATIONS[1:]:
            np.testing.assert_allclose(u[kind], u["large"], atol=1e-6)


def test_extract_first_input_layout():
    model = _model(2, 1)
    spec = _spec(model, 5)
    z_small = np.arange(5.0)
    np.testing.assert_array_equal(extract_first_input(z_small, "small", spec), [0.0])
    z_large = np.arange(18.0)
    # inputs start right after the n(T+1) stacked states
    np.testing.assert_array_equal(extract_first_input(z_large, "large", spec), [12.0])


def test_extract_first_input_rejects_failed_solve():
    model = _model(2, 1)
    spec = _spec(model, 5)
    bad = QpSolution(np.zeros(5), "max_iters", 10, 0.0, 0.0, np.zeros(5))
    with pytest.raises(ValueError):
        extract_first_input(bad, "small", spec)


def test_objective_constant_recovers_tracking_cost():
    # for every formulation: qp objective + constant == the tracking cost of
    # the rolled-out trajectory, computed here from scratch
    solver = AdmmSolver()
    model = _model(2, 1, seed=3)
    spec = _spec(model, 6, seed=3)
    x0 = np.array([0.8, -0.5])
    sched = KnotSchedule(T=6, p=3)
    W = interpolation_matrix(sched)

    def tracking_cost(U):
        X = rollout(spec.model, x0, U)
        c = 0.0
        for k in range(7):
            e = X[k] - spec.x_goal
            c += e @ spec.Q @ e
        for k in range(6):
            d = U[k] - spec.u_goal
            c += d @ spec.R @ d
        return c

    for kind in FORMULATIONS:
        prob = build(kind, spec, x0, sched if "param" in kind else None)
        sol = solver.solve(prob)
        assert sol.status == "solved"
        if kind == "large":
            U = sol.z[14:20].reshape(6, 1)
        elif kind == "large_param":
            U = (W @ sol.z[14:17]).reshape(6, 1)
        elif kind == "small":
            U = sol.z.reshape(6, 1)
        else:
            U = (W @ sol.z).reshape(6, 1)
        total = sol.objective + objective_constant(spec, x0, kind)
        assert total == pytest.approx(tracking_cost(U), rel=1e-8, abs=1e-8)


# ---------------------------------------------------------------------------
# spec validation

def test_spec_broadcasts_scalars():
    model = _model(3, 2)
    spec = MpcSpec(model, 4, np.eye(3), np.eye(2), 0.0, 0.0, -1.0, 1.0)
    assert spec.x_goal.shape == (3,)
    assert spec.u_min.shape == (2,)
    np.testing.assert_array_equal(spec.u_max, [1.0, 1.0])


def test_spec_validation_errors():
    model = _model(2, 1)
    ok = dict(Q=np.eye(2), R=np.eye(1), x_goal=np.zeros(2), u_goal=np.zeros(1),
              u_min=-np.ones(1), u_max=np.ones(1))
    with pytest.raises(ValueError):
        MpcSpec(model, 0, **ok)
    with pytest.raises(ValueError):
        MpcSpec(model, 5, **{**ok, "Q": np.diag([1.0, -0.5])})  # indefinite
    with pytest.raises(ValueError):
        MpcSpec(model, 5, **{**ok, "R": np.zeros((1, 1))})  # only semidefinite
    with pytest.raises(ValueError):
        MpcSpec(model, 5, **{**ok, "Q": np.array([[1.0, 0.3], [0.0, 1.0]])})
    with pytest.raises(ValueError):
        MpcSpec(model, 5, **{**ok, "u_min": np.ones(1), "u_max": -np.ones(1)})
    with pytest.raises(ValueError):
        MpcSpec(model, 5, **{**ok, "x_goal": np.zeros(3)})


def test_has_state_bounds():
    model = _model(2, 1)
    assert not _spec(model, 5).has_state_bounds
    assert _spec(model, 5, state_bounds=True).has_state_bounds
    # all-infinite bounds count as unbounded
    spec = MpcSpec(model, 5, np.eye(2), np.eye(1), 0.0, 0.0, -1.0, 1.0,
                   x_min=np.full(2, -np.inf), x_max=np.full(2, np.inf))
    assert not spec.has_state_bounds
