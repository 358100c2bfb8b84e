"""Tests for the plants, linearization, discretization, and integrators.

Expected values marked as oracle constants were derived independently:
closed-form matrix exponentials for the scalar affine system, Cartesian
tip Jacobians for the chain inertia, and adaptive ODE integration for
the zero-order-hold map.
"""

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from knotmpc.dynamics import (
    ContinuousLinearModel,
    DiscreteLinearModel,
    NLinkArm,
    NLinkParams,
    Pendulum,
    PendulumParams,
    SingularInertiaError,
    discretize,
    integrate,
    linearize,
    nlink_accel,
    nlink_mass_matrix,
    pendulum_accel,
    rk4_step,
    rollout,
    step,
    total_energy,
)

# closed form for xdot = a x + b u + w, dt = 0.1, a=-2, b=3, w=0.5
SCALAR_AD = 0.8187307530779818
SCALAR_BD = 0.27190387038302727
SCALAR_WD = 0.045317311730504545

# two-link chain (unit masses, 0.25 m links) via Cartesian tip Jacobians
M_TWO_LINK_ZERO = np.array([[0.3125, 0.125], [0.125, 0.0625]])
M_TWO_LINK_BENT = np.array(
    [[0.3026326242503606, 0.1200663121251803],
     [0.1200663121251803, 0.06249999999999999]]
)


# ---------------------------------------------------------------------------
# discretization

def test_exact_discretization_scalar_oracle():
    model = ContinuousLinearModel(np.array([[-2.0]]), np.array([[3.0]]), np.array([0.5]))
    dm = discretize(model, 0.1, "exact")
    assert dm.Ad[0, 0] == pytest.approx(SCALAR_AD, abs=1e-15)
    assert dm.Bd[0, 0] == pytest.approx(SCALAR_BD, abs=1e-15)
    assert dm.wd[0] == pytest.approx(SCALAR_WD, abs=1e-15)
    assert dm.dt == 0.1


def test_euler_discretization_formula():
    A = np.array([[0.0, 1.0], [-4.0, -0.5]])
    B = np.array([[0.0], [2.0]])
    w = np.array([0.1, -0.3])
    dm = discretize(ContinuousLinearModel(A, B, w), 0.05, "euler")
    np.testing.assert_allclose(dm.Ad, np.eye(2) + 0.05 * A)
    np.testing.assert_allclose(dm.Bd, 0.05 * B)
    np.testing.assert_allclose(dm.wd, 0.05 * w)


def test_exact_discretization_matches_ode_integration():
    # independent reference: integrate the affine ODE with tight tolerances
    plant = Pendulum(PendulumParams())
    clin = linearize(plant.ode, np.array([0.4, -0.2]), np.array([0.3]))
    dm = discretize(clin, 0.05, "exact")
    x0 = np.array([0.1, 0.7])
    u0 = np.array([1.3])
    ref = solve_ivp(
        lambda t, x: clin.A @ x + clin.B @ u0 + clin.w,
        (0.0, 0.05), x0, rtol=1e-12, atol=1e-14,
    ).y[:, -1]
    np.testing.assert_allclose(step(dm, x0, u0), ref, atol=1e-12)


def test_discretize_rejects_bad_arguments():
    model = ContinuousLinearModel(np.zeros((1, 1)), np.zeros((1, 1)), np.zeros(1))
    with pytest.raises(ValueError):
        discretize(model, 0.0)
    with pytest.raises(ValueError):
        discretize(model, 0.1, "trapezoid")


def test_model_dimension_properties():
    c = ContinuousLinearModel(np.zeros((3, 3)), np.zeros((3, 2)), np.zeros(3))
    assert (c.n, c.m) == (3, 2)
    d = DiscreteLinearModel(np.eye(4), np.zeros((4, 1)), np.zeros(4), 0.01)
    assert (d.n, d.m) == (4, 1)


# ---------------------------------------------------------------------------
# linearization

def test_linearize_recovers_linear_system_exactly():
    A = np.array([[0.0, 1.0], [-2.0, -0.3]])
    B = np.array([[0.0], [1.5]])
    w = np.array([0.2, -0.1])
    f = lambda x, u: A @ x + B @ u + w
    clin = linearize(f, np.array([0.3, -0.8]), np.array([0.4]))
    np.testing.assert_allclose(clin.A, A, atol=1e-8)
    np.testing.assert_allclose(clin.B, B, atol=1e-8)
    np.testing.assert_allclose(clin.w, w, atol=1e-8)


def test_linearize_pendulum_matches_analytic_jacobian():
    p = PendulumParams(mass=1.3, length=0.7, damping=0.12, gravity=9.81)
    plant = Pendulum(p)
    q0, qd0, tau0 = 0.6, -0.4, 0.25
    clin = linearize(plant.ode, np.array([q0, qd0]), np.array([tau0]))
    ml2 = p.mass * p.length**2
    A_ref = np.array([[0.0, 1.0], [-p.gravity / p.length * np.cos(q0), -p.damping / ml2]])
    B_ref = np.array([[0.0], [1.0 / ml2]])
    np.testing.assert_allclose(clin.A, A_ref, atol=1e-6)
    np.testing.assert_allclose(clin.B, B_ref, atol=1e-6)
    # affine residual makes the model exact at the linearization point
    x0 = np.array([q0, qd0])
    np.testing.assert_allclose(
        clin.A @ x0 + clin.B @ [tau0] + clin.w, plant.ode(x0, [tau0]), atol=1e-12
    )


# ---------------------------------------------------------------------------
# pendulum

def test_pendulum_accel_analytic():
    p = PendulumParams(mass=2.0, length=0.5, damping=0.1, gravity=9.81)
    got = pendulum_accel(p, 0.3, -1.2, 0.7)
    want = (0.7 - 0.1 * -1.2 - 2.0 * 9.81 * 0.5 * np.sin(0.3)) / (2.0 * 0.25)
    assert got == pytest.approx(want, rel=1e-14)


def test_pendulum_params_validation():
    with pytest.raises(ValueError):
        PendulumParams(mass=0.0)
    with pytest.raises(ValueError):
        PendulumParams(length=-1.0)
    with pytest.raises(ValueError):
        PendulumParams(damping=-0.1)


def test_pendulum_energy_conserved_when_undamped():
    p = PendulumParams(damping=0.0)
    plant = Pendulum(p)
    x = np.array([1.0, 0.5])
    e0 = plant.energy(x)
    for _ in range(100):
        x = integrate(plant.ode, x, np.zeros(1), 0.01)
    assert plant.energy(x) == pytest.approx(e0, rel=1e-9)


def test_energy_zero_at_rest_datum():
    assert total_energy(PendulumParams(), np.zeros(2)) == 0.0
    assert total_energy(NLinkParams(links=3), np.zeros(6)) == 0.0
    with pytest.raises(TypeError):
        total_energy(object(), np.zeros(2))


# ---------------------------------------------------------------------------
# n-link chain

def test_two_link_mass_matrix_oracle():
    params = NLinkParams(links=2)
    np.testing.assert_allclose(nlink_mass_matrix(params, np.zeros(2)), M_TWO_LINK_ZERO, atol=1e-15)
    np.testing.assert_allclose(
        nlink_mass_matrix(params, np.array([0.3, -0.4])), M_TWO_LINK_BENT, atol=1e-15
    )


def _mass_matrix_from_jacobians(params, q):
    # independent derivation: sum of m_i J_i' J_i over tip positions
    th = np.cumsum(q)
    N = params.links
    M = np.zeros((N, N))
    for i in range(N):
        J = np.zeros((2, N))
        for j in range(i + 1):
            # d(tip i)/d(q j) sums the segments between joint j and tip i
            seg = params.length[j : i + 1]
            ang = th[j : i + 1]
            J[0, j] = -np.sum(seg * np.sin(ang))
            J[1, j] = np.sum(seg * np.cos(ang))
        M += params.mass[i] * J.T @ J
    return M


def test_mass_matrix_matches_jacobian_construction():
    rng = np.random.default_rng(3)
    for links in (1, 2, 3, 5):
        params = NLinkParams(links=links, mass=rng.uniform(0.5, 2.0, links), length=rng.uniform(0.1, 0.6, links))
        for _ in range(5):
            q = rng.uniform(-np.pi, np.pi, links)
            np.testing.assert_allclose(
                nlink_mass_matrix(params, q), _mass_matrix_from_jacobians(params, q), atol=1e-12
            )


def test_mass_matrix_symmetric_positive_definite():
    rng = np.random.default_rng(11)
    for links in (1, 2, 3, 6):
        params = NLinkParams(links=links)
        for _ in range(20):
            M = nlink_mass_matrix(params, rng.uniform(-np.pi, np.pi, links))
            np.testing.assert_allclose(M, M.T, atol=1e-14)
            assert np.min(np.linalg.eigvalsh(M)) > 0


def test_accel_consistent_with_mass_matrix():
    # at zero velocity and zero gravity, M(q) qdd must equal the torque
    rng = np.random.default_rng(7)
    for links in (1, 2, 4):
        params = NLinkParams(links=links)
        q = rng.uniform(-2, 2, links)
        tau = rng.normal(size=links)
        qdd = nlink_accel(params, q, np.zeros(links), tau)
        np.testing.assert_allclose(nlink_mass_matrix(params, q) @ qdd, tau, atol=1e-12)


def test_single_link_equals_pendulum():
    # chain angles are measured from +x with gravity along -y, pendulum from
    # the hanging position: q_pend = th_chain + pi/2
    pp = PendulumParams(mass=1.4, length=0.6, damping=0.08, gravity=9.81)
    cp = NLinkParams(links=1, mass=1.4, length=0.6, damping=0.08, gravity=9.81)
    for q, qd, tau in [(0.3, -0.5, 0.7), (-1.2, 0.9, -0.4), (2.5, 0.0, 0.0)]:
        a_pend = pendulum_accel(pp, q, qd, tau)
        a_chain = nlink_accel(cp, np.array([q - np.pi / 2]), np.array([qd]), np.array([tau]))[0]
        assert a_chain == pytest.approx(a_pend, rel=1e-12, abs=1e-12)


def test_chain_energy_conserved_when_undamped():
    params = NLinkParams(links=3, damping=0.0, gravity=9.81)
    plant = NLinkArm(params)
    x = np.array([0.4, -0.8, 1.1, 0.5, -0.2, 0.3])
    e0 = total_energy(params, x)
    for _ in range(100):
        x = integrate(plant.ode, x, np.zeros(3), 0.01)
    assert total_energy(params, x) == pytest.approx(e0, rel=1e-5)


def test_nlink_params_broadcasting_and_validation():
    p = NLinkParams(links=3, mass=2.0, length=0.5)
    np.testing.assert_array_equal(p.mass, [2.0, 2.0, 2.0])
    np.testing.assert_array_equal(p.length, [0.5, 0.5, 0.5])
    p2 = NLinkParams(links=2, mass=[1.0, 3.0])
    np.testing.assert_array_equal(p2.mass, [1.0, 3.0])
    with pytest.raises(ValueError):
        NLinkParams(links=0)
    with pytest.raises(ValueError):
        NLinkParams(links=2, mass=[1.0, -1.0])
    with pytest.raises(ValueError):
        NLinkParams(links=1, damping=-0.5)


def test_nlink_arm_dimensions():
    arm = NLinkArm(NLinkParams(links=4))
    assert (arm.n, arm.m) == (8, 4)
    xdot = arm.ode(np.zeros(8), np.ones(4))
    assert xdot.shape == (8,)


def test_singular_inertia_error_type():
    assert issubclass(SingularInertiaError, RuntimeError)


# ---------------------------------------------------------------------------
# stepping and integration

def test_rollout_matches_repeated_step():
    rng = np.random.default_rng(0)
    model = DiscreteLinearModel(rng.normal(size=(3, 3)) * 0.4, rng.normal(size=(3, 2)), rng.normal(size=3), 0.1)
    x0 = rng.normal(size=3)
    U = rng.normal(size=(6, 2))
    X = rollout(model, x0, U)
    assert X.shape == (7, 3)
    x = x0
    for k in range(6):
        x = step(model, x, U[k])
        np.testing.assert_allclose(X[k + 1], x, atol=1e-14)


def test_rk4_fourth_order_convergence():
    # doubling the substep count should shrink the global error ~16x
    f = lambda x, u: -x + u
    x0 = np.array([1.0])
    u = np.array([0.3])
    exact = (x0 - u) * np.exp(-1.0) + u
    e1 = abs(integrate(f, x0, u, 1.0, substeps=8)[0] - exact[0])
    e2 = abs(integrate(f, x0, u, 1.0, substeps=16)[0] - exact[0])
    assert 10.0 < e1 / e2 < 25.0


def test_integrate_is_substep_composition():
    plant = Pendulum(PendulumParams())
    x = np.array([0.5, -0.3])
    u = np.array([0.8])
    via_integrate = integrate(plant.ode, x, u, 0.02, substeps=4)
    xx = x
    for _ in range(4):
        xx = rk4_step(plant.ode, xx, u, 0.005)
    np.testing.assert_allclose(via_integrate, xx, atol=1e-15)
