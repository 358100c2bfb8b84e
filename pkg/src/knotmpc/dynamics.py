"""Robot models, linearization, and discretization.

Two plants are provided: a torque-driven pendulum and a planar chain of
N revolute links with a point mass at the distal end of each link.  Both
expose continuous dynamics ``xdot = f(x, u)`` on the state ``x = [q, qd]``.
The rest of the module turns those nonlinear models into the discrete
affine models consumed by the controllers:

    xdot ~= A x + B u + w          (linearize)
    x[k+1] = Ad x[k] + Bd u[k] + wd  (discretize, then step/rollout)

``rk4_step``/``integrate`` are the ground-truth integrators used when a
closed-loop simulation advances the real plant.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm


class SingularInertiaError(RuntimeError):
    """Raised when an inertia matrix cannot be inverted numerically."""


# ---------------------------------------------------------------------------
# pendulum


@dataclass(frozen=True)
class PendulumParams:
    """Torque-driven pendulum, angle measured from the hanging position.

    m l^2 qdd + b qd + m g l sin(q) = tau
    """

    mass: float = 1.0
    length: float = 1.0
    damping: float = 0.05
    gravity: float = 9.81

    def __post_init__(self):
        if self.mass <= 0 or self.length <= 0:
            raise ValueError("mass and length must be positive")
        if self.damping < 0:
            raise ValueError("damping must be non-negative")


def pendulum_accel(params: PendulumParams, q: float, qd: float, tau: float) -> float:
    """Angular acceleration of the pendulum."""
    p = params
    return (tau - p.damping * qd - p.mass * p.gravity * p.length * np.sin(q)) / (
        p.mass * p.length**2
    )


class Pendulum:
    """Pendulum plant with state [q, qd] and a single torque input."""

    n = 2
    m = 1

    def __init__(self, params: PendulumParams = PendulumParams()):
        self.params = params

    def ode(self, x, u):
        q, qd = x
        return np.array([qd, pendulum_accel(self.params, q, qd, float(u[0]))])

    def energy(self, x):
        return total_energy(self.params, x)


# ---------------------------------------------------------------------------
# planar N-link chain

# The chain is modeled with absolute link angles th_i (measured from the
# +x axis, gravity along -y) where th = cumsum(q) for joint angles q.  With
# point masses at the link tips the kinetic energy is
#     T = 1/2 * sum_{j,k} G[j,k] l_j l_k cos(th_j - th_k) thd_j thd_k,
# with G[j,k] = sum of the masses at or beyond link max(j,k).  Lagrange's
# equations in th then reduce to
#     M_th(th) thdd + c_th(th, thd) + dV/dth = L^{-T} (tau - b qd),
# where L is the lower-triangular matrix of ones mapping q -> th.  Joint
# quantities follow by congruence with L.


@dataclass(frozen=True)
class NLinkParams:
    """Planar serial chain of ``links`` revolute joints, point tip masses."""

    links: int
    mass: float | np.ndarray = 1.0
    length: float | np.ndarray = 0.25
    damping: float = 0.01
    gravity: float = 0.0

    def __post_init__(self):
        if self.links < 1:
            raise ValueError("links must be >= 1")
        object.__setattr__(self, "mass", np.broadcast_to(np.asarray(self.mass, float), (self.links,)).copy())
        object.__setattr__(self, "length", np.broadcast_to(np.asarray(self.length, float), (self.links,)).copy())
        if np.any(self.mass <= 0) or np.any(self.length <= 0):
            raise ValueError("masses and lengths must be positive")
        if self.damping < 0:
            raise ValueError("damping must be non-negative")


def _chain_terms(params: NLinkParams, q: np.ndarray):
    """Absolute angles and the shared G = cumulative-mass weight matrix."""
    th = np.cumsum(q)
    cummass = np.cumsum(params.mass[::-1])[::-1]  # cummass[j] = sum_{i>=j} m_i
    idx = np.arange(params.links)
    G = cummass[np.maximum.outer(idx, idx)]
    return th, cummass, G


def _mass_matrix_abs(params: NLinkParams, th: np.ndarray, G: np.ndarray) -> np.ndarray:
    l = params.length
    dth = np.subtract.outer(th, th)
    return G * np.outer(l, l) * np.cos(dth)


def nlink_mass_matrix(params: NLinkParams, q: np.ndarray) -> np.ndarray:
    """Joint-space inertia matrix M(q), symmetric positive definite."""
    q = np.asarray(q, float)
    th, _, G = _chain_terms(params, q)
    M_th = _mass_matrix_abs(params, th, G)
    # congruence with the cumulative-sum map is a reversed 2-D cumsum
    return np.flip(np.cumsum(np.cumsum(np.flip(M_th), axis=0), axis=1))


def nlink_accel(params: NLinkParams, q: np.ndarray, qd: np.ndarray, tau: np.ndarray) -> np.ndarray:
    """Joint accelerations of the chain under joint torques tau."""
    q = np.asarray(q, float)
    qd = np.asarray(qd, float)
    tau = np.asarray(tau, float)
    th, cummass, G = _chain_terms(params, q)
    thd = np.cumsum(qd)
    l = params.length

    M_th = _mass_matrix_abs(params, th, G)
    sin_dth = np.sin(np.subtract.outer(th, th))
    c_th = (G * np.outer(l, l) * sin_dth) @ (thd**2)
    grav_th = params.gravity * cummass * l * np.cos(th)

    f = tau - params.damping * qd
    # generalized force in absolute coordinates: y with sum_{k>=j} y_k = f_j
    y = np.empty_like(f)
    y[-1] = f[-1]
    y[:-1] = f[:-1] - f[1:]

    try:
        thdd = np.linalg.solve(M_th, y - c_th - grav_th)
    except np.linalg.LinAlgError as e:
        raise SingularInertiaError(f"inertia matrix is singular at q={q}") from e
    qdd = np.empty_like(thdd)
    qdd[0] = thdd[0]
    qdd[1:] = np.diff(thdd)
    return qdd


class NLinkArm:
    """Planar N-link plant with state [q, qd] and one torque per joint."""

    def __init__(self, params: NLinkParams):
        self.params = params
        self.n = 2 * params.links
        self.m = params.links

    def ode(self, x, u):
        N = self.params.links
        q, qd = x[:N], x[N:]
        return np.concatenate([qd, nlink_accel(self.params, q, qd, np.asarray(u, float))])

    def energy(self, x):
        return total_energy(self.params, x)


def total_energy(params, state) -> float:
    """Kinetic plus potential energy; zero at rest at the datum."""
    state = np.asarray(state, float)
    if isinstance(params, PendulumParams):
        q, qd = state
        ke = 0.5 * params.mass * params.length**2 * qd**2
        pe = params.mass * params.gravity * params.length * (1.0 - np.cos(q))
        return float(ke + pe)
    if isinstance(params, NLinkParams):
        N = params.links
        q, qd = state[:N], state[N:]
        th, cummass, G = _chain_terms(params, q)
        thd = np.cumsum(qd)
        M_th = _mass_matrix_abs(params, th, G)
        ke = 0.5 * thd @ M_th @ thd
        pe = params.gravity * np.sum(cummass * params.length * np.sin(th))
        return float(ke + pe)
    raise TypeError(f"unknown parameter type {type(params)!r}")


# ---------------------------------------------------------------------------
# linearization and discretization


@dataclass(frozen=True)
class ContinuousLinearModel:
    """Affine continuous-time model xdot = A x + B u + w."""

    A: np.ndarray
    B: np.ndarray
    w: np.ndarray

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]


@dataclass(frozen=True)
class DiscreteLinearModel:
    """Affine discrete-time model x[k+1] = Ad x[k] + Bd u[k] + wd."""

    Ad: np.ndarray
    Bd: np.ndarray
    wd: np.ndarray
    dt: float

    @property
    def n(self) -> int:
        return self.Ad.shape[0]

    @property
    def m(self) -> int:
        return self.Bd.shape[1]


def linearize(f, x0, u0, eps: float = 1e-6) -> ContinuousLinearModel:
    """Linearize ``xdot = f(x, u)`` about (x0, u0) by central differences.

    The affine residual ``w = f(x0, u0) - A x0 - B u0`` makes the returned
    model exact at the linearization point, so a linear plant is recovered
    to rounding error.
    """
    x0 = np.asarray(x0, float)
    u0 = np.asarray(u0, float)
    n, m = x0.size, u0.size
    A = np.empty((n, n))
    B = np.empty((n, m))
    for i in range(n):
        dx = np.zeros(n)
        dx[i] = eps
        A[:, i] = (f(x0 + dx, u0) - f(x0 - dx, u0)) / (2 * eps)
    for j in range(m):
        du = np.zeros(m)
        du[j] = eps
        B[:, j] = (f(x0, u0 + du) - f(x0, u0 - du)) / (2 * eps)
    w = np.asarray(f(x0, u0), float) - A @ x0 - B @ u0
    return ContinuousLinearModel(A, B, w)


def discretize(model: ContinuousLinearModel, dt: float, method: str = "exact") -> DiscreteLinearModel:
    """Discretize an affine continuous model with time step dt.

    ``euler`` gives the first-order hold-free approximation Ad = I + A dt;
    ``exact`` integrates the affine system under a zero-order hold via the
    matrix exponential of the augmented system.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    n, m = model.n, model.m
    if method == "euler":
        Ad = np.eye(n) + model.A * dt
        Bd = model.B * dt
        wd = model.w * dt
    elif method == "exact":
        aug = np.zeros((n + m + 1, n + m + 1))
        aug[:n, :n] = model.A
        aug[:n, n : n + m] = model.B
        aug[:n, -1] = model.w
        E = expm(aug * dt)
        Ad = E[:n, :n]
        Bd = E[:n, n : n + m]
        wd = E[:n, -1]
    else:
        raise ValueError(f"unknown discretization method {method!r}")
    return DiscreteLinearModel(Ad, Bd, wd, dt)


def step(model: DiscreteLinearModel, x: np.ndarray, u: np.ndarray) -> np.ndarray:
    """One discrete update x[k+1] = Ad x + Bd u + wd."""
    return model.Ad @ x + model.Bd @ u + model.wd


def rollout(model: DiscreteLinearModel, x0: np.ndarray, U: np.ndarray) -> np.ndarray:
    """Roll the discrete model forward under the input sequence U (T, m).

    Returns the (T+1, n) state trace starting at x0.
    """
    U = np.atleast_2d(np.asarray(U, float))
    T = U.shape[0]
    X = np.empty((T + 1, model.n))
    X[0] = x0
    for k in range(T):
        X[k + 1] = step(model, X[k], U[k])
    return X


# ---------------------------------------------------------------------------
# ground-truth integration


def rk4_step(f, x, u, dt: float) -> np.ndarray:
    """Classic fourth-order Runge-Kutta step with the input held constant."""
    k1 = f(x, u)
    k2 = f(x + 0.5 * dt * k1, u)
    k3 = f(x + 0.5 * dt * k2, u)
    k4 = f(x + dt * k3, u)
    return x + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def integrate(f, x, u, dt: float, substeps: int = 10) -> np.ndarray:
    """Advance the plant one control period using RK4 substeps."""
    h = dt / substeps
    for _ in range(substeps):
        x = rk4_step(f, x, u, h)
    return x
