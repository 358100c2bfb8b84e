"""Closed-loop MPC simulation and step-response metrics.

Each control period the plant model is relinearized at the current state
(with zero nominal input), discretized exactly at the control rate, and
handed to the selected controller.  The chosen first input is then held
for one period while the true nonlinear plant is integrated with RK4
substeps.  A deliberately wrong controller model (for robustness studies)
is passed separately from the true plant, so the mismatch never leaks
into the simulated physics.

Metrics follow the usual servo conventions: the realized tracking cost
(final stage padded with a zero input), rise time to the 90% level,
percent overshoot past the goal, and time-weighted absolute error.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace

import numpy as np

from .condense import MpcSpec, build, extract_first_input
from .dynamics import NLinkParams, PendulumParams, discretize, integrate, linearize
from .empc import EmpcSettings, solve_empc
from .param import KnotSchedule
from .qp import AdmmSolver, QpSettings


@dataclass(frozen=True)
class Controller:
    """Which solver runs inside the loop.

    kind is one of large | small | large_param | small_param | empc; the
    parameterized kinds and empc need a knot count p, and empc carries its
    population settings.
    """

    kind: str
    p: int | None = None
    empc: EmpcSettings | None = None

    def __post_init__(self):
        if self.kind not in ("large", "small", "large_param", "small_param", "empc"):
            raise ValueError(f"unknown controller kind {self.kind!r}")
        if self.kind in ("large_param", "small_param", "empc") and self.p is None:
            raise ValueError(f"{self.kind} needs a knot count p")
        if self.kind == "empc" and self.empc is None:
            object.__setattr__(self, "empc", EmpcSettings())


@dataclass
class SimResult:
    states: np.ndarray  # (H+1, n)
    inputs: np.ndarray  # (H, m)
    opt_time: np.ndarray  # per-step optimization time, s
    mpc_time: np.ndarray  # per-step optimization plus matrix construction, s
    failures: int  # solver failures (input held on those steps)


def run_closed_loop(
    plant,
    controller: Controller,
    template: MpcSpec,
    x0,
    x_goal,
    duration: float,
    rate: float,
    *,
    controller_plant=None,
    qp_settings: QpSettings | None = None,
    plant_substeps: int = 10,
) -> SimResult:
    """Simulate ``duration`` seconds of MPC at ``rate`` Hz.

    ``controller_plant`` (defaulting to the true plant) is what the
    controller believes it is driving; only its linearization is ever
    used.  Time spent linearizing/discretizing is excluded from both
    timing columns, matching how the solvers are compared elsewhere.
    """
    H = int(round(duration * rate))
    dt = 1.0 / rate
    model_src = controller_plant if controller_plant is not None else plant
    x_goal = np.asarray(x_goal, float)

    n, m = plant.n, plant.m
    states = np.empty((H + 1, n))
    inputs = np.empty((H, m))
    opt_time = np.zeros(H)
    mpc_time = np.zeros(H)
    states[0] = np.asarray(x0, float)

    sched = KnotSchedule(template.T, controller.p) if controller.p is not None else None
    solver = AdmmSolver(qp_settings)
    warm = None
    population = None
    last_u = np.zeros(m)
    failures = 0
    u0_nominal = np.zeros(m)

    x = states[0].copy()
    for i in range(H):
        clin = linearize(model_src.ode, x, u0_nominal)
        dmodel = discretize(clin, dt, "exact")
        spec = replace(template, model=dmodel, x_goal=x_goal)

        if controller.kind == "empc":
            t0 = time.perf_counter()
            res = solve_empc(spec, sched, controller.empc, x, prev=population)
            elapsed = time.perf_counter() - t0
            population = res.population
            u = np.clip(res.u, spec.u_min, spec.u_max)
            opt_time[i] = elapsed
            mpc_time[i] = elapsed
        else:
            t0 = time.perf_counter()
            prob = build(controller.kind, spec, x, sched)
            t1 = time.perf_counter()
            sol = solver.solve(prob, warm=warm)
            t2 = time.perf_counter()
            opt_time[i] = sol.solve_time
            mpc_time[i] = (t1 - t0) + (t2 - t1)
            if sol.status == "solved":
                u = extract_first_input(sol, controller.kind, spec)
                warm = (sol.z, sol.dual)
            else:
                failures += 1
                u = last_u

        inputs[i] = u
        last_u = u
        x = integrate(plant.ode, x, u, dt, substeps=plant_substeps)
        states[i + 1] = x

    return SimResult(states, inputs, opt_time, mpc_time, failures)


# ---------------------------------------------------------------------------
# robustness helper


def apply_error_multiplier(params, multiplier: float):
    """Scale a plant's inertial parameters for a deliberately wrong model.

    Pendulum: mass and length are both scaled, so the modeled inertia is
    multiplier**3 times the true one.  N-link chain: the tip masses are
    scaled, which scales the whole inertia matrix by the multiplier.
    The returned params are for the controller's model only.
    """
    if multiplier <= 0:
        raise ValueError("multiplier must be positive")
    if isinstance(params, PendulumParams):
        return replace(params, mass=params.mass * multiplier, length=params.length * multiplier)
    if isinstance(params, NLinkParams):
        return replace(params, mass=params.mass * multiplier)
    raise TypeError(f"unknown parameter type {type(params)!r}")


# ---------------------------------------------------------------------------
# metrics


def actual_cost(states, inputs, Q, R, x_goal, u_goal=None) -> float:
    """Realized tracking cost over the run, final stage padded with u = 0."""
    states = np.asarray(states, float)
    inputs = np.asarray(inputs, float)
    if u_goal is None:
        u_goal = np.zeros(inputs.shape[1])
    U = np.vstack([inputs, np.zeros((1, inputs.shape[1]))])
    ex = x_goal - states
    eu = u_goal - U
    return float(np.einsum("ti,ij,tj->", ex, Q, ex) + np.einsum("ti,ij,tj->", eu, R, eu))


def cost_ratio(cost: float, baseline: float) -> float:
    """Ratio of a controller's realized cost to a baseline's."""
    if baseline == 0.0:
        return np.nan
    return cost / baseline


def normalized_cost(cost: float, cost_at_unity: float) -> float:
    """Ratio of the cost under a model error to the same controller's
    cost with a perfect model."""
    return cost_ratio(cost, cost_at_unity)


def rise_time(positions, start, goal, rate: float) -> np.ndarray:
    """Per-joint time of the first crossing of 90% of the commanded step.

    Returns NaN for joints that never reach the 90% level.
    """
    positions = np.atleast_2d(np.asarray(positions, float))
    start = np.atleast_1d(np.asarray(start, float))
    goal = np.atleast_1d(np.asarray(goal, float))
    out = np.full(start.size, np.nan)
    for j in range(start.size):
        step_sign = np.sign(goal[j] - start[j])
        level = start[j] + 0.9 * (goal[j] - start[j])
        if step_sign == 0:
            out[j] = 0.0
            continue
        crossed = (positions[:, j] - level) * step_sign >= 0
        hits = np.flatnonzero(crossed)
        if hits.size:
            out[j] = hits[0] / rate
    return out


def percent_overshoot(positions, start, goal) -> np.ndarray:
    """Per-joint overshoot past the goal, as a percent of the step size.

    NaN where the commanded step is zero.
    """
    positions = np.atleast_2d(np.asarray(positions, float))
    start = np.atleast_1d(np.asarray(start, float))
    goal = np.atleast_1d(np.asarray(goal, float))
    out = np.full(start.size, np.nan)
    for j in range(start.size):
        d = goal[j] - start[j]
        if d == 0:
            continue
        past = (positions[:, j] - goal[j]) * np.sign(d)
        out[j] = max(0.0, float(np.max(past))) / abs(d) * 100.0
    return out


def itae(positions, command, rate: float, t_start: float = 0.0, t_end: float | None = None) -> np.ndarray:
    """Per-joint integral of time-weighted absolute error, by trapezoid.

    ``command`` may be a constant per-joint target or a full trace.
    """
    positions = np.atleast_2d(np.asarray(positions, float))
    command = np.asarray(command, float)
    if command.ndim < 2:
        command = np.broadcast_to(np.atleast_1d(command), positions.shape)
    t = np.arange(positions.shape[0]) / rate
    if t_end is None:
        t_end = t[-1]
    mask = (t >= t_start) & (t <= t_end)
    weighted = (t[mask] - t_start)[:, None] * np.abs(command[mask] - positions[mask])
    return np.trapezoid(weighted, t[mask], axis=0)


@dataclass
class MetricsReport:
    actual_cost: float
    rise_time: float  # median across joints, s (NaN if never reached)
    overshoot: float  # median across joints, percent
    itae: float  # median across joints
    opt_time_quartiles: tuple[float, float, float]  # (q1, median, q3)
    mpc_time_quartiles: tuple[float, float, float]
    failures: int


def compute_metrics(result: SimResult, spec_Q, spec_R, x_goal, rate: float, n_joints: int) -> MetricsReport:
    """Aggregate a run into one report; joint-level metrics take medians."""
    x0 = result.states[0]
    pos = result.states[:, :n_joints]
    rt = rise_time(pos, x0[:n_joints], x_goal[:n_joints], rate)
    ov = percent_overshoot(pos, x0[:n_joints], x_goal[:n_joints])
    ia = itae(pos, x_goal[:n_joints], rate)
    q1, med, q3 = np.percentile(result.opt_time, [25, 50, 75])
    m1, mmed, m3 = np.percentile(result.mpc_time, [25, 50, 75])
    return MetricsReport(
        actual_cost=actual_cost(result.states, result.inputs, spec_Q, spec_R, x_goal),
        rise_time=float(np.median(rt)),
        overshoot=float(np.median(ov)),
        itae=float(np.median(ia)),
        opt_time_quartiles=(float(q1), float(med), float(q3)),
        mpc_time_quartiles=(float(m1), float(mmed), float(m3)),
        failures=result.failures,
    )
