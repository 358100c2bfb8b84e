"""Evolutionary MPC over knot-point trajectories.

Each candidate is a full set of knot points (p, m).  One solver call runs
a fixed number of generations: candidates are rolled out through the
discrete model, the cheapest ``num_parents`` survive unchanged, and the
rest of the population is refilled by parameter-wise crossover of two
random parents plus Gaussian mutation, clamped to the input bounds.  The
first knot of the best candidate is the input to apply.

Randomness is drawn from counter-based streams (Philox) keyed by the
seed and a monotonically increasing generation counter, with all draws
made candidate-major at the generation barrier.  Candidate evaluation
itself consumes no randomness, so results are identical no matter how
the rollouts are scheduled or batched.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .condense import MpcSpec, build_small_param
from .param import KnotSchedule, interpolation_matrix


@dataclass(frozen=True)
class EmpcSettings:
    """Population shape and variation operators."""

    num_sims: int = 1024
    num_parents: int = 64
    generations: int = 1
    mutation_prob: float = 0.5
    crossover_prob: float = 0.5
    sigma_scale: float = 0.2  # base mutation std as a fraction of the input range
    sigma_noise: np.ndarray | None = None  # explicit per-channel std, overrides sigma_scale
    dist_ref: float = 1.0  # goal distance at which mutation noise reaches full scale
    seed: int = 0

    def __post_init__(self):
        if self.num_sims < 1 or not 1 <= self.num_parents <= self.num_sims:
            raise ValueError("need 1 <= num_parents <= num_sims")
        if self.generations < 1:
            raise ValueError("generations must be >= 1")
        for name in ("mutation_prob", "crossover_prob"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")


@dataclass
class Population:
    """Current candidates, their costs, and the RNG generation counter."""

    candidates: np.ndarray  # (num_sims, p, m)
    costs: np.ndarray  # (num_sims,)
    generation: int


@dataclass
class EmpcResult:
    u: np.ndarray  # input to apply now (first knot of the best candidate)
    best: np.ndarray  # best candidate, (p, m)
    best_cost: float
    population: Population


def _rng(seed: int, generation: int) -> np.random.Generator:
    key = np.random.SeedSequence(entropy=seed, spawn_key=(generation,))
    return np.random.Generator(np.random.Philox(key))


def _mutation_sigma(spec: MpcSpec, settings: EmpcSettings, x0: np.ndarray) -> np.ndarray:
    """Per-channel mutation std, shrinking as the state approaches the goal."""
    if settings.sigma_noise is not None:
        base = np.broadcast_to(np.asarray(settings.sigma_noise, float), (spec.model.m,))
    else:
        base = settings.sigma_scale * (spec.u_max - spec.u_min)
    # per-coordinate rms distance, so the schedule is state-dimension free
    err = spec.x_goal - np.asarray(x0, float)
    dist = float(np.linalg.norm(err)) / np.sqrt(err.size)
    return base * min(1.0, dist / settings.dist_ref)


def _rollout_costs(cands: np.ndarray, spec: MpcSpec, sched: KnotSchedule, x0: np.ndarray) -> np.ndarray:
    """Tracking cost of every candidate by rolling out the discrete model.

    Only the state recursion stays in the horizon loop; interpolation, the
    input forcing, and both quadratic forms are batched across all steps.
    """
    model = spec.model
    T = spec.T
    W = interpolation_matrix(sched)
    N = cands.shape[0]
    p, m = sched.p, model.m

    # The summed per-step input cost is a quadratic in the knots with weight
    # (W'W) kron R, and interpolation commutes with the affine u_goal shift
    # because every weight row sums to one.
    Zc = (cands - spec.u_goal).reshape(N, p * m)
    cost = np.einsum("ni,ni->n", Zc @ np.kron(W.T @ W, spec.R), Zc)

    # Forcing terms: map the knots through Bd once, interpolate after.
    drive = np.tensordot(W, cands @ model.Bd.T, axes=(1, 1))  # (T, N, n)
    drive += model.wd

    X = np.empty((T + 1, N, model.n))
    X[0] = x0
    AdT = model.Ad.T
    for k in range(T):
        np.matmul(X[k], AdT, out=X[k + 1])
        X[k + 1] += drive[k]
    ex = X - spec.x_goal
    qd = np.diagonal(spec.Q)
    if np.count_nonzero(spec.Q) == np.count_nonzero(qd):
        cost += ((ex * ex) @ qd).sum(axis=0)
    else:
        cost += np.einsum("tni,tni->n", ex @ spec.Q, ex)
    return cost


class _CostModel:
    """Batch candidate scoring for one (spec, schedule, state) triple.

    With a linear model the tracking cost is a fixed quadratic in the knot
    points, so after condensing once per solve every generation is scored
    with one small matrix product instead of a fresh rollout.  The additive
    constant between the condensed objective and the full tracking cost is
    recovered from a single reference rollout.  Specs with state bounds
    keep the rollout path (the search never enforces state bounds anyway).
    """

    def __init__(self, spec: MpcSpec, sched: KnotSchedule, x0):
        self.spec = spec
        self.sched = sched
        self.x0 = np.asarray(x0, float)
        self.quad = None
        if not spec.has_state_bounds:
            prob = build_small_param(spec, sched, self.x0)
            ref = np.tile(spec.u_goal, sched.p)
            base = _rollout_costs(
                ref.reshape(1, sched.p, spec.model.m), spec, sched, self.x0
            )[0]
            c0 = base - float(ref @ (prob.P @ ref) + 2.0 * prob.q @ ref)
            self.quad = (prob.P, prob.q, c0)

    def __call__(self, cands: np.ndarray) -> np.ndarray:
        if self.quad is None:
            return _rollout_costs(cands, self.spec, self.sched, self.x0)
        P, q, c0 = self.quad
        Z = cands.reshape(cands.shape[0], -1)
        return np.einsum("ni,ni->n", Z @ P, Z) + 2.0 * (Z @ q) + c0


def evaluate_cost(candidate, spec: MpcSpec, sched: KnotSchedule, x0) -> float:
    """Full tracking cost of one knot candidate, terminal state included."""
    U = np.asarray(getattr(candidate, "U", candidate), float)
    U = U.reshape(sched.p, spec.model.m)
    return float(_rollout_costs(U[None], spec, sched, np.asarray(x0, float))[0])


def init_population(
    spec: MpcSpec, sched: KnotSchedule, settings: EmpcSettings, x0, cost: _CostModel | None = None
) -> Population:
    """Cold start: candidates drawn uniformly within the input bounds."""
    if cost is None:
        cost = _CostModel(spec, sched, x0)
    rng = _rng(settings.seed, 0)
    shape = (settings.num_sims, sched.p, spec.model.m)
    cands = rng.uniform(spec.u_min, spec.u_max, size=shape)
    return Population(cands, cost(cands), generation=1)


def evolve_generation(
    pop: Population,
    spec: MpcSpec,
    sched: KnotSchedule,
    settings: EmpcSettings,
    x0,
    cost: _CostModel | None = None,
) -> Population:
    """One elitist generation at a fixed state x0."""
    if cost is None:
        cost = _CostModel(spec, sched, x0)
    order = np.argsort(pop.costs, kind="stable")
    elite_idx = order[: settings.num_parents]
    elites = pop.candidates[elite_idx]
    elite_costs = pop.costs[elite_idx]

    n_children = settings.num_sims - settings.num_parents
    if n_children == 0:
        return Population(elites.copy(), elite_costs.copy(), pop.generation + 1)

    p, m = sched.p, spec.model.m
    rng = _rng(settings.seed, pop.generation)
    parents = rng.integers(0, settings.num_parents, size=(n_children, 2))
    take_second = rng.random((n_children, p, m)) < settings.crossover_prob
    mutate = rng.random((n_children, p, m)) < settings.mutation_prob
    noise = rng.normal(size=(n_children, p, m))

    children = np.where(take_second, elites[parents[:, 1]], elites[parents[:, 0]])
    sigma = _mutation_sigma(spec, settings, x0)
    children = children + mutate * noise * sigma
    np.clip(children, spec.u_min, spec.u_max, out=children)

    cands = np.concatenate([elites, children])
    costs = np.concatenate([elite_costs, cost(children)])
    return Population(cands, costs, pop.generation + 1)


def solve_empc(
    spec: MpcSpec,
    sched: KnotSchedule,
    settings: EmpcSettings,
    x0,
    prev: Population | None = None,
) -> EmpcResult:
    """Run ``settings.generations`` generations and pick the best candidate.

    Without ``prev`` the first generation is the cold uniform sample; with
    ``prev`` the previous population is re-evaluated at the new state
    before mating, so stale costs never drive selection.
    """
    x0 = np.asarray(x0, float)
    cost = _CostModel(spec, sched, x0)
    if prev is None:
        pop = init_population(spec, sched, settings, x0, cost)
        remaining = settings.generations - 1
    else:
        pop = Population(prev.candidates, cost(prev.candidates), prev.generation)
        remaining = settings.generations
    for _ in range(remaining):
        pop = evolve_generation(pop, spec, sched, settings, x0, cost)
    best = int(np.argmin(pop.costs))
    cand = pop.candidates[best]
    return EmpcResult(cand[0].copy(), cand.copy(), float(pop.costs[best]), pop)
