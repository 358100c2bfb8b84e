"""Knot-point parameterization of input trajectories.

A horizon of T inputs is represented by p knot points spread evenly over
the horizon; the input applied at step k is the linear interpolation of
the two knots bracketing k.  The spacing (T - 1) / (p - 1) is kept as a
real number so any 1 <= p <= T is valid, and p = T reproduces the
unparameterized trajectory exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# interpolation positions are rational; fractions this small can only be
# floating-point noise from the division by the spacing
_SNAP = 1e-9


def knot_spacing(T: int, p: int) -> float:
    """Spacing between knots, in (real) time steps."""
    if p < 2:
        raise ValueError("need at least two knots for a spacing")
    if p > T:
        raise ValueError(f"cannot place {p} knots on a horizon of {T} steps")
    return (T - 1) / (p - 1)


def interp_coeffs(k: int, spacing: float) -> tuple[int, int, float]:
    """Bracketing knot indices and blend weight for step k.

    Returns (idx1, idx2, c) with the step's input given by
    (1 - c) * U[idx1] + c * U[idx2].  When k lands on a knot, c == 0 and
    idx2 is clamped to idx1.
    """
    if k < 0:
        raise ValueError("step index must be non-negative")
    pos = k / spacing
    idx1 = int(np.floor(pos))
    c = pos - idx1
    if c <= _SNAP:
        return idx1, idx1, 0.0
    if c >= 1.0 - _SNAP:
        return idx1 + 1, idx1 + 1, 0.0
    return idx1, idx1 + 1, c


@dataclass(frozen=True)
class KnotSchedule:
    """Placement of p knots on a T-step horizon."""

    T: int
    p: int

    def __post_init__(self):
        if self.T < 1:
            raise ValueError("horizon must be at least one step")
        if not 1 <= self.p <= self.T:
            raise ValueError(f"knot count must satisfy 1 <= p <= T, got p={self.p}, T={self.T}")

    @property
    def spacing(self) -> float | None:
        """Knot spacing in steps; None for the single-knot (constant) case."""
        if self.p == 1:
            return None
        return knot_spacing(self.T, self.p)

    def coeffs(self, k: int) -> tuple[int, int, float]:
        if not 0 <= k <= self.T - 1:
            raise ValueError(f"step {k} outside horizon of {self.T} steps")
        if self.p == 1:
            return 0, 0, 0.0
        return interp_coeffs(k, self.spacing)


@dataclass(frozen=True)
class KnotTrajectory:
    """Knot values U with shape (p, m): p knots of an m-channel input."""

    U: np.ndarray
    schedule: KnotSchedule

    def __post_init__(self):
        U = np.atleast_2d(np.asarray(self.U, float))
        object.__setattr__(self, "U", U)
        if U.shape[0] != self.schedule.p:
            raise ValueError(f"expected {self.schedule.p} knots, got {U.shape[0]}")


def input_at(traj: KnotTrajectory, k: int) -> np.ndarray:
    """Interpolated input applied at step k, 0 <= k <= T-1."""
    idx1, idx2, c = traj.schedule.coeffs(k)
    if c == 0.0:
        return traj.U[idx1].copy()
    return (1.0 - c) * traj.U[idx1] + c * traj.U[idx2]


def interpolation_matrix(sched: KnotSchedule) -> np.ndarray:
    """Dense (T, p) weight matrix W with expand(U) == W @ U.

    Each row holds the convex weights of the knots for one step, so rows
    sum to one and have at most two nonzeros.
    """
    W = np.zeros((sched.T, sched.p))
    for k in range(sched.T):
        idx1, idx2, c = sched.coeffs(k)
        W[k, idx1] += 1.0 - c
        if c > 0.0:
            W[k, idx2] += c
    return W


def expand(traj: KnotTrajectory) -> np.ndarray:
    """Full (T, m) per-step input sequence encoded by the knots."""
    return interpolation_matrix(traj.schedule) @ traj.U
