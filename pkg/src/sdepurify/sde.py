"""Euler-Maruyama integration with replayable Wiener increments.

A :class:`WienerRecord` fixes one realization of the driving noise: row k is
a d-dimensional Gaussian increment of variance ``dt_k`` per coordinate,
derived deterministically from a seed.  Records replay bit-identically, and
``replay_reversed`` yields the sign-flipped, order-reversed record that the
gradient pass consumes.

Two storage modes exist.  ``recorded`` materializes all increments up front
from a single Philox stream (the fast default).  ``counter`` re-derives row k
on demand from the counter-based key (seed, k), holding O(1) state; it is a
distinct seeded noise process from ``recorded``, kept for the constant-memory
replay path.

Step convention: coefficients are evaluated at the current state and at the
smaller-time endpoint of each step interval.  For ascending integration that
is the usual non-anticipating (Ito) evaluation at the step's start; for
descending integration it is the step's target time, which keeps the
discrete gradient of a descending solve consistent with the ascending
gradient pass on the same grid.
"""

from dataclasses import dataclass, field
from typing import Callable, Literal

import numpy as np

from .errors import ContractError, DivergenceError

_U64 = np.uint64


def _philox_normals(seed: int, n_steps: int, dim: int) -> np.ndarray:
    gen = np.random.Generator(np.random.Philox(key=np.array([seed, 0], dtype=_U64)))
    return gen.standard_normal((n_steps, dim))


def _philox_row(seed: int, k: int, dim: int) -> np.ndarray:
    gen = np.random.Generator(np.random.Philox(key=np.array([seed, k + 1], dtype=_U64)))
    return gen.standard_normal(dim)


@dataclass
class WienerRecord:
    """One trajectory's Gaussian increments, replayable in either order.

    ``increment(k)`` is row k scaled to variance ``dt_steps[k]``; calls are
    bit-identical for a fixed (seed, storage_mode, k).  ``reversed()``
    returns a view whose row k equals minus row (n_steps-1-k) of this record.
    """

    seed: int
    n_steps: int
    dim: int
    dt_steps: np.ndarray
    storage_mode: Literal["recorded", "counter"] = "recorded"
    _z: np.ndarray | None = field(default=None, repr=False)
    _reversed: bool = field(default=False, repr=False)

    @classmethod
    def generate(cls, seed, n_steps, dim, dt, storage_mode="recorded"):
        dt_steps = np.broadcast_to(np.asarray(dt, dtype=float), (n_steps,)).copy()
        if np.any(dt_steps < 0):
            raise ContractError("step sizes must be nonnegative")
        z = _philox_normals(seed, n_steps, dim) if storage_mode == "recorded" else None
        return cls(seed, n_steps, dim, dt_steps, storage_mode, z)

    @classmethod
    def for_grid(cls, seed, t_grid, dim, storage_mode="recorded"):
        """Record sized for an explicit time grid (either direction)."""
        steps = np.abs(np.diff(np.asarray(t_grid, dtype=float)))
        return cls.generate(seed, len(steps), dim, steps, storage_mode)

    @classmethod
    def zeros(cls, n_steps, dim, dt=0.0):
        """All-zero record; turns sdeint into explicit-Euler ODE stepping."""
        rec = cls.generate(0, n_steps, dim, dt, storage_mode="recorded")
        rec._z = np.zeros((n_steps, dim))
        return rec

    def _z_row(self, k):
        if self._reversed:
            return -self._base_z_row(self.n_steps - 1 - k)
        return self._base_z_row(k)

    def _base_z_row(self, k):
        if self.storage_mode == "recorded":
            return self._z[k]
        return _philox_row(self.seed, k, self.dim)

    def increment(self, k: int) -> np.ndarray:
        """k-th increment, distributed N(0, dt_steps[k]) per coordinate."""
        if not 0 <= k < self.n_steps:
            raise ContractError(f"step index {k} outside [0, {self.n_steps})")
        return self._z_row(k) * np.sqrt(self.dt_steps[k])

    @property
    def increments(self) -> np.ndarray:
        return np.stack([self.increment(k) for k in range(self.n_steps)])

    def reversed(self) -> "WienerRecord":
        return WienerRecord(
            seed=self.seed,
            n_steps=self.n_steps,
            dim=self.dim,
            dt_steps=self.dt_steps[::-1].copy(),
            storage_mode=self.storage_mode,
            _z=self._z,
            _reversed=not self._reversed,
        )


def replay_reversed(noise: WienerRecord) -> WienerRecord:
    """Record whose k-th increment is minus the (n_steps-1-k)-th of ``noise``."""
    return noise.reversed()


@dataclass
class SdeProblem:
    """Drift/diffusion pair with an oriented time interval.

    drift maps (state, time) to a state-shaped array; diffusion maps time to
    a scalar or per-dimension scale.  direction must agree with the interval
    orientation: reverse iff t_start > t_end.
    """

    drift: Callable
    diffusion: Callable
    t_start: float
    t_end: float
    direction: Literal["forward", "reverse"] = "forward"

    def __post_init__(self):
        if self.t_start == self.t_end:
            raise ContractError("degenerate interval: t_start == t_end")
        reverse = self.t_start > self.t_end
        if reverse != (self.direction == "reverse"):
            raise ContractError(
                f"direction={self.direction!r} inconsistent with interval "
                f"[{self.t_start}, {self.t_end}]"
            )


def integrate(x0, drift, diffusion, t_grid, step_noise):
    """Euler-Maruyama over an explicit grid; returns all visited states.

    ``step_noise(k)`` supplies the k-th Wiener increment shaped like the
    state.  Coefficients are evaluated at min(t_k, t_{k+1}) (see module
    docstring).  Raises DivergenceError naming the first non-finite step.
    """
    x = np.array(x0, dtype=float)
    out = np.empty((len(t_grid),) + x.shape)
    out[0] = x
    for k in range(len(t_grid) - 1):
        t_a, t_b = t_grid[k], t_grid[k + 1]
        t_eval = min(t_a, t_b)
        x = x + drift(x, t_eval) * (t_b - t_a) + diffusion(t_eval) * step_noise(k)
        if not np.all(np.isfinite(x)):
            raise DivergenceError(f"non-finite state at step {k}", step=k)
        out[k + 1] = x
    return out


def sdeint(x0, problem: SdeProblem, noise: WienerRecord, n_steps: int) -> np.ndarray:
    """Solve ``problem`` from x0 on a uniform n_steps grid.

    Returns the full trajectory (n_steps + 1 states including endpoints);
    deterministic given (x0, noise).
    """
    x0 = np.asarray(x0, dtype=float)
    if n_steps < 1:
        raise ContractError(f"n_steps must be >= 1, got {n_steps}")
    if x0.ndim != 1:
        raise ContractError("sdeint expects a 1-D state vector")
    if noise.dim != x0.shape[0]:
        raise ContractError(f"noise dim {noise.dim} != state dim {x0.shape[0]}")
    if noise.n_steps < n_steps:
        raise ContractError(f"noise has {noise.n_steps} steps, need {n_steps}")
    t_grid = np.linspace(problem.t_start, problem.t_end, n_steps + 1)
    return integrate(x0, problem.drift, problem.diffusion, t_grid, noise.increment)
