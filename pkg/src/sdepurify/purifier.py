"""Purification pipelines: forward diffusion plus a denoising pass.

Three samplers share one engine:

* ``sde``  -- diffuse to t*, then the reverse-time denoising SDE back to 0
              (drift -beta/2 (x + 2 s), diffusion sqrt(beta)),
* ``ode``  -- diffuse to t*, then the deterministic probability-flow leg
              (drift -beta/2 (x + s), no diffusion),
* ``ld``   -- Langevin dynamics on the t=0 score over the fixed horizon
              [0, 1], with a quadratic attraction of weight 1/sigma^2 toward
              the input point.

Every call records a complete noise transcript (sampled t*, forward draw
eps, Wiener rows) so the exact trajectory can be replayed bit-identically
and differentiated by the gradient pass.  All state is batched: x has shape
(B, d) and each sample owns an independent stream derived from
(master seed, tag, sample index).
"""

from dataclasses import dataclass, field, replace
from typing import Literal, Optional

import numpy as np

from .errors import ContractError, DivergenceError, DomainError
from .schedule import NoiseSchedule
from .scores import ScoreModel
from .sde import _philox_normals
from .streams import stream_seed


@dataclass(frozen=True)
class PurifierConfig:
    """Purification strength (t*), sampler variant, and solver resolution.

    ``t_star = 0`` is allowed and makes the purifier the identity map.
    ``jitter`` > 0 draws t* uniformly from [t_star - jitter, t_star + jitter]
    afresh on every call.  ``steps_per_unit`` fixes the Euler step
    dt = 1/steps_per_unit; the reverse leg uses ceil(t*/dt) steps with the
    final partial step shortened.
    """

    t_star: float = 0.1
    jitter: float = 0.0
    sampler: Literal["sde", "ode", "ld"] = "sde"
    steps_per_unit: int = 1000
    ld_sigma_sq: float = 100.0
    ld_lambda: float = 0.1
    ld_eta: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.t_star <= 1.0:
            raise DomainError(f"t_star must lie in [0, 1], got {self.t_star}")
        if self.jitter < 0.0:
            raise DomainError("jitter must be nonnegative")
        if self.t_star - self.jitter < 0.0 or self.t_star + self.jitter > 1.0:
            raise DomainError("jitter window must stay inside [0, 1]")
        if self.sampler not in ("sde", "ode", "ld"):
            raise DomainError(f"unknown sampler {self.sampler!r}")
        if self.steps_per_unit < 1:
            raise DomainError("steps_per_unit must be >= 1")
        if self.ld_sigma_sq <= 0.0:
            raise DomainError("ld_sigma_sq must be positive")
        if self.ld_lambda < 0.0 or self.ld_eta < 0.0:
            raise DomainError("ld_lambda and ld_eta must be nonnegative")

    @property
    def dt(self) -> float:
        return 1.0 / self.steps_per_unit


def n_reverse_steps(t_star, dt):
    """ceil(t*/dt) with guards against float jitter; 0 when t* == 0."""
    t_star = np.asarray(t_star, dtype=float)
    n = np.ceil(t_star / dt - 1e-9).astype(int)
    return np.where(t_star > 0.0, np.maximum(n, 1), 0)


def diffuse(x_a, t_star, schedule: NoiseSchedule, eps=None, rng=None):
    """Forward-diffused sample sqrt(a) x_a + sqrt(1-a) eps; returns (x, eps).

    eps is returned so gradients can flow through the draw by
    reparameterization: d x(t*)/d x_a = sqrt(alpha(t*)) I.
    """
    x_a = np.atleast_2d(np.asarray(x_a, dtype=float))
    a = np.asarray(schedule.alpha(t_star), dtype=float)
    a = a.reshape(-1, 1) if a.ndim else a
    if eps is None:
        rng = rng if rng is not None else np.random.default_rng(0)
        eps = rng.standard_normal(x_a.shape)
    eps = np.asarray(eps, dtype=float).reshape(x_a.shape)
    return np.sqrt(a) * x_a + np.sqrt(1.0 - a) * eps, eps


@dataclass
class Transcript:
    """Everything needed to replay one purification batch exactly."""

    sampler: str
    t_star: np.ndarray          # (B,) sampled diffusion times (zeros for ld)
    dt: float
    eps: Optional[np.ndarray]   # (B, d) forward draw; None for ld
    z: Optional[np.ndarray]     # (B, n, d) standard-normal rows; None for ode
    x_a: np.ndarray             # (B, d) input points
    x_tstar: np.ndarray         # (B, d) state at the start of the denoising leg
    x0: np.ndarray              # (B, d) purified output
    schedule: NoiseSchedule = None
    ld_params: Optional[tuple] = None  # (sigma_sq, lambda, eta) for ld
    seeds: np.ndarray = field(default=None, repr=False)

    @property
    def n_steps(self):
        if self.sampler == "ld":
            return np.full(self.t_star.shape, int(round(1.0 / self.dt)))
        return n_reverse_steps(self.t_star, self.dt)


class Purifier:
    """Binds a score model, a schedule, and a PurifierConfig."""

    def __init__(self, score: ScoreModel, cfg: PurifierConfig, schedule: NoiseSchedule):
        self.score = score
        self.cfg = cfg
        self.schedule = schedule

    # -- denoising legs ----------------------------------------------------

    def _reverse_leg(self, x, t_stars, z, stochastic, collect=False):
        """Integrate from per-sample t* down to 0 on the ceil grid.

        Coefficients are evaluated at the smaller-time end of each step
        interval; samples whose grid is exhausted take zero-size steps.
        """
        cfg, sched = self.cfg, self.schedule
        dt = cfg.dt
        coeff = 2.0 if stochastic else 1.0
        n_max = int(n_reverse_steps(float(np.max(t_stars)), dt))
        states = [x.copy()] if collect else None
        for k in range(n_max):
            t_hi = np.maximum(t_stars - k * dt, 0.0)
            t_lo = np.maximum(t_stars - (k + 1) * dt, 0.0)
            delta = (t_lo - t_hi)[:, None]  # <= 0
            beta = sched.beta(t_lo)[:, None]
            s = self.score.evaluate(x, t_lo)
            x = x + (-0.5 * beta * (x + coeff * s)) * delta
            if stochastic:
                x = x + np.sqrt(beta) * z[:, k, :] * np.sqrt(-delta)
            if not np.all(np.isfinite(x)):
                raise DivergenceError(f"non-finite state at reverse step {k}", step=k)
            if collect:
                states.append(x.copy())
        return (x, states) if collect else x

    def _ld_leg(self, x_a, z):
        """Langevin leg on [0, 1]; the t=0 score plus attraction to x_a."""
        cfg = self.cfg
        lam, sig2, eta = cfg.ld_lambda, cfg.ld_sigma_sq, cfg.ld_eta
        dt = cfg.dt
        n = int(round(1.0 / dt))
        g = eta * np.sqrt(lam)
        x = x_a.copy()
        zeros_t = np.zeros(x.shape[0])
        for k in range(n):
            s = self.score.evaluate(x, zeros_t)
            drift = -0.5 * lam * (-s + (x - x_a) / sig2)
            x = x + drift * dt + g * z[:, k, :] * np.sqrt(dt)
            if not np.all(np.isfinite(x)):
                raise DivergenceError(f"non-finite state at LD step {k}", step=k)
        return x

    # -- public entry points -----------------------------------------------

    def run_batch(self, x_a, master_seed, tag="purify", index0=0):
        """Purify a batch; per-sample noise streams, fresh t* draws.

        Returns (x0, Transcript).
        """
        x_a = np.atleast_2d(np.asarray(x_a, dtype=float))
        b, d = x_a.shape
        cfg = self.cfg
        seeds = np.array(
            [stream_seed(master_seed, tag, index0 + i) for i in range(b)],
            dtype=np.uint64,
        )
        if cfg.sampler == "ld":
            n = int(round(1.0 / cfg.dt))
            z = np.stack([_philox_normals(int(s), n, d) for s in seeds])
            x0 = self._ld_leg(x_a, z)
            tr = Transcript("ld", np.zeros(b), cfg.dt, None, z, x_a.copy(),
                            x_a.copy(), x0.copy(), self.schedule,
                            (cfg.ld_sigma_sq, cfg.ld_lambda, cfg.ld_eta), seeds)
            return x0, tr

        t_stars = np.empty(b)
        eps = np.empty((b, d))
        for i, s in enumerate(seeds):
            rng = np.random.default_rng(int(s))
            t_stars[i] = (
                rng.uniform(cfg.t_star - cfg.jitter, cfg.t_star + cfg.jitter)
                if cfg.jitter > 0.0
                else cfg.t_star
            )
            eps[i] = rng.standard_normal(d)
        x_t, eps = diffuse(x_a, t_stars, self.schedule, eps=eps)
        n_max = int(np.max(n_reverse_steps(t_stars, cfg.dt)))
        if cfg.sampler == "sde":
            z = np.stack([_philox_normals(int(s), max(n_max, 1), d) for s in seeds])
            z = z[:, :n_max, :] if n_max else np.zeros((b, 0, d))
            x0 = self._reverse_leg(x_t.copy(), t_stars, z, stochastic=True)
        else:
            z = None
            x0 = self._reverse_leg(x_t.copy(), t_stars, None, stochastic=False)
        tr = Transcript(cfg.sampler, t_stars, cfg.dt, eps, z, x_a.copy(),
                        x_t.copy(), x0.copy(), self.schedule, None, seeds)
        return x0, tr

    def replay_batch(self, x_a, transcript: Transcript):
        """Re-run the recorded trajectory from (possibly perturbed) inputs.

        All stored randomness (t*, eps, Wiener rows) is reused, so the map
        x_a -> x0 is deterministic; with the original inputs the output is
        bit-identical to the recorded one.
        """
        x_a = np.atleast_2d(np.asarray(x_a, dtype=float))
        if x_a.shape != transcript.x_a.shape:
            raise ContractError("replay input shape differs from transcript")
        if transcript.sampler == "ld":
            return self._ld_leg(x_a, transcript.z)
        x_t, _ = diffuse(x_a, transcript.t_star, self.schedule, eps=transcript.eps)
        return self._reverse_leg(
            x_t, transcript.t_star, transcript.z,
            stochastic=(transcript.sampler == "sde"),
        )

    def run(self, x_a, seed, tag="purify", index=0):
        """Single-sample convenience wrapper; returns (x0 (d,), transcript)."""
        x0, tr = self.run_batch(np.atleast_2d(x_a), seed, tag=tag, index0=index)
        return x0[0], tr

    def trajectory(self, x_a, seed, tag="purify", index=0):
        """Single-sample run returning (times, states) of the denoising leg."""
        x_a = np.atleast_2d(np.asarray(x_a, dtype=float))
        _, tr = self.run_batch(x_a, seed, tag=tag, index0=index)
        if tr.sampler == "ld":
            raise ContractError("trajectory dump supports sde/ode samplers")
        x_t, _ = diffuse(x_a, tr.t_star, self.schedule, eps=tr.eps)
        _, states = self._reverse_leg(
            x_t, tr.t_star, tr.z, stochastic=(tr.sampler == "sde"), collect=True
        )
        ts = float(tr.t_star[0])
        n = int(tr.n_steps[0])
        times = np.maximum(ts - np.arange(n + 1) * tr.dt, 0.0)
        return times, np.stack([s[0] for s in states])


def purify(x_a, score, cfg: PurifierConfig, seed, schedule, tag="purify"):
    """Run the configured sampler; returns (x0, transcript)."""
    return Purifier(score, cfg, schedule).run(x_a, seed, tag=tag)


def purify_vp_ode(x_a, score, cfg, seed, schedule):
    """Deterministic probability-flow variant (single score coefficient)."""
    x0, _ = Purifier(score, replace(cfg, sampler="ode"), schedule).run(x_a, seed)
    return x0


def purify_ld_sde(x_a, score, cfg, seed, schedule):
    """Langevin-dynamics variant with attraction to the input point."""
    x0, _ = Purifier(score, replace(cfg, sampler="ld"), schedule).run(x_a, seed)
    return x0
