"""Score models: the analytic Gaussian score and a trainable MLP score.

Both expose the same surface: ``evaluate(x, t)`` for the score itself plus
exact Jacobian products ``jvp`` (forward mode) and ``vjp`` (reverse mode),
operating on batched states x of shape (B, d) with t a scalar or (B,) array.
"""

import numpy as np

from .errors import ContractError, DegenerateDistributionError, TrainingDivergenceError
from .nn import Mlp, load_mlp, save_mlp
from .schedule import NoiseSchedule


class ScoreModel:
    """Interface for score functions; see GaussianScore and MlpScore."""

    score_bound = None  # optional sup-norm bound on a declared probe region

    def evaluate(self, x, t):
        raise NotImplementedError

    def jvp(self, x, t, v):
        """(d score/d x) v at fixed t."""
        raise NotImplementedError

    def vjp(self, x, t, v):
        """(d score/d x)^T v at fixed t."""
        raise NotImplementedError


def _col(t, batch):
    """Broadcast scalar-or-(B,) time to a (B, 1) column."""
    t = np.asarray(t, dtype=float)
    return np.broadcast_to(t.reshape(-1, 1) if t.ndim else t, (batch, 1))


class GaussianScore(ScoreModel):
    """Closed-form score of a diffused Gaussian N(mu0, sigma0_sq I).

    The marginal at time t is N(mu0 sqrt(alpha(t)), sigma_t^2) with
    sigma_t^2 = 1 - (1 - sigma0_sq) alpha(t), so the score is
    -(x - mu_t) / sigma_t^2 and its Jacobian is the constant -I/sigma_t^2.
    """

    def __init__(self, mu0, sigma0_sq, schedule: NoiseSchedule, score_bound=None):
        self.mu0 = np.atleast_1d(np.asarray(mu0, dtype=float))
        if sigma0_sq < 0:
            raise ContractError("sigma0_sq must be nonnegative")
        self.sigma0_sq = float(sigma0_sq)
        self.schedule = schedule
        self.score_bound = score_bound

    @property
    def dim(self):
        return self.mu0.shape[0]

    def sigma_t_sq(self, t):
        s2 = 1.0 - (1.0 - self.sigma0_sq) * self.schedule.alpha(t)
        if np.any(s2 <= 0.0):
            raise DegenerateDistributionError(
                "zero-variance marginal: sigma0_sq=0 at t=0 has no density"
            )
        return s2

    def mean_t(self, t):
        t = np.asarray(t, dtype=float)
        root_a = np.sqrt(self.schedule.alpha(t))
        if t.ndim:
            return self.mu0[None, :] * root_a[:, None]
        return self.mu0 * root_a

    def evaluate(self, x, t):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        s2 = _col(self.sigma_t_sq(t), x.shape[0])
        mu = np.atleast_2d(self.mean_t(t))
        return -(x - mu) / s2

    def jvp(self, x, t, v):
        v = np.atleast_2d(np.asarray(v, dtype=float))
        return -v / _col(self.sigma_t_sq(t), v.shape[0])

    # constant symmetric Jacobian: vjp coincides with jvp
    vjp = jvp


class MlpScore(ScoreModel):
    """MLP score with time appended as one extra input feature."""

    def __init__(self, net: Mlp, schedule: NoiseSchedule):
        if net.dims[0] != net.dims[-1] + 1:
            raise ContractError("score net must map (d+1) -> d")
        self.net = net
        self.schedule = schedule

    @property
    def dim(self):
        return self.net.dims[-1]

    def _inputs(self, x, t):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return np.concatenate([x, _col(t, x.shape[0])], axis=1)

    def evaluate(self, x, t):
        return self.net.forward(self._inputs(x, t))

    def jvp(self, x, t, v):
        v = np.atleast_2d(np.asarray(v, dtype=float))
        tangent = np.concatenate([v, np.zeros((v.shape[0], 1))], axis=1)
        return self.net.jvp(self._inputs(x, t), tangent)

    def vjp(self, x, t, v):
        v = np.atleast_2d(np.asarray(v, dtype=float))
        return self.net.vjp(self._inputs(x, t), v)[:, :-1]


def dsm_target(x0, x_tilde, t, schedule: NoiseSchedule):
    """Conditional score of the forward transition, -(x~ - x0 sqrt(a))/(1-a)."""
    a = schedule.alpha(t)
    a = np.asarray(a, dtype=float).reshape(-1, 1) if np.ndim(a) else a
    return -(np.asarray(x_tilde) - np.asarray(x0) * np.sqrt(a)) / (1.0 - a)


def dsm_train(
    data,
    schedule: NoiseSchedule,
    steps=20000,
    lr=2e-3,
    hidden=(64, 64),
    batch_size=128,
    seed=0,
    t_floor=1e-4,
):
    """Fit an MlpScore by denoising score matching with weight 1 - alpha(t).

    With that weight the per-sample objective collapses to
    ||eps + sqrt(1 - alpha) s_theta(x~, t)||^2, which stays finite as t -> 0.
    Plain SGD with a fixed learning rate; returns (model, loss_history).
    t_floor keeps alpha(t) < 1 so the diffused point never degenerates.
    """
    data = np.atleast_2d(np.asarray(data, dtype=float))
    if data.size == 0:
        raise ContractError("dsm_train needs a nonempty dataset")
    n, d = data.shape
    rng = np.random.default_rng(seed)
    net = Mlp([d + 1, *hidden, d], rng=rng)
    model = MlpScore(net, schedule)
    losses = np.empty(steps)
    for step in range(steps):
        idx = rng.integers(0, n, size=batch_size)
        x0 = data[idx]
        t = rng.uniform(t_floor, 1.0, size=batch_size)
        a = schedule.alpha(t).reshape(-1, 1)
        eps = rng.standard_normal((batch_size, d))
        x_tilde = np.sqrt(a) * x0 + np.sqrt(1.0 - a) * eps
        inputs = np.concatenate([x_tilde, t.reshape(-1, 1)], axis=1)
        s, cache = net.forward_cache(inputs)
        resid = eps + np.sqrt(1.0 - a) * s
        loss = float(np.mean(np.sum(resid * resid, axis=1)))
        if not np.isfinite(loss):
            raise TrainingDivergenceError(f"DSM loss non-finite at step {step}")
        losses[step] = loss
        dout = 2.0 * np.sqrt(1.0 - a) * resid / batch_size
        dws, dbs, _ = net.backward(dout, cache)
        net.sgd_step(dws, dbs, lr)
    return model, losses


def save_score(path, model: MlpScore):
    save_mlp(
        path,
        model.net,
        extra={
            "kind": "score",
            "beta_min": model.schedule.beta_min,
            "beta_max": model.schedule.beta_max,
        },
    )


def load_score(path) -> MlpScore:
    net, fields = load_mlp(path)
    if fields.get("kind") != "score":
        raise ContractError(f"{path} is not a saved score model")
    sched = NoiseSchedule(float(fields["beta_min"]), float(fields["beta_max"]))
    return MlpScore(net, sched)
