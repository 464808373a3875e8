"""Executable checks of the analytic Gaussian properties of the pipeline.

Everything here is evaluated on 1-D or 2-D Gaussian instances where the
diffused marginals, KL and Fisher divergences, the high-probability
distance bound, and the input gradient of the denoising leg all have closed
forms.  No trained model enters these checks.
"""

from dataclasses import dataclass

import numpy as np

from .adjoint import backprop_sde
from .errors import ContractError, DomainError
from .purifier import Purifier, PurifierConfig
from .schedule import NoiseSchedule
from .scores import GaussianScore
from .streams import make_rng


@dataclass(frozen=True)
class GaussianPair:
    """Two 1-D Gaussians diffused by the same schedule: (mean, variance)."""

    p0: tuple
    q0: tuple
    schedule: NoiseSchedule

    def __post_init__(self):
        if self.p0[1] <= 0 or self.q0[1] <= 0:
            raise DomainError("variances must be positive")

    def moments_at(self, t):
        """((mean_p, var_p), (mean_q, var_q)) at diffusion time t."""
        a = self.schedule.alpha(np.asarray(t, dtype=float))
        root = np.sqrt(a)
        mp, vp = self.p0
        mq, vq = self.q0
        return (
            (mp * root, 1.0 - (1.0 - vp) * a),
            (mq * root, 1.0 - (1.0 - vq) * a),
        )


def kl_along_diffusion(pair: GaussianPair, t_grid):
    """Closed-form KL(p_t || q_t) on the grid."""
    t_grid = np.asarray(t_grid, dtype=float)
    (mp, vp), (mq, vq) = pair.moments_at(t_grid)
    return 0.5 * (np.log(vq / vp) + (vp + (mp - mq) ** 2) / vq - 1.0)


def fisher_along_diffusion(pair: GaussianPair, t_grid):
    """Closed-form Fisher divergence D_F(p_t || q_t) on the grid.

    The score difference of two Gaussians is affine, a x + b with
    a = 1/vq - 1/vp and b = mp/vp - mq/vq, so the p-expectation of its
    square is a^2 (vp + mp^2) + 2 a b mp + b^2.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    (mp, vp), (mq, vq) = pair.moments_at(t_grid)
    a = 1.0 / vq - 1.0 / vp
    b = mp / vp - mq / vq
    return a * a * (vp + mp * mp) + 2.0 * a * b * mp + b * b


def de_bruijn_residual(pair: GaussianPair, t, spacing=1e-3):
    """Relative residual of dKL/dt = -beta(t)/2 D_F at time t.

    dKL/dt is a central difference at the given spacing, so the residual is
    the grid's self-consistency error, not a proof.
    """
    kl = kl_along_diffusion(pair, np.array([t - spacing, t + spacing]))
    dkl = (kl[1] - kl[0]) / (2.0 * spacing)
    fisher = float(fisher_along_diffusion(pair, np.array([t]))[0])
    beta = float(pair.schedule.beta(t))
    return abs(dkl + 0.5 * beta * fisher) / abs(dkl)


def c_delta(d, delta):
    """Chi-square concentration constant of the distance bound."""
    log_inv = np.log(1.0 / delta)
    return np.sqrt(2.0 * d + 4.0 * np.sqrt(d * log_inv) + 4.0 * log_inv)


def score_sup_bound(score: GaussianScore, t_grid, radius_sigmas=6.0):
    """2 * sup ||score|| probed on the per-t sphere ||x - mu_t|| = R sigma_t.

    The Gaussian score is unbounded on all of R^d, so the bound is declared
    on a truncated probe region; R defaults to 6 standard deviations.
    """
    sup = 0.0
    for t in np.atleast_1d(t_grid):
        sig = np.sqrt(float(score.sigma_t_sq(t)))
        mu = score.mean_t(float(t))
        probe = mu + radius_sigmas * sig * np.eye(score.dim)[:1]
        sup = max(sup, float(np.linalg.norm(score.evaluate(probe, float(t))[0])))
    return 2.0 * sup


def bound_check_thm2(score: GaussianScore, eps_a, t_star, delta, n_trials,
                     seed=0, steps_per_unit=1000, radius_sigmas=6.0):
    """Empirical violation rate of the purified-distance bound.

    Clean points are drawn from the data Gaussian truncated to the probe
    region that defines the score bound; each is perturbed by eps_a,
    purified through the denoising SDE, and the distance ||x0_hat - x|| is
    compared against ||eps_a|| + sqrt(e^{2 gamma} - 1) C_delta + gamma C_s.
    Returns (violation_rate, components dict).
    """
    sched = score.schedule
    d = score.dim
    eps_a = np.broadcast_to(np.asarray(eps_a, dtype=float), (d,))
    rng = make_rng(seed, "thm2-clean")
    sigma0 = np.sqrt(score.sigma0_sq)
    clean = np.empty((n_trials, d))
    filled = 0
    while filled < n_trials:
        cand = score.mu0 + sigma0 * rng.standard_normal((n_trials, d))
        keep = np.linalg.norm(cand - score.mu0, axis=1) <= radius_sigmas * sigma0
        take = min(int(keep.sum()), n_trials - filled)
        clean[filled : filled + take] = cand[keep][:take]
        filled += take

    cfg = PurifierConfig(t_star=t_star, steps_per_unit=steps_per_unit)
    purifier = Purifier(score, cfg, sched)
    x0_hat, _ = purifier.run_batch(clean + eps_a, seed, tag="thm2-purify")
    dist = np.linalg.norm(x0_hat - clean, axis=1)

    gam = float(sched.gamma(t_star))
    n_grid = max(int(np.ceil(t_star * steps_per_unit)), 1)
    t_grid = np.linspace(0.0, t_star, n_grid + 1)
    cs = score_sup_bound(score, t_grid, radius_sigmas)
    terms = {
        "eps_term": float(np.linalg.norm(eps_a)),
        "noise_term": float(np.sqrt(np.expm1(2.0 * gam)) * c_delta(d, delta)),
        "score_term": gam * cs,
        "c_s": cs,
        "c_delta": float(c_delta(d, delta)),
        "gamma": gam,
    }
    bound = terms["eps_term"] + terms["noise_term"] + terms["score_term"]
    terms["bound"] = bound
    return float(np.mean(dist > bound)), terms


def analytic_gradient(sigma0_sq, t_star, schedule: NoiseSchedule):
    """Closed-form d x(0) / d x(t*) for Gaussian data with mean zero."""
    a = float(schedule.alpha(t_star))
    return sigma0_sq * np.sqrt(a) / (1.0 - a + sigma0_sq * a)


def gradcheck_study(sigma0_grid, dt_grid, t_star, schedule: NoiseSchedule,
                    seed=0, x_probe=0.3):
    """Adjoint-vs-analytic gradient table over (sigma0_sq, dt).

    Each row runs one purification of a 1-D probe point, pushes a unit
    cotangent back through the augmented sweep, and compares with the
    closed form.  Returns rows of
    (sigma0_sq, dt, phi_ana, phi_adj, rel_error).
    """
    if len(sigma0_grid) == 0 or len(dt_grid) == 0:
        raise ContractError("empty grid")
    rows = []
    for s0sq in sigma0_grid:
        score = GaussianScore(np.zeros(1), s0sq, schedule)
        for dt in dt_grid:
            steps = int(round(1.0 / dt))
            cfg = PurifierConfig(t_star=t_star, steps_per_unit=steps)
            purifier = Purifier(score, cfg, schedule)
            _, tr = purifier.run(np.array([x_probe]), seed, tag="gradcheck")
            phi_adj = float(backprop_sde(tr, score, np.ones((1, 1)))[0, 0])
            phi_ana = analytic_gradient(s0sq, t_star, schedule)
            rows.append(
                (s0sq, dt, phi_ana, phi_adj, abs(phi_ana - phi_adj) / abs(phi_ana))
            )
    return rows
