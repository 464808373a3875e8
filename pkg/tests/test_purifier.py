import numpy as np
import pytest

from sdepurify import (
    ContractError,
    DivergenceError,
    DomainError,
    GaussianScore,
    NoiseSchedule,
    Purifier,
    PurifierConfig,
    ScoreModel,
    diffuse,
    purify,
    purify_ld_sde,
    purify_vp_ode,
)


@pytest.fixture(scope="module")
def sched():
    return NoiseSchedule()


def posterior_pushforward_moments(x_a, sigma0_sq, mu0, t_star, sched):
    """Mean/variance of the purified 1-D output for a fixed input.

    The denoising SDE from the diffused point is the time reversal of the
    diffusion, so conditionally on x(t*) the output follows the conjugate
    posterior; pushing the diffusion draw through it gives
    E = (d_var mu0 + s0 sqrt(a) E[x_t]) / D and
    Var = d_var s0 / D + (s0 sqrt(a) / D)^2 Var[x_t]
    with a = alpha(t*), d_var = 1 - a, D = 1 - a + s0 a.
    """
    a = float(sched.alpha(t_star))
    d_var = 1.0 - a
    big_d = 1.0 - a + sigma0_sq * a
    mean_xt = np.sqrt(a) * x_a
    coeff = sigma0_sq * np.sqrt(a) / big_d
    mean = (d_var * mu0 + sigma0_sq * np.sqrt(a) * mean_xt) / big_d
    var = d_var * sigma0_sq / big_d + coeff * coeff * d_var
    return mean, var


class TestConfig:
    def test_validation(self):
        PurifierConfig(t_star=0.0)
        PurifierConfig(t_star=1.0)
        with pytest.raises(DomainError):
            PurifierConfig(t_star=1.2)
        with pytest.raises(DomainError):
            PurifierConfig(t_star=0.05, jitter=0.1)
        with pytest.raises(DomainError):
            PurifierConfig(sampler="pc")
        with pytest.raises(DomainError):
            PurifierConfig(ld_sigma_sq=0.0)
        with pytest.raises(DomainError):
            PurifierConfig(steps_per_unit=0)


class TestDiffuse:
    def test_t_zero_is_identity(self, sched):
        x = np.array([[0.4, -1.0]])
        out, _ = diffuse(x, 0.0, sched, rng=np.random.default_rng(0))
        assert np.array_equal(out, x)

    def test_zero_noise_branch(self, sched):
        x = np.array([[2.0, 1.0]])
        out, eps = diffuse(x, 0.3, sched, eps=np.zeros((1, 2)))
        np.testing.assert_allclose(out, np.sqrt(sched.alpha(0.3)) * x, rtol=1e-15)
        assert np.array_equal(eps, np.zeros((1, 2)))

    def test_moments_at_t_star(self, sched):
        # 10^4 draws; mean sqrt(alpha) x_a within 0.05, variance within 10%
        rng = np.random.default_rng(11)
        x_a = np.full((10_000, 1), 1.5)
        out, _ = diffuse(x_a, 0.1, sched, rng=rng)
        a = float(sched.alpha(0.1))
        assert out.mean() == pytest.approx(np.sqrt(a) * 1.5, abs=0.05)
        assert 0.9 * (1 - a) <= out.var() <= 1.1 * (1 - a)


class TestPurify:
    def test_t_star_zero_returns_input(self, sched):
        score = GaussianScore(np.zeros(2), 0.5, sched)
        cfg = PurifierConfig(t_star=0.0)
        x = np.array([0.3, -0.8])
        x0, tr = purify(x, score, cfg, seed=3, schedule=sched)
        assert np.array_equal(x0, x)
        assert tr.n_steps[0] == 0

    def test_standard_normal_is_fixed_point(self, sched):
        # sigma0^2 = 1: the marginal stays N(0, 1) at every t, so purified
        # standard-normal inputs remain standard-normal in distribution
        score = GaussianScore(np.zeros(1), 1.0, sched)
        purifier = Purifier(score, PurifierConfig(t_star=0.1), sched)
        rng = np.random.default_rng(5)
        x = rng.standard_normal((10_000, 1))
        x0, _ = purifier.run_batch(x, master_seed=17)
        assert abs(x0.mean()) < 0.05
        assert 0.9 <= x0.var() <= 1.1

    def test_posterior_contraction_toward_mean(self, sched):
        # tight prior: outputs sit closer to mu0 than the input does
        score = GaussianScore(np.zeros(1), 0.01, sched)
        purifier = Purifier(score, PurifierConfig(t_star=0.1), sched)
        x_a = np.full((1000, 1), 0.7)
        x0, _ = purifier.run_batch(x_a, master_seed=2)
        assert abs(x0.mean()) < abs(x_a[0, 0])

    @pytest.mark.parametrize("sigma0_sq", [0.25, 0.5, 1.0])
    def test_marginal_preservation_against_posterior(self, sched, sigma0_sq):
        x_a, t_star, n = 0.8, 0.1, 20_000
        score = GaussianScore(np.zeros(1), sigma0_sq, sched)
        purifier = Purifier(score, PurifierConfig(t_star=t_star), sched)
        x0, _ = purifier.run_batch(np.full((n, 1), x_a), master_seed=23)
        mean_pred, var_pred = posterior_pushforward_moments(x_a, sigma0_sq, 0.0, t_star, sched)
        se_mean = x0.std() / np.sqrt(n)
        se_var = x0.var() * np.sqrt(2.0 / (n - 1))
        assert abs(x0.mean() - mean_pred) <= 3 * se_mean
        assert abs(x0.var() - var_pred) <= 3 * se_var

    def test_replay_is_bit_identical(self, sched):
        score = GaussianScore(np.zeros(2), 0.5, sched)
        purifier = Purifier(score, PurifierConfig(t_star=0.08), sched)
        x = np.array([[0.2, -0.4], [1.0, 0.3]])
        x0, tr = purifier.run_batch(x, master_seed=9)
        assert np.array_equal(purifier.replay_batch(x, tr), x0)

    def test_jitter_draws_recorded_inside_window(self, sched):
        score = GaussianScore(np.zeros(1), 0.5, sched)
        cfg = PurifierConfig(t_star=0.1, jitter=0.02)
        purifier = Purifier(score, cfg, sched)
        _, tr = purifier.run_batch(np.zeros((64, 1)), master_seed=31)
        assert np.all(tr.t_star >= 0.08 - 1e-12) and np.all(tr.t_star <= 0.12 + 1e-12)
        assert np.unique(tr.t_star).size > 1
        _, tr2 = purifier.run_batch(np.zeros((64, 1)), master_seed=31, tag="other")
        assert not np.array_equal(tr.t_star, tr2.t_star)

    def test_divergence_propagates(self, sched):
        class ExplodingScore(ScoreModel):
            def evaluate(self, x, t):
                with np.errstate(over="ignore"):
                    return np.exp(60.0 * np.abs(np.atleast_2d(x)))

        purifier = Purifier(ExplodingScore(), PurifierConfig(t_star=0.1), sched)
        with pytest.raises(DivergenceError):
            purifier.run_batch(np.full((1, 1), 40.0), master_seed=0)

    def test_trajectory_dump_shape(self, sched):
        score = GaussianScore(np.zeros(2), 0.5, sched)
        purifier = Purifier(score, PurifierConfig(t_star=0.0155), sched)
        times, states = purifier.trajectory(np.array([0.5, 0.5]), seed=4)
        assert times[0] == pytest.approx(0.0155) and times[-1] == 0.0
        assert np.all(np.diff(times) < 0)
        # ceil grid: 16 steps, the last one shortened
        assert len(times) == 17 and states.shape == (17, 2)
        assert times[-2] == pytest.approx(0.0005, abs=1e-12)


class TestVpOde:
    def test_identity_at_t_zero_with_zero_eps(self, sched):
        score = GaussianScore(np.zeros(1), 0.5, sched)
        cfg = PurifierConfig(t_star=0.0, sampler="ode")
        x = np.array([1.1])
        assert np.array_equal(purify_vp_ode(x, score, cfg, 0, sched), x)

    def test_unit_variance_cancellation(self, sched):
        # sigma0^2 = 1 makes the flow drift -(beta/2)(x - x) = 0, so the
        # output equals the diffused point exactly
        score = GaussianScore(np.zeros(1), 1.0, sched)
        purifier = Purifier(score, PurifierConfig(t_star=0.2, sampler="ode"), sched)
        x = np.array([[0.37]])
        x0, tr = purifier.run_batch(x, master_seed=8)
        assert np.array_equal(x0, tr.x_tstar)

    def test_shared_marginals_with_sde(self, sched):
        # both samplers started from the true marginal at t* reproduce the
        # data law at t=0; agree in mean/variance within 3 stderr
        n, sigma0_sq = 10_000, 0.5
        rng = np.random.default_rng(41)
        x_a = np.sqrt(sigma0_sq) * rng.standard_normal((n, 1))
        score = GaussianScore(np.zeros(1), sigma0_sq, sched)
        sde_out, _ = Purifier(score, PurifierConfig(t_star=0.1), sched).run_batch(
            x_a, master_seed=51
        )
        ode_out, _ = Purifier(
            score, PurifierConfig(t_star=0.1, sampler="ode"), sched
        ).run_batch(x_a, master_seed=52)
        se_mean = np.sqrt(sde_out.var() / n + ode_out.var() / n)
        assert abs(sde_out.mean() - ode_out.mean()) <= 3 * se_mean
        se_var = np.sqrt(2.0 / (n - 1)) * (sde_out.var() + ode_out.var()) / 2 * np.sqrt(2)
        assert abs(sde_out.var() - ode_out.var()) <= 3 * se_var


class TestLdSde:
    def test_lambda_zero_is_identity(self, sched):
        score = GaussianScore(np.zeros(1), 1.0, sched)
        cfg = PurifierConfig(sampler="ld", ld_lambda=0.0, steps_per_unit=200)
        x = np.array([3.0])
        assert np.array_equal(purify_ld_sde(x, score, cfg, 0, sched), x)

    def test_weak_attraction_pulls_toward_origin(self, sched):
        # paper-best hyperparameters: attraction negligible, Langevin pull
        # toward the data mean dominates
        score = GaussianScore(np.zeros(1), 1.0, sched)
        cfg = PurifierConfig(
            sampler="ld", ld_sigma_sq=100.0, ld_lambda=0.1, ld_eta=1.0,
            steps_per_unit=1000,
        )
        purifier = Purifier(score, cfg, sched)
        x0, _ = purifier.run_batch(np.full((1000, 1), 3.0), master_seed=7)
        mean_abs = np.abs(x0).mean()
        se = np.abs(x0).std() / np.sqrt(1000)
        assert mean_abs + 3 * se < 3.0

    def test_strong_attraction_keeps_input(self, sched):
        score = GaussianScore(np.zeros(1), 1.0, sched)
        cfg = PurifierConfig(
            sampler="ld", ld_sigma_sq=0.001, ld_lambda=0.1, ld_eta=1.0,
            steps_per_unit=1000,
        )
        purifier = Purifier(score, cfg, sched)
        x0, _ = purifier.run_batch(np.full((1000, 1), 3.0), master_seed=13)
        assert abs(x0.mean() - 3.0) < 0.1


def test_replay_shape_contract(sched):
    score = GaussianScore(np.zeros(2), 0.5, sched)
    purifier = Purifier(score, PurifierConfig(t_star=0.05), sched)
    _, tr = purifier.run_batch(np.zeros((3, 2)), master_seed=1)
    with pytest.raises(ContractError):
        purifier.replay_batch(np.zeros((2, 2)), tr)
