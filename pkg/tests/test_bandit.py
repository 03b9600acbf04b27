import math

import numpy as np
import pytest

from active_ensemble.bandit import (
    FinitePosterior,
    GaussianPosterior,
    LinearBanditEnv,
    cumulative_regret,
    ensemble_agent,
    ensemble_sampling_step,
    expected_reward,
    finite_posterior_update,
    gaussian_likelihood,
    gaussian_posterior_update,
    make_benchmark_env,
    run_episode,
    thompson_step,
)


def batch_gaussian_regression(prior_mean, prior_cov, xs, ys, noise_std):
    """Closed-form batch Bayesian linear regression, the sequential oracle."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    prec0 = np.linalg.inv(prior_cov)
    prec = prec0 + xs.T @ xs / noise_std**2
    cov = np.linalg.inv(prec)
    mean = cov @ (prec0 @ prior_mean + xs.T @ ys / noise_std**2)
    return mean, cov


class TestExpectedReward:
    def test_two_outcomes(self):
        assert expected_reward([0.5, 0.5], [1.0, 0.0]) == 0.5

    def test_three_outcome_hand_value(self):
        assert expected_reward([0.2, 0.3, 0.5], [1.0, 2.0, 3.0]) == pytest.approx(2.3)

    def test_linear_gaussian_identity_reduces_to_dot_product(self):
        # discretize N(theta.x, sigma^2) on a fine grid; with identity reward the
        # expectation must collapse to theta.x
        theta, x, sigma = np.array([0.7, -0.2]), np.array([1.0, 3.0]), 0.4
        mu = float(theta @ x)
        grid = np.linspace(mu - 8 * sigma, mu + 8 * sigma, 4001)
        probs = np.exp(-0.5 * ((grid - mu) / sigma) ** 2)
        probs /= probs.sum()
        assert expected_reward(probs, grid) == pytest.approx(mu, abs=1e-9)

    def test_invalid_distribution_rejected(self):
        with pytest.raises(ValueError):
            expected_reward([0.9, 0.3], [1.0, 2.0])


class TestFinitePosterior:
    @staticmethod
    def fixed_likelihoods(table):
        def density(theta, x, y):
            return table[float(theta[0])]
        return density

    def test_hand_bayes_update(self):
        post = FinitePosterior(
            thetas=(np.array([0.0]), np.array([1.0])),
            masses=np.array([0.5, 0.5]),
            likelihood=self.fixed_likelihoods({0.0: 0.8, 1.0: 0.2}))
        updated = finite_posterior_update(post, x=None, y=None)
        np.testing.assert_allclose(updated.masses, [0.8, 0.2])

    def test_equal_likelihoods_keep_prior(self):
        post = FinitePosterior(
            thetas=(np.array([0.0]), np.array([1.0]), np.array([2.0])),
            masses=np.array([0.2, 0.3, 0.5]),
            likelihood=self.fixed_likelihoods({0.0: 0.4, 1.0: 0.4, 2.0: 0.4}))
        updated = finite_posterior_update(post, None, None)
        np.testing.assert_allclose(updated.masses, post.masses)

    def test_point_mass_preserved(self):
        post = FinitePosterior(
            thetas=(np.array([0.0]), np.array([1.0])),
            masses=np.array([1.0, 0.0]),
            likelihood=self.fixed_likelihoods({0.0: 0.1, 1.0: 0.9}))
        updated = finite_posterior_update(post, None, None)
        np.testing.assert_allclose(updated.masses, [1.0, 0.0])

    def test_impossible_observation_raises(self):
        post = FinitePosterior(
            thetas=(np.array([0.0]),),
            masses=np.array([1.0]),
            likelihood=self.fixed_likelihoods({0.0: 0.0}))
        with pytest.raises(ValueError):
            finite_posterior_update(post, None, None)

    def test_masses_stay_normalized_over_long_sequences(self):
        rng = np.random.default_rng(0)
        thetas = tuple(np.array([v]) for v in (-1.0, 0.0, 1.0))
        post = FinitePosterior(thetas=thetas, masses=np.full(3, 1 / 3),
                               likelihood=gaussian_likelihood(0.5))
        for _ in range(200):
            y = rng.normal(0.8, 0.5)
            post = finite_posterior_update(post, np.array([1.0]), y)
            assert abs(post.masses.sum() - 1.0) < 1e-12
        # the hypothesis closest to the generating value 0.8 wins
        assert post.masses.argmax() == 2


class TestGaussianPosterior:
    def test_hand_conjugate_update(self):
        post = GaussianPosterior(mean=np.zeros(2), cov=np.eye(2))
        updated = gaussian_posterior_update(post, np.array([1.0, 0.0]), 1.0, 1.0)
        np.testing.assert_allclose(updated.mean, [0.5, 0.0], atol=1e-15)
        np.testing.assert_allclose(updated.cov, np.diag([0.5, 1.0]), atol=1e-15)

    def test_covariance_shrinks_along_x(self):
        post = GaussianPosterior(mean=np.array([0.3, -0.2]), cov=np.eye(2))
        x = np.array([1.0, 1.0]) / math.sqrt(2)
        consistent_y = float(x @ post.mean)
        updated = gaussian_posterior_update(post, x, consistent_y, 0.5)
        assert x @ updated.cov @ x < x @ post.cov @ x

    def test_sequential_equals_batch_regression(self):
        rng = np.random.default_rng(7)
        for _ in range(10):
            w = rng.integers(2, 6)
            n = rng.integers(3, 40)
            prior_mean = rng.normal(size=w)
            a = rng.normal(size=(w, w))
            prior_cov = a @ a.T + w * np.eye(w)
            noise = float(rng.uniform(0.2, 2.0))
            xs = rng.normal(size=(n, w))
            ys = rng.normal(size=n)
            post = GaussianPosterior(mean=prior_mean, cov=prior_cov)
            for x, y in zip(xs, ys):
                post = gaussian_posterior_update(post, x, y, noise)
            mean, cov = batch_gaussian_regression(prior_mean, prior_cov, xs, ys, noise)
            assert np.max(np.abs(post.mean - mean)) < 1e-8
            assert np.max(np.abs(post.cov - cov)) < 1e-8

    def test_asymmetric_covariance_rejected(self):
        with pytest.raises(ValueError):
            GaussianPosterior(mean=np.zeros(2),
                              cov=np.array([[1.0, 0.5], [0.0, 1.0]]))


class TestThompsonStep:
    def test_point_mass_always_pulls_best_arm(self):
        env = LinearBanditEnv(theta=np.array([1.0, 0.0]),
                              arms=np.array([[1.0, 0.0], [0.2, 0.9], [-1.0, 0.0]]),
                              noise_std=0.5)
        post = FinitePosterior(thetas=(env.theta,), masses=np.array([1.0]),
                               likelihood=gaussian_likelihood(env.noise_std))
        rng = np.random.default_rng(0)
        for _ in range(25):
            arm, _, post = thompson_step(post, env, rng)
            assert arm == 0

    def test_symmetric_posterior_splits_pulls_evenly(self):
        env = LinearBanditEnv(theta=np.array([0.0, 0.0]),
                              arms=np.array([[1.0, 0.0], [0.0, 1.0]]),
                              noise_std=1.0)
        post = GaussianPosterior(mean=np.zeros(2), cov=np.eye(2))
        rng = np.random.default_rng(1)
        pulls = sum(thompson_step(post, env, rng)[0] for _ in range(10_000))
        sigma = math.sqrt(10_000 * 0.25)
        assert abs(pulls - 5000) < 3 * sigma

    def test_posterior_concentrates(self):
        env = make_benchmark_env()
        post = GaussianPosterior(mean=np.zeros(5), cov=np.eye(5))
        rng = np.random.default_rng(2)
        trace0 = np.trace(post.cov)
        for _ in range(200):
            _, _, post = thompson_step(post, env, rng)
        assert np.trace(post.cov) < trace0


class TestEnsembleAgent:
    def test_no_data_solutions_are_anchors(self):
        agent = ensemble_agent(4, np.zeros(3), 2.0 * np.eye(3), 0.5, seed=0)
        np.testing.assert_allclose(agent.solutions(), agent.anchors, atol=1e-12)

    def test_degenerate_agent_is_greedy_least_squares(self):
        env = LinearBanditEnv(theta=np.array([1.0, -0.5]),
                              arms=np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]),
                              noise_std=0.3)
        agent = ensemble_agent(1, np.zeros(2), None, 0.0, seed=0)
        rng = np.random.default_rng(3)
        xs, ys = [], []
        for _ in range(30):
            arm, y, agent = ensemble_sampling_step(agent, env, rng)
            xs.append(env.arms[arm])
            ys.append(y)
        ls = np.linalg.lstsq(np.array(xs), np.array(ys), rcond=None)[0]
        np.testing.assert_allclose(agent.solutions()[0], ls, atol=1e-9)

    def test_model_spread_matches_exact_posterior(self):
        # after 100 steps the 30 model estimates average to the exact posterior
        # mean computed from the same observations
        env = LinearBanditEnv(
            theta=np.random.default_rng(5).standard_normal(5),
            arms=np.random.default_rng(6).standard_normal((5, 5)),
            noise_std=0.5)
        agent = ensemble_agent(30, np.zeros(5), np.eye(5), env.noise_std, seed=4)
        rng = np.random.default_rng(8)
        post = GaussianPosterior(mean=np.zeros(5), cov=np.eye(5))
        for _ in range(100):
            arm, y, agent = ensemble_sampling_step(agent, env, rng)
            post = gaussian_posterior_update(post, env.arms[arm], y, env.noise_std)
        model_mean = agent.solutions().mean(axis=0)
        stderr = np.sqrt(np.diag(post.cov) / 30)
        assert np.all(np.abs(model_mean - post.mean) < 3 * stderr + 1e-12)


class TestEpisodes:
    def test_single_step_episode(self):
        env = make_benchmark_env()
        post = GaussianPosterior(mean=np.zeros(5), cov=np.eye(5))
        history = run_episode(post, env, horizon=1, seed=0)
        assert history.arms.shape == (1,)

    def test_seed_reproducibility(self):
        env = make_benchmark_env()
        post = GaussianPosterior(mean=np.zeros(5), cov=np.eye(5))
        h1 = run_episode(post, env, horizon=50, seed=11)
        h2 = run_episode(post, env, horizon=50, seed=11)
        np.testing.assert_array_equal(h1.arms, h2.arms)
        np.testing.assert_array_equal(h1.observations, h2.observations)
        agent = ensemble_agent(5, np.zeros(5), np.eye(5), 0.5, seed=1)
        e1 = run_episode(agent, env, horizon=50, seed=12)
        e2 = run_episode(agent, env, horizon=50, seed=12)
        np.testing.assert_array_equal(e1.arms, e2.arms)

    def test_near_noiseless_identification(self):
        # scalar arms: one nearly noiseless pull pins theta, so the best arm is
        # pulled at every later step (1e-6 keeps the posterior numerically PD)
        env = LinearBanditEnv(theta=np.array([1.0]),
                              arms=np.array([[0.5], [1.0], [2.0]]),
                              noise_std=1e-6)
        post = GaussianPosterior(mean=np.zeros(1), cov=np.eye(1))
        history = run_episode(post, env, horizon=30, seed=3)
        best = int(np.argmax(env.mean_rewards))
        assert np.all(history.arms[1:] == best)


class TestCumulativeRegret:
    def test_always_best_is_zero(self):
        env = make_benchmark_env()
        best = int(np.argmax(env.mean_rewards))
        history = run_episode(
            FinitePosterior(thetas=(env.theta,), masses=np.array([1.0]),
                            likelihood=gaussian_likelihood(env.noise_std)),
            env, horizon=20, seed=0)
        assert np.all(history.arms == best)
        np.testing.assert_allclose(cumulative_regret(history, env), 0.0, atol=1e-12)

    def test_alternating_best_worst_pattern(self):
        env = LinearBanditEnv(theta=np.array([1.0]),
                              arms=np.array([[1.0], [0.25]]), noise_std=0.1)
        gap = 0.75
        arms = np.array([0, 1] * 5)
        from active_ensemble.bandit import EpisodeHistory
        history = EpisodeHistory(arms=arms, observations=np.zeros(10))
        regret = cumulative_regret(history, env)
        expected = gap * np.ceil(np.arange(1, 11) / 2.0 - 0.5)
        # pulls alternate best, worst, ... so regret climbs by `gap` on the
        # even steps only
        np.testing.assert_allclose(regret, expected)

    def test_regret_nondecreasing(self):
        env = make_benchmark_env()
        post = GaussianPosterior(mean=np.zeros(5), cov=np.eye(5))
        history = run_episode(post, env, horizon=100, seed=9)
        regret = cumulative_regret(history, env)
        assert np.all(np.diff(regret) >= -1e-12)


class TestBenchmarkFidelity:
    """Smaller-scale version of the regret acceptance checks (3 seeds)."""

    def test_exact_ts_regret_flattens_and_ensemble_tracks_it(self):
        env = make_benchmark_env()
        ratios, exact_finals, ensemble_finals = [], [], []
        for seed in range(3):
            post = GaussianPosterior(mean=np.zeros(5), cov=np.eye(5))
            h = run_episode(post, env, horizon=500, seed=seed)
            regret = cumulative_regret(h, env)
            early = regret[49] / 50.0
            late = (regret[499] - regret[450]) / 49.0
            ratios.append(late / early if early > 0 else 0.0)
            exact_finals.append(regret[-1])
            agent = ensemble_agent(30, np.zeros(5), np.eye(5), env.noise_std,
                                   seed=1000 + seed)
            he = run_episode(agent, env, horizon=500, seed=seed)
            ensemble_finals.append(cumulative_regret(he, env)[-1])
        assert np.mean(ratios) < 0.25
        assert np.mean(ensemble_finals) <= 2.0 * np.mean(exact_finals)
