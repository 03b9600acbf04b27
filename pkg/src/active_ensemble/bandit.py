"""Linear bandits: exact Thompson sampling and its ensemble approximation.

The exact machinery (conjugate Gaussian posterior, finite-hypothesis Bayes
updates) serves as the correctness oracle; the ensemble agent approximates
posterior sampling with M anchored, perturbation-trained linear models and
should track the exact policy's regret.
"""

import math
from dataclasses import dataclass, replace

import numpy as np


@dataclass(frozen=True)
class LinearBanditEnv:
    """Finite-arm linear bandit with Gaussian observation noise."""

    theta: np.ndarray          # true parameter, shape (w,)
    arms: np.ndarray           # arm features, shape (k, w)
    noise_std: float

    def __post_init__(self):
        object.__setattr__(self, "theta", np.asarray(self.theta, dtype=float))
        object.__setattr__(self, "arms", np.asarray(self.arms, dtype=float))
        if self.arms.shape[0] < 2:
            raise ValueError("need at least two arms")
        if self.noise_std <= 0:
            raise ValueError("noise_std must be positive")

    @property
    def mean_rewards(self) -> np.ndarray:
        return self.arms @ self.theta

    @property
    def best_value(self) -> float:
        return float(self.mean_rewards.max())

    def observe(self, arm: int, rng: np.random.Generator) -> float:
        mean = float(self.arms[arm] @ self.theta)
        return mean + self.noise_std * rng.standard_normal()


def expected_reward(outcome_probs, outcome_rewards) -> float:
    """Exact expectation of a reward function over a finite outcome distribution."""
    probs = np.asarray(outcome_probs, dtype=float)
    rewards = np.asarray(outcome_rewards, dtype=float)
    if probs.shape != rewards.shape:
        raise ValueError("probabilities and rewards must align")
    if abs(probs.sum() - 1.0) > 1e-9 or np.any(probs < 0):
        raise ValueError("outcome probabilities must form a distribution")
    return float(probs @ rewards)


@dataclass(frozen=True)
class FinitePosterior:
    """Probability masses over a finite hypothesis list with a pluggable likelihood.

    likelihood(theta, x, y) returns the observation density q_theta(y | x).
    """

    thetas: tuple
    masses: np.ndarray
    likelihood: object

    def __post_init__(self):
        masses = np.asarray(self.masses, dtype=float)
        object.__setattr__(self, "masses", masses)
        object.__setattr__(self, "thetas",
                           tuple(np.asarray(t, dtype=float) for t in self.thetas))
        if len(self.thetas) != masses.size:
            raise ValueError("one mass per hypothesis")
        if np.any(masses < 0) or abs(masses.sum() - 1.0) > 1e-12:
            raise ValueError("masses must be nonnegative and sum to 1")

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return self.thetas[rng.choice(len(self.thetas), p=self.masses)]


def gaussian_likelihood(noise_std: float):
    """Observation model y ~ N(theta . x, noise_std^2) for linear envs."""
    def density(theta, x, y):
        mu = float(np.dot(theta, x))
        z = (y - mu) / noise_std
        return math.exp(-0.5 * z * z) / (noise_std * math.sqrt(2.0 * math.pi))
    return density


def finite_posterior_update(post: FinitePosterior, x, y) -> FinitePosterior:
    """Exact Bayes update of the hypothesis masses on one observation."""
    weights = np.array([post.likelihood(theta, x, y) for theta in post.thetas])
    unnorm = post.masses * weights
    total = unnorm.sum()
    if total <= 0.0:
        raise ValueError("observation impossible under every hypothesis")
    return replace(post, masses=unnorm / total)


@dataclass(frozen=True)
class GaussianPosterior:
    """Conjugate Gaussian belief N(mean, cov) over the bandit parameter."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float)
        cov = np.asarray(self.cov, dtype=float)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)
        if cov.shape != (mean.size, mean.size):
            raise ValueError("covariance shape must match the mean")
        if np.max(np.abs(cov - cov.T)) > 1e-10:
            raise ValueError("covariance must be symmetric")
        try:
            np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            raise ValueError("covariance must be positive-definite") from None

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        chol = np.linalg.cholesky(self.cov)
        return self.mean + chol @ rng.standard_normal(self.mean.size)


def gaussian_posterior_update(post: GaussianPosterior, x, y: float,
                              noise_std: float) -> GaussianPosterior:
    """Rank-one conjugate update for one observation y = theta . x + noise.

    Equivalent to adding x x^T / sigma^2 to the information matrix; implemented
    by the Sherman-Morrison form with symmetric re-projection of the result.
    """
    x = np.asarray(x, dtype=float)
    sigma2 = noise_std * noise_std
    sx = post.cov @ x
    denom = sigma2 + float(x @ sx)
    cov = post.cov - np.outer(sx, sx) / denom
    cov = 0.5 * (cov + cov.T)
    mean = post.mean + sx * ((y - float(x @ post.mean)) / denom)
    return GaussianPosterior(mean=mean, cov=cov)


def thompson_step(post, env: LinearBanditEnv, rng: np.random.Generator):
    """One exact Thompson step: sample a parameter, act greedily, update.

    Works for both posterior families; arm ties resolve to the lowest index.
    Returns (arm, observation, updated posterior).
    """
    theta_hat = post.sample(rng)
    arm = int(np.argmax(env.arms @ theta_hat))
    y = env.observe(arm, rng)
    if isinstance(post, GaussianPosterior):
        updated = gaussian_posterior_update(post, env.arms[arm], y, env.noise_std)
    else:
        updated = finite_posterior_update(post, env.arms[arm], y)
    return arm, y, updated


@dataclass(frozen=True)
class EnsembleBanditAgent:
    """M anchored linear models trained on perturbed observations.

    Each model m solves the regularized least squares
        argmin_theta  sum_t (y_t + z_{t,m} - theta . x_t)^2 / sigma^2
                      + ||theta - anchor_m||^2_{prior_precision}
    with fresh z_{t,m} ~ N(0, sigma^2) per model per observation.  The shared
    Gram matrix and per-model right-hand sides make the solutions cheap to
    maintain incrementally.
    """

    anchors: np.ndarray          # (m, w) draws from the prior
    prior_precision: np.ndarray  # (w, w); zero matrix means unregularized
    noise_std: float
    gram: np.ndarray             # (w, w) accumulated information
    rhs: np.ndarray              # (m, w) accumulated right-hand sides

    @property
    def n_models(self) -> int:
        return self.anchors.shape[0]

    def solutions(self) -> np.ndarray:
        """Current point estimate of every model, shape (m, w)."""
        try:
            return np.linalg.solve(self.gram, self.rhs.T).T
        except np.linalg.LinAlgError:
            return np.linalg.lstsq(self.gram, self.rhs.T, rcond=None)[0].T


def ensemble_agent(n_models: int, prior_mean, prior_cov, noise_std: float,
                   seed) -> EnsembleBanditAgent:
    """Draw anchors from N(prior_mean, prior_cov) and start with no data.

    Passing prior_cov=None drops the regularizer entirely (anchors at the
    prior mean, zero prior precision); solutions then come from least squares.
    """
    rng = np.random.default_rng(seed)
    prior_mean = np.asarray(prior_mean, dtype=float)
    w = prior_mean.size
    if prior_cov is None:
        anchors = np.tile(prior_mean, (n_models, 1))
        precision = np.zeros((w, w))
    else:
        prior_cov = np.asarray(prior_cov, dtype=float)
        chol = np.linalg.cholesky(prior_cov)
        anchors = prior_mean + rng.standard_normal((n_models, w)) @ chol.T
        precision = np.linalg.inv(prior_cov)
    return EnsembleBanditAgent(
        anchors=anchors, prior_precision=precision, noise_std=noise_std,
        gram=precision.copy(), rhs=anchors @ precision.T)


def ensemble_sampling_step(agent: EnsembleBanditAgent, env: LinearBanditEnv,
                           rng: np.random.Generator):
    """Pick one model uniformly, act greedily under it, update all models.

    Every model sees the observation perturbed by fresh N(0, sigma^2) noise.
    Returns (arm, observation, updated agent).
    """
    model = int(rng.integers(agent.n_models))
    theta = agent.solutions()[model]
    arm = int(np.argmax(env.arms @ theta))
    y = env.observe(arm, rng)
    x = env.arms[arm]
    # noise_std 0 degenerates to plain least squares: no perturbation, and the
    # 1/sigma^2 weight cancels out of the normal equations
    weight = 1.0 / agent.noise_std ** 2 if agent.noise_std > 0 else 1.0
    perturbed = y + agent.noise_std * rng.standard_normal(agent.n_models)
    gram = agent.gram + np.outer(x, x) * weight
    gram = 0.5 * (gram + gram.T)
    rhs = agent.rhs + np.outer(perturbed, x) * weight
    return arm, y, replace(agent, gram=gram, rhs=rhs)


@dataclass(frozen=True)
class EpisodeHistory:
    arms: np.ndarray
    observations: np.ndarray


def run_episode(policy, env: LinearBanditEnv, horizon: int, seed) -> EpisodeHistory:
    """Roll a posterior or ensemble agent forward for `horizon` steps.

    All randomness (sampling, noise, perturbations) flows from one generator
    seeded here, so trajectories are reproducible.
    """
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    rng = np.random.default_rng(seed)
    arms = np.empty(horizon, dtype=int)
    ys = np.empty(horizon)
    state = policy
    for t in range(horizon):
        if isinstance(state, EnsembleBanditAgent):
            arms[t], ys[t], state = ensemble_sampling_step(state, env, rng)
        else:
            arms[t], ys[t], state = thompson_step(state, env, rng)
    return EpisodeHistory(arms=arms, observations=ys)


def cumulative_regret(history: EpisodeHistory, env: LinearBanditEnv) -> np.ndarray:
    """Running sum of per-step gaps to the best arm's mean reward."""
    gaps = env.best_value - env.mean_rewards[history.arms]
    return np.cumsum(gaps)


def make_benchmark_env() -> LinearBanditEnv:
    """The fixed 10-arm, 5-dimensional, noise-0.5 environment used by the
    regret benchmarks; arms and the true parameter never change."""
    rng = np.random.default_rng(20240 + 17)
    arms = rng.standard_normal((10, 5))
    theta = rng.standard_normal(5)
    return LinearBanditEnv(theta=theta, arms=arms, noise_std=0.5)


def benchmark_prior(env: LinearBanditEnv) -> GaussianPosterior:
    w = env.theta.size
    return GaussianPosterior(mean=np.zeros(w), cov=np.eye(w))
