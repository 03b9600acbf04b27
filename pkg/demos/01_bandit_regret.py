"""Exact Thompson sampling versus the ensemble approximation on a linear bandit.

Exact posterior sampling is the gold standard for the exploration trade-off;
the anchored-ensemble agent approximates it without ever representing the
posterior.  This script rolls both on the fixed 10-arm benchmark and plots
their cumulative regret: the two curves should flatten together, with the
M=30 ensemble staying within a small factor of exact.
"""

import numpy as np

from active_ensemble.bandit import (
    benchmark_prior,
    cumulative_regret,
    ensemble_agent,
    make_benchmark_env,
    run_episode,
)

env = make_benchmark_env()
print(f"benchmark: {env.arms.shape[0]} arms in {env.theta.size} dims, "
      f"noise std {env.noise_std}")
print(f"arm mean rewards: {np.round(env.mean_rewards, 2)}")

horizon, seeds = 500, 10
exact_curves, ensemble_curves = [], []
for seed in range(seeds):
    post = benchmark_prior(env)
    exact_curves.append(cumulative_regret(
        run_episode(post, env, horizon, seed=seed), env))
    agent = ensemble_agent(30, np.zeros(5), np.eye(5), env.noise_std,
                           seed=1000 + seed)
    ensemble_curves.append(cumulative_regret(
        run_episode(agent, env, horizon, seed=seed), env))

exact = np.mean(exact_curves, axis=0)
ensemble = np.mean(ensemble_curves, axis=0)

print(f"\n{'t':>5}  {'exact TS':>10}  {'ensemble-30':>11}")
for t in (10, 50, 100, 250, 500):
    print(f"{t:>5}  {exact[t - 1]:>10.2f}  {ensemble[t - 1]:>11.2f}")

early = exact[49] / 50
late = (exact[-1] - exact[450]) / 49
print(f"\nexact TS per-step regret: first 50 steps {early:.3f}, "
      f"last 50 steps {late:.3f} (ratio {late / early:.3f})")
print(f"final regret ratio ensemble/exact: {ensemble[-1] / exact[-1]:.2f}")

try:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.figure(figsize=(6, 4))
    plt.plot(exact, label="exact Thompson sampling")
    plt.plot(ensemble, label="ensemble sampling (M=30)")
    plt.xlabel("step")
    plt.ylabel("cumulative regret")
    plt.legend()
    plt.tight_layout()
    plt.savefig("demo_bandit_regret.png", dpi=120)
    print("wrote demo_bandit_regret.png")
except ImportError:
    pass
