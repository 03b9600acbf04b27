"""A small end-to-end acquisition run on the rendered-digits corpus.

Compares variation-ratio acquisition with a shared-prior ensemble against
random acquisition under the same budget schedule.  Scaled down from the
full desk-scale protocol so it finishes in about a minute; raise the
dataset and schedule numbers to reproduce the full experiment.
"""

from active_ensemble.config import build_dataset, config_from_dict
from active_ensemble.loop import run_experiment

BASE = {
    "dataset": {"name": "digits", "n_train": 3000, "n_test": 800, "seed": 0},
    "model": {"hidden_widths": [64]},
    "ensemble": {"n_members": 5},
    "schedule": {"initial_budget": 100, "step_budget": 50, "rounds": 4,
                 "epochs_per_round": 40, "batch_size": 64},
    "strategy": "vr",
}

dataset = build_dataset(config_from_dict(BASE).dataset)
print(f"pool: {dataset.n_train} unlabeled digits, {dataset.x_test.shape[0]} test")

curves = {}
for strategy in ("vr", "random"):
    config = config_from_dict({**BASE, "strategy": strategy})
    records = run_experiment(dataset, config, seed=0)
    curves[strategy] = records
    print(f"\n{strategy} acquisition:")
    for r in records:
        scores = ("" if r["score_mean"] is None
                  else f"  pool score mean {r['score_mean']:.3f}")
        print(f"  round {r['round']}: {r['n_labeled']:>4} labels -> "
              f"{100 * r['test_accuracy']:.2f}%{scores}")

final_vr = curves["vr"][-1]["test_accuracy"]
final_rand = curves["random"][-1]["test_accuracy"]
print(f"\nsame budget, same model: vr {100 * final_vr:.2f}% vs "
      f"random {100 * final_rand:.2f}% "
      f"({100 * (final_vr - final_rand):+.2f} points)")
