"""What the acquisition functions actually measure.

Builds a few synthetic member-probability tensors and walks through entropy,
BALD, and variation ratio side by side, then shows k-center greedy picking
spread-out points on a 2-d cloud.
"""

import numpy as np

from active_ensemble.acquisition import (
    bald_scores,
    entropy_scores,
    kcenter_greedy,
    select_batch,
    vr_scores,
)
from active_ensemble.ensemble import ensemble_mean

cases = {
    "confident + unanimous": [[0.97, 0.02, 0.01]] * 5,
    "uncertain + unanimous": [[0.4, 0.35, 0.25]] * 5,
    "confident + split": [[0.9, 0.05, 0.05], [0.9, 0.05, 0.05],
                          [0.05, 0.9, 0.05], [0.05, 0.05, 0.9],
                          [0.05, 0.9, 0.05]],
}

dist = np.array(list(cases.values()))
mean = ensemble_mean(dist)
entropy = entropy_scores(mean)
bald = bald_scores(dist)
vr = vr_scores(dist)

print(f"{'case':<24} {'entropy':>8} {'BALD':>8} {'VR':>6}")
for i, name in enumerate(cases):
    print(f"{name:<24} {entropy[i]:>8.3f} {bald[i]:>8.3f} {vr[i]:>6.2f}")

print("""
Entropy rewards any flat mean; BALD and VR fire only on *disagreement*:
the members of the split case are individually confident, so its mean is
flat (high entropy) while the member entropies stay low (high BALD), and
the argmax votes scatter (high VR).
""")

rng = np.random.default_rng(0)
points = rng.normal(size=(40, 2))
picks = kcenter_greedy(points, initially_selected=[0], b=5)
print("k-center greedy picks (index: distance to nearest selected at pick):")
for idx, score in zip(picks.indices, picks.scores):
    print(f"  {idx:>3}: {score:.3f}")

top = select_batch(vr, b=2)
print(f"\ntop-2 by VR: indices {top.indices.tolist()} (scores {top.scores.tolist()})")
