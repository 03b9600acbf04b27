"""Brute-force reference implementations used to cross-check the library.

Everything here is written with plain loops and stdlib math, independent of
the vectorized code paths under test.
"""

import math
from collections import Counter

import numpy as np


def brute_entropy(row):
    total = 0.0
    for p in row:
        if p > 0.0:
            total -= p * math.log(p)
    return total


def brute_bald(member_rows):
    m = len(member_rows)
    c = len(member_rows[0])
    mean = [sum(row[j] for row in member_rows) / m for j in range(c)]
    avg_h = sum(brute_entropy(row) for row in member_rows) / m
    return brute_entropy(mean) - avg_h


def brute_vr(member_rows):
    votes = []
    for row in member_rows:
        best, best_p = 0, row[0]
        for j, p in enumerate(row):
            if p > best_p:
                best, best_p = j, p
        votes.append(best)
    counts = Counter(votes)
    f_m = max(counts.values())
    return 1.0 - f_m / len(member_rows)


def brute_kcenter_step(features, selected):
    """Exhaustive argmax over candidates of the min distance to the selected set."""
    best_idx, best_dist = None, -1.0
    for i in range(len(features)):
        if i in selected:
            continue
        nearest = min(
            math.dist(list(features[i]), list(features[j])) for j in selected)
        if nearest > best_dist:
            best_idx, best_dist = i, nearest
    return best_idx, best_dist


def random_predictive_distribution(rng, n, m, c):
    """(n, m, c) stack of Dirichlet rows, a generic member-probability tensor."""
    return rng.dirichlet(np.ones(c), size=(n, m))
