"""Sample-scoring strategies and batch selection for pool-based acquisition.

Score vectors are aligned with the unlabeled pool: entry i scores pool
sample i, higher meaning more valuable to label.  Entropies are in nats.
"""

from dataclasses import dataclass

import numpy as np

STRATEGIES = ("entropy", "bald", "vr", "coreset", "random")


@dataclass(frozen=True)
class SelectionResult:
    """Chosen pool indices in selection order, with their scores."""

    indices: np.ndarray
    scores: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "indices", np.asarray(self.indices, dtype=int))
        object.__setattr__(self, "scores", np.asarray(self.scores, dtype=float))
        if self.indices.shape != self.scores.shape:
            raise ValueError("indices and scores must align")
        if len(np.unique(self.indices)) != self.indices.size:
            raise ValueError("selected indices must be unique")


def _entropy_rows(p: np.ndarray) -> np.ndarray:
    """-sum p ln p per row with the 0 ln 0 := 0 convention."""
    p = np.asarray(p, dtype=float)
    terms = np.where(p > 0.0, p * np.log(np.where(p > 0.0, p, 1.0)), 0.0)
    return -terms.sum(axis=-1)


def entropy_scores(mean_probs: np.ndarray) -> np.ndarray:
    """Predictive entropy of the ensemble-mean distribution, one score per sample."""
    return _entropy_rows(np.asarray(mean_probs, dtype=float))


def bald_scores(dist: np.ndarray) -> np.ndarray:
    """Mutual information between prediction and members.

    dist has shape (n_samples, n_members, n_classes); the score is the entropy
    of the member mean minus the mean of the member entropies.
    """
    dist = np.asarray(dist, dtype=float)
    if dist.ndim != 3:
        raise ValueError(f"expected (n, members, classes), got {dist.shape}")
    mean = dist.mean(axis=1)
    return _entropy_rows(mean) - _entropy_rows(dist).mean(axis=1)


def vr_scores(dist: np.ndarray) -> np.ndarray:
    """Variation ratio 1 - f_m/M, where f_m counts the modal argmax vote.

    Argmax ties within a member's row and modal ties between classes both
    resolve to the lowest class index.
    """
    dist = np.asarray(dist, dtype=float)
    if dist.ndim != 3:
        raise ValueError(f"expected (n, members, classes), got {dist.shape}")
    n, m, c = dist.shape
    votes = dist.argmax(axis=2)
    counts = np.zeros((n, c), dtype=int)
    for j in range(m):
        counts[np.arange(n), votes[:, j]] += 1
    f_m = counts.max(axis=1)
    return 1.0 - f_m / m


def kcenter_greedy(features: np.ndarray, initially_selected, b: int) -> SelectionResult:
    """Greedy k-center selection: repeatedly take the point farthest from the
    selected set (Euclidean), tie-broken by lowest index.

    Scores are each pick's distance to its nearest selected point at pick time.
    """
    features = np.asarray(features, dtype=float)
    selected = np.asarray(initially_selected, dtype=int)
    if selected.size == 0:
        raise ValueError("initially_selected must be nonempty")
    if b < 1:
        raise ValueError("b must be at least 1")
    n = features.shape[0]
    min_dist = _distances_to(features, features[selected]).min(axis=1)
    taken = np.zeros(n, dtype=bool)
    taken[selected] = True
    picks, scores = [], []
    for _ in range(min(b, int(n - taken.sum()))):
        masked = np.where(taken, -np.inf, min_dist)
        pick = int(np.argmax(masked))
        picks.append(pick)
        scores.append(float(min_dist[pick]))
        taken[pick] = True
        min_dist = np.minimum(min_dist, _distances_to(features, features[[pick]])[:, 0])
    return SelectionResult(indices=np.array(picks, dtype=int),
                           scores=np.array(scores))


def _distances_to(x: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """Euclidean distances (n, k) from each row of x to each center."""
    sq = (np.sum(x * x, axis=1)[:, None] + np.sum(centers * centers, axis=1)[None, :]
          - 2.0 * x @ centers.T)
    return np.sqrt(np.maximum(sq, 0.0))


def select_batch(scores: np.ndarray, b: int) -> SelectionResult:
    """Top-b pool indices by descending score; ties broken by ascending index."""
    if b < 1:
        raise ValueError("b must be at least 1")
    scores = np.asarray(scores, dtype=float)
    if not np.all(np.isfinite(scores)):
        raise ValueError("scores must be finite")
    order = np.argsort(-scores, kind="stable")[:min(b, scores.size)]
    return SelectionResult(indices=order, scores=scores[order])


def random_select(pool_size: int, b: int, seed) -> SelectionResult:
    """Uniform sample without replacement; scores are zero placeholders."""
    if b < 1:
        raise ValueError("b must be at least 1")
    if b > pool_size:
        raise ValueError(f"cannot draw {b} from a pool of {pool_size}")
    rng = np.random.default_rng(seed)
    indices = rng.choice(pool_size, size=b, replace=False)
    return SelectionResult(indices=indices, scores=np.zeros(b))
