"""Shared-prior ensembles trained by joint optimization.

An ensemble holds M identically shaped networks.  In shared-prior mode every
coordinate of every member is drawn from one Gaussian, each member keeps its
own draw as an anchor, and training minimizes the sum of member cross
entropies plus an anchor-tether penalty in a single optimizer.  The classical
independent mode (per-member Xavier initialization, no tether) is the
conventional ensemble baseline.
"""

import json
from dataclasses import dataclass, replace

import numpy as np

from . import nn
from .nn import AdamState, NetworkSpec, adam_init, adam_step, param_count

MODE_SHARED = "shared-prior-joint"
MODE_INDEPENDENT = "independent-classical"
MODES = (MODE_SHARED, MODE_INDEPENDENT)

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class SharedPrior:
    """Isotropic Gaussian over every network coordinate."""

    mean: float = 0.0
    variance: float = 0.01

    def __post_init__(self):
        if self.variance <= 0:
            raise ValueError("prior variance must be positive")


def xavier_scaled_prior(spec: NetworkSpec) -> SharedPrior:
    """Zero-mean prior whose variance is the per-layer Xavier variance
    2/(fan_in+fan_out), averaged over layers."""
    variances = [2.0 / (fi + fo) for fi, fo in spec.layer_dims()]
    return SharedPrior(mean=0.0, variance=float(np.mean(variances)))


@dataclass(frozen=True)
class EnsembleModel:
    """M member parameter vectors plus their frozen initial draws."""

    spec: NetworkSpec
    mode: str
    prior: SharedPrior
    members: np.ndarray   # (m, n_params)
    anchors: np.ndarray   # (m, n_params)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.members.shape != self.anchors.shape:
            raise ValueError("members and anchors must have identical shapes")
        if self.members.ndim != 2 or self.members.shape[0] < 1:
            raise ValueError("need at least one member")
        if self.members.shape[1] != param_count(self.spec):
            raise ValueError("member length does not match the network spec")

    @property
    def n_members(self) -> int:
        return self.members.shape[0]


@dataclass(frozen=True)
class JointTrainConfig:
    epochs: int = 100
    batch_size: int = 64
    anchor_coefficient: float = 1e-4
    learning_rate: float = 1e-3

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")
        if self.anchor_coefficient < 0:
            raise ValueError("anchor coefficient must be nonnegative")


@dataclass(frozen=True)
class TrainState:
    """Optimizer state carried across incremental training phases."""

    adam: AdamState
    epochs_done: int = 0


def init_ensemble(spec: NetworkSpec, n_members: int, prior: SharedPrior,
                  mode: str, seed) -> EnsembleModel:
    """Draw a fresh ensemble; anchors are exact copies of the initial members."""
    if n_members < 1:
        raise ValueError("need at least one member")
    rng = np.random.default_rng(seed)
    p = param_count(spec)
    if mode == MODE_SHARED:
        members = rng.normal(prior.mean, np.sqrt(prior.variance), size=(n_members, p))
    elif mode == MODE_INDEPENDENT:
        members = np.stack([
            nn.xavier_init(spec, rng.integers(2**63)) for _ in range(n_members)])
    else:
        raise ValueError(f"mode must be one of {MODES}")
    return EnsembleModel(spec=spec, mode=mode, prior=prior,
                         members=members, anchors=members.copy())


def joint_loss(model: EnsembleModel, batch: np.ndarray, labels: np.ndarray,
               anchor_coefficient: float):
    """Sum over members of cross-entropy plus the anchor tether.

    loss = sum_i [ CE(theta_i) + lambda * ||theta_i - anchor_i||^2 ]
    The gradient rows decompose per member.  Returns (loss, grads (m, p)).
    """
    grads = np.empty_like(model.members)
    total = 0.0
    for i in range(model.n_members):
        ce, grad = nn.loss_and_grad(model.spec, model.members[i], batch, labels)
        diff = model.members[i] - model.anchors[i]
        total += ce + anchor_coefficient * float(diff @ diff)
        grads[i] = grad + 2.0 * anchor_coefficient * diff
    return total, grads


def train(model: EnsembleModel, x: np.ndarray, y: np.ndarray,
          config: JointTrainConfig, mode: str = "scratch", seed=0,
          state: TrainState | None = None, redraw: bool = True):
    """Train the ensemble on the labeled data.

    scratch mode redraws members from the prior (fresh anchors) unless
    `redraw` is False, then runs `config.epochs` epochs from a fresh
    optimizer.  incremental mode continues from the current members and the
    given optimizer state.  One Adam update is applied to the concatenation
    of all member parameters per minibatch.

    Returns (model, TrainState, per-epoch mean losses).
    """
    if x.shape[0] == 0:
        raise ValueError("labeled set must be nonempty")
    if mode not in ("scratch", "incremental"):
        raise ValueError("mode must be 'scratch' or 'incremental'")
    rng = np.random.default_rng(seed)
    if mode == "scratch":
        if redraw:
            model = init_ensemble(model.spec, model.n_members, model.prior,
                                  model.mode, rng.integers(2**63))
        else:
            rng.integers(2**63)  # keep the stream aligned across redraw settings
            model = replace(model, members=model.anchors.copy())
        state = TrainState(adam=adam_init(
            model.members.size, learning_rate=config.learning_rate))
    elif state is None:
        state = TrainState(adam=adam_init(
            model.members.size, learning_rate=config.learning_rate))

    lam = 0.0 if model.mode == MODE_INDEPENDENT else config.anchor_coefficient
    members = model.members.copy()
    flat = members.reshape(-1)
    adam = state.adam
    n = x.shape[0]
    losses = []
    work = replace(model, members=members)
    for _ in range(config.epochs):
        perm = rng.permutation(n)
        epoch_losses = []
        for start in range(0, n, config.batch_size):
            idx = perm[start:start + config.batch_size]
            loss, grads = joint_loss(work, x[idx], y[idx], lam)
            flat, adam = adam_step(adam, flat, grads.reshape(-1))
            members = flat.reshape(members.shape)
            work = replace(work, members=members)
            epoch_losses.append(loss)
        losses.append(float(np.mean(epoch_losses)))
    new_state = TrainState(adam=adam, epochs_done=state.epochs_done + config.epochs)
    return work, new_state, losses


def predict_members(model: EnsembleModel, x: np.ndarray,
                    batch_size: int = 4096) -> np.ndarray:
    """Member class probabilities, shape (n, m, classes); no dropout."""
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    out = np.empty((n, model.n_members, model.spec.n_classes))
    for start in range(0, n, batch_size):
        stop = min(start + batch_size, n)
        for i in range(model.n_members):
            out[start:stop, i] = nn.predict_proba(
                model.spec, model.members[i], x[start:stop])
    return out


def ensemble_mean(dist: np.ndarray) -> np.ndarray:
    """Arithmetic mean of the member rows: (n, m, c) -> (n, c)."""
    dist = np.asarray(dist, dtype=float)
    if dist.ndim != 3 or dist.shape[1] < 1:
        raise ValueError(f"expected (n, members, classes), got {dist.shape}")
    return dist.mean(axis=1)


def predict_mean(model: EnsembleModel, x: np.ndarray) -> np.ndarray:
    return ensemble_mean(predict_members(model, x))


def member_embeddings(model: EnsembleModel, x: np.ndarray, member: int = 0,
                      batch_size: int = 4096) -> np.ndarray:
    """Penultimate-layer activations of one member, used as core-set features."""
    x = np.asarray(x, dtype=float)
    if model.spec.n_layers == 1:
        return x
    out = np.empty((x.shape[0], model.spec.layer_widths[-2]))
    for start in range(0, x.shape[0], batch_size):
        stop = min(start + batch_size, x.shape[0])
        _, caches = nn.forward_cached(model.spec, model.members[member],
                                      x[start:stop])
        a_last, _ = caches[-1]
        out[start:stop] = a_last
    return out


def save_ensemble(model: EnsembleModel, path) -> None:
    """Checkpoint to a compressed numeric container; round-trips bit-exactly."""
    meta = {
        "version": CHECKPOINT_VERSION,
        "kind": "ensemble",
        "layer_widths": list(model.spec.layer_widths),
        "activation": model.spec.activation,
        "dropout_rate": model.spec.dropout_rate,
        "mode": model.mode,
        "prior_mean": model.prior.mean,
        "prior_variance": model.prior.variance,
    }
    with open(path, "wb") as fh:
        np.savez(fh, meta=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8),
                 members=model.members, anchors=model.anchors)


def load_ensemble(path) -> EnsembleModel:
    with np.load(path) as data:
        meta = json.loads(bytes(data["meta"]).decode())
        if meta.get("version") != CHECKPOINT_VERSION or meta.get("kind") != "ensemble":
            raise ValueError(f"unsupported checkpoint {meta.get('kind')!r} "
                             f"v{meta.get('version')}")
        spec = NetworkSpec(layer_widths=tuple(meta["layer_widths"]),
                           activation=meta["activation"],
                           dropout_rate=meta["dropout_rate"])
        return EnsembleModel(spec=spec, mode=meta["mode"],
                             prior=SharedPrior(meta["prior_mean"],
                                               meta["prior_variance"]),
                             members=data["members"].copy(),
                             anchors=data["anchors"].copy())
