"""The acquisition loop: train, score the pool, select, label, repeat.

The engine is a stepwise state machine so both oracles fit: the simulated
oracle drives it to completion in-process, while the annotation service
holds it at `pending_batch` until a human submits labels.  All stochastic
choices derive from (master seed, round, purpose) tuples, which makes runs
bit-reproducible and lets a checkpoint resume exactly where it stopped.
"""

import json
import time
from dataclasses import dataclass, replace

import numpy as np

from . import acquisition, ensemble, pretrain
from .config import ExperimentConfig, build_dataset, config_from_dict, config_to_dict
from .data import Dataset
from .ensemble import EnsembleModel, JointTrainConfig, SharedPrior, TrainState
from .nn import NetworkSpec, AdamState

CHECKPOINT_VERSION = 1

# purpose tags for derived seeds
_SEED_POOLS = 0
_SEED_TRAIN = 1
_SEED_SELECT = 2
_SEED_SSL = 3
_SEED_PHASE1 = 4


@dataclass
class PoolState:
    """Partition of the training indices into labeled and unlabeled sets."""

    n_total: int
    labeled: np.ndarray
    unlabeled: np.ndarray
    round: int = 0

    def check(self):
        union = np.union1d(self.labeled, self.unlabeled)
        if union.size != self.n_total or self.labeled.size + self.unlabeled.size != self.n_total:
            raise AssertionError("pools must partition the index range")
        if np.intersect1d(self.labeled, self.unlabeled).size:
            raise AssertionError("pools overlap")


class SimulatedOracle:
    """Ground-truth lookup oracle."""

    def __init__(self, labels: np.ndarray):
        self._labels = labels

    def label(self, indices) -> np.ndarray:
        return self._labels[np.asarray(indices, dtype=int)]


def init_pools(dataset: Dataset, initial_budget: int, seed) -> PoolState:
    """Class-balanced initial labeled set; the remainder is drawn uniformly."""
    y = dataset.y_train
    n = y.size
    rng = np.random.default_rng([seed, _SEED_POOLS])
    per_class = initial_budget // dataset.n_classes
    chosen = []
    for cls in range(dataset.n_classes):
        rows = np.flatnonzero(y == cls)
        if rows.size < per_class:
            raise ValueError(
                f"class {cls} has {rows.size} samples, fewer than its "
                f"balanced share of {per_class}")
        chosen.extend(rng.choice(rows, size=per_class, replace=False))
    remainder = initial_budget - per_class * dataset.n_classes
    if remainder:
        rest = np.setdiff1d(np.arange(n), np.array(chosen, dtype=int))
        chosen.extend(rng.choice(rest, size=remainder, replace=False))
    labeled = np.array(sorted(chosen), dtype=int)
    unlabeled = np.setdiff1d(np.arange(n), labeled)
    return PoolState(n_total=n, labeled=labeled, unlabeled=unlabeled, round=0)


class ExperimentEngine:
    """One active-learning experiment bound to a dataset, a config, and a seed.

    Lifecycle: initialize() trains on the initial budget and selects the first
    batch; submit_labels() ingests oracle labels, retrains, and selects the
    next batch until the schedule is exhausted.  `pending` is None once done.
    """

    def __init__(self, dataset: Dataset, config: ExperimentConfig, seed: int):
        self.dataset = dataset
        self.config = config
        self.seed = int(seed)
        self.initial_budget, self.step_budget = config.schedule.resolve(
            dataset.n_train)
        self.pools: PoolState | None = None
        self.model: EnsembleModel | None = None
        self.train_state: TrainState | None = None
        self.epochs_former = 0
        self.metrics: list = []
        self.pending: acquisition.SelectionResult | None = None
        self.encoder = None
        self._inputs_train = dataset.x_train
        self._inputs_test = dataset.x_test
        self._started = False

    # -- construction helpers -------------------------------------------------

    def _network_spec(self) -> NetworkSpec:
        input_dim = self._inputs_train.shape[1]
        return NetworkSpec(
            layer_widths=(input_dim, *self.config.model.hidden_widths,
                          self.dataset.n_classes),
            activation=self.config.model.activation,
            dropout_rate=self.config.model.dropout_rate)

    def _prior(self, spec: NetworkSpec) -> SharedPrior:
        ens = self.config.ensemble
        if ens.prior_variance is None:
            return replace(ensemble.xavier_scaled_prior(spec), mean=ens.prior_mean)
        return SharedPrior(mean=ens.prior_mean, variance=ens.prior_variance)

    def _train_config(self, epochs: int) -> JointTrainConfig:
        sched = self.config.schedule
        return JointTrainConfig(
            epochs=epochs, batch_size=sched.batch_size,
            anchor_coefficient=self.config.ensemble.anchor_coefficient,
            learning_rate=sched.learning_rate)

    def _maybe_pretrain(self):
        ssl = self.config.ssl
        if ssl is None:
            return
        if self.dataset.image_shape is None:
            raise ValueError("SSL pre-training needs image-shaped data")
        rng = np.random.default_rng([self.seed, _SEED_SSL])
        pool = self.dataset.x_train
        if ssl.pool_size < pool.shape[0]:
            rows = rng.choice(pool.shape[0], size=ssl.pool_size, replace=False)
            pool = pool[rows]
        head = pretrain.init_encoder_head(
            pool.shape[1], ssl.encoder_widths, ssl.projector_widths,
            activation=self.config.model.activation,
            seed=[self.seed, _SEED_SSL, 1])
        aug = pretrain.AugmentationConfig(
            crop_pad=ssl.crop_pad, crop_prob=ssl.crop_prob,
            flip_prob=ssl.flip_prob, noise_std=ssl.noise_std)
        head, _ = pretrain.pretrain(
            head, pool, self.dataset.image_shape, epochs=ssl.epochs, aug=aug,
            batch_size=ssl.batch_size, epsilon=ssl.epsilon,
            learning_rate=ssl.learning_rate, seed=[self.seed, _SEED_SSL, 2])
        self._attach_encoder(head)

    def _attach_encoder(self, head):
        """Freeze the encoder: the model trains on its embeddings from now on."""
        self.encoder = head
        self._inputs_train = pretrain.encoder_embed(head, self.dataset.x_train)
        self._inputs_test = pretrain.encoder_embed(head, self.dataset.x_test)

    # -- the round machinery ---------------------------------------------------

    def initialize(self):
        """Round 0: pools, optional pre-training, first fit, first selection."""
        if self._started:
            raise RuntimeError("engine already initialized")
        self._started = True
        self._maybe_pretrain()
        self.pools = init_pools(self.dataset, self.initial_budget, self.seed)
        spec = self._network_spec()
        if self.config.ssl is not None:
            hidden = self.config.ssl.head_widths
            spec = NetworkSpec(
                layer_widths=(self._inputs_train.shape[1], *hidden,
                              self.dataset.n_classes),
                activation=self.config.model.activation,
                dropout_rate=self.config.model.dropout_rate)
        self.model = ensemble.init_ensemble(
            spec, self.config.ensemble.n_members, self._prior(spec),
            self.config.ensemble.mode, seed=[self.seed, _SEED_TRAIN, 0])
        self._fit_round()
        self._finish_round()
        return self

    def submit_labels(self, labels) -> dict:
        """Ingest oracle labels for the pending batch, retrain, select next."""
        if self.pending is None:
            raise RuntimeError("no batch awaiting labels")
        labels = np.asarray(labels, dtype=int)
        indices = self.pending.indices
        if labels.shape != indices.shape:
            raise ValueError(f"expected {indices.size} labels")
        if labels.size and (labels.min() < 0 or labels.max() >= self.dataset.n_classes):
            raise ValueError(f"labels must lie in [0, {self.dataset.n_classes})")
        self.dataset.y_train[indices] = labels
        self.pools = PoolState(
            n_total=self.pools.n_total,
            labeled=np.union1d(self.pools.labeled, indices),
            unlabeled=np.setdiff1d(self.pools.unlabeled, indices),
            round=self.pools.round + 1)
        self.pools.check()
        self.pending = None
        self._fit_round(new_indices=indices)
        self._finish_round()
        return self.metrics[-1]

    def _fit_round(self, new_indices=None):
        sched = self.config.schedule
        t = self.pools.round
        x = self._inputs_train[self.pools.labeled]
        y = self.dataset.y_train[self.pools.labeled]
        started = time.perf_counter()
        if sched.retrain_mode == "scratch":
            cfg = self._train_config(sched.epochs_per_round)
            self.model, self.train_state, _ = ensemble.train(
                self.model, x, y, cfg, mode="scratch",
                seed=[self.seed, t, _SEED_TRAIN],
                redraw=self.config.ensemble.redraw_each_round)
        elif t == 0:
            cfg = self._train_config(sched.incremental_epochs)
            self.model, self.train_state, _ = ensemble.train(
                self.model, x, y, cfg, mode="scratch",
                seed=[self.seed, t, _SEED_TRAIN],
                redraw=self.config.ensemble.redraw_each_round)
            self.epochs_former = sched.incremental_epochs
        else:
            self.model, self.train_state = incremental_round(
                self.model, self.train_state,
                self._inputs_train[new_indices], self.dataset.y_train[new_indices],
                x, y, self.epochs_former, self._train_config(0),
                sched.incremental_epochs, seed_base=[self.seed, t])
            self.epochs_former += sched.incremental_epochs
        self._train_seconds = time.perf_counter() - started

    def _finish_round(self):
        t = self.pools.round
        accuracy = self._evaluate()
        record = {
            "round": t,
            "n_labeled": int(self.pools.labeled.size),
            "labeled_fraction": float(self.pools.labeled.size / self.pools.n_total),
            "test_accuracy": accuracy,
            "score_mean": None,
            "score_max": None,
            "train_seconds": round(self._train_seconds, 4),
            "select_seconds": None,
            "seed": self.seed,
            "strategy": self.config.strategy,
        }
        if t < self.config.schedule.rounds and self.pools.unlabeled.size:
            started = time.perf_counter()
            selection, pool_scores = self._select()
            record["select_seconds"] = round(time.perf_counter() - started, 4)
            if pool_scores is not None:
                record["score_mean"] = float(np.mean(pool_scores))
                record["score_max"] = float(np.max(pool_scores))
            self.pending = selection
        self.metrics.append(record)

    def _evaluate(self) -> float:
        probs = ensemble.predict_mean(self.model, self._inputs_test)
        return float((probs.argmax(axis=1) == self.dataset.y_test).mean())

    def _select(self):
        """Score the unlabeled pool and pick the round's batch.

        Returns (SelectionResult in dataset indices, pool scores or None).
        """
        strategy = self.config.strategy
        unlabeled = self.pools.unlabeled
        b = min(self.step_budget, unlabeled.size)
        t = self.pools.round
        if strategy == "random":
            sel = acquisition.random_select(unlabeled.size, b,
                                            seed=[self.seed, t, _SEED_SELECT])
            return self._to_dataset_indices(sel), None
        if strategy == "coreset":
            features = self._coreset_features()
            sel = acquisition.kcenter_greedy(features, self.pools.labeled, b)
            return sel, sel.scores
        dist = ensemble.predict_members(self.model, self._inputs_train[unlabeled])
        if strategy == "entropy":
            scores = acquisition.entropy_scores(ensemble.ensemble_mean(dist))
        elif strategy == "bald":
            scores = acquisition.bald_scores(dist)
        elif strategy == "vr":
            scores = acquisition.vr_scores(dist)
        else:
            raise ValueError(f"unknown strategy {strategy!r}")
        sel = acquisition.select_batch(scores, b)
        return self._to_dataset_indices(sel), scores

    def _coreset_features(self) -> np.ndarray:
        if self.encoder is not None:
            return self._inputs_train
        return ensemble.member_embeddings(self.model, self._inputs_train)

    def _to_dataset_indices(self, sel: acquisition.SelectionResult):
        return acquisition.SelectionResult(
            indices=self.pools.unlabeled[sel.indices], scores=sel.scores)

    @property
    def finished(self) -> bool:
        return self._started and self.pending is None

    def run(self, oracle=None) -> list:
        """Drive the loop to completion against an oracle (simulated default)."""
        if oracle is None:
            oracle = SimulatedOracle(self.dataset.y_train.copy())
        if not self._started:
            self.initialize()
        while self.pending is not None:
            self.submit_labels(oracle.label(self.pending.indices))
        return self.metrics

    # -- persistence -----------------------------------------------------------

    def checkpoint(self, path) -> None:
        """Full engine state; resuming reproduces the uninterrupted run."""
        meta = {
            "version": CHECKPOINT_VERSION,
            "kind": "experiment",
            "config": config_to_dict(self.config),
            "seed": self.seed,
            "round": self.pools.round if self.pools is not None else None,
            "epochs_former": self.epochs_former,
            "metrics": self.metrics,
            "started": self._started,
            "pending": None if self.pending is None else {
                "indices": self.pending.indices.tolist(),
                "scores": self.pending.scores.tolist(),
            },
            "has_encoder": self.encoder is not None,
            "encoder_meta": None if self.encoder is None else {
                "layer_widths": list(self.encoder.spec.layer_widths),
                "activation": self.encoder.spec.activation,
                "embed_layer": self.encoder.embed_layer,
            },
            "model_meta": None if self.model is None else {
                "layer_widths": list(self.model.spec.layer_widths),
                "activation": self.model.spec.activation,
                "dropout_rate": self.model.spec.dropout_rate,
                "mode": self.model.mode,
                "prior_mean": self.model.prior.mean,
                "prior_variance": self.model.prior.variance,
            },
            "train_state": None if self.train_state is None else {
                "t": self.train_state.adam.t,
                "learning_rate": self.train_state.adam.learning_rate,
                "beta1": self.train_state.adam.beta1,
                "beta2": self.train_state.adam.beta2,
                "epsilon": self.train_state.adam.epsilon,
                "epochs_done": self.train_state.epochs_done,
            },
        }
        arrays = {
            "meta": np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8),
            "labeled": self.pools.labeled if self.pools is not None else np.zeros(0, dtype=int),
            "unlabeled": self.pools.unlabeled if self.pools is not None else np.zeros(0, dtype=int),
            "y_train": self.dataset.y_train,
        }
        if self.model is not None:
            arrays["members"] = self.model.members
            arrays["anchors"] = self.model.anchors
        if self.train_state is not None:
            arrays["adam_m"] = self.train_state.adam.m
            arrays["adam_v"] = self.train_state.adam.v
        if self.encoder is not None:
            arrays["encoder_params"] = self.encoder.params
        with open(path, "wb") as fh:
            np.savez(fh, **arrays)

    @classmethod
    def load(cls, path, dataset: Dataset | None = None) -> "ExperimentEngine":
        with np.load(path) as payload:
            meta = json.loads(bytes(payload["meta"]).decode())
            if meta.get("version") != CHECKPOINT_VERSION or meta.get("kind") != "experiment":
                raise ValueError("not an experiment checkpoint")
            config = config_from_dict(meta["config"])
            if dataset is None:
                dataset = build_dataset(config.dataset)
            engine = cls(dataset, config, meta["seed"])
            engine._started = meta["started"]
            engine.metrics = meta["metrics"]
            engine.epochs_former = meta["epochs_former"]
            dataset.y_train[...] = payload["y_train"]
            if meta["has_encoder"]:
                em = meta["encoder_meta"]
                spec = NetworkSpec(layer_widths=tuple(em["layer_widths"]),
                                   activation=em["activation"])
                head = pretrain.EncoderHead(spec=spec,
                                            embed_layer=em["embed_layer"],
                                            params=payload["encoder_params"].copy())
                engine._attach_encoder(head)
            if meta["round"] is not None:
                engine.pools = PoolState(
                    n_total=dataset.n_train,
                    labeled=payload["labeled"].copy(),
                    unlabeled=payload["unlabeled"].copy(),
                    round=meta["round"])
            if meta["model_meta"] is not None:
                mm = meta["model_meta"]
                spec = NetworkSpec(layer_widths=tuple(mm["layer_widths"]),
                                   activation=mm["activation"],
                                   dropout_rate=mm["dropout_rate"])
                engine.model = EnsembleModel(
                    spec=spec, mode=mm["mode"],
                    prior=SharedPrior(mm["prior_mean"], mm["prior_variance"]),
                    members=payload["members"].copy(),
                    anchors=payload["anchors"].copy())
            if meta["train_state"] is not None:
                ts = meta["train_state"]
                engine.train_state = TrainState(
                    adam=AdamState(m=payload["adam_m"].copy(),
                                   v=payload["adam_v"].copy(), t=ts["t"],
                                   learning_rate=ts["learning_rate"],
                                   beta1=ts["beta1"], beta2=ts["beta2"],
                                   epsilon=ts["epsilon"]),
                    epochs_done=ts["epochs_done"])
            if meta["pending"] is not None:
                engine.pending = acquisition.SelectionResult(
                    indices=np.array(meta["pending"]["indices"], dtype=int),
                    scores=np.array(meta["pending"]["scores"]))
            return engine


def incremental_round(model, state, x_new, y_new, x_all, y_all, epochs_former,
                      base_config: JointTrainConfig, incremental_epochs: int,
                      seed_base):
    """Two-phase continuation: first the fresh samples catch up to the epochs
    the former samples have already seen, then the full labeled set trains for
    the incremental epoch count.  No re-initialization anywhere."""
    phase1 = replace(base_config, epochs=epochs_former)
    model, state, _ = ensemble.train(
        model, x_new, y_new, phase1, mode="incremental",
        seed=[*seed_base, _SEED_PHASE1], state=state)
    phase2 = replace(base_config, epochs=incremental_epochs)
    model, state, _ = ensemble.train(
        model, x_all, y_all, phase2, mode="incremental",
        seed=[*seed_base, _SEED_TRAIN], state=state)
    return model, state


def run_experiment(dataset: Dataset, config: ExperimentConfig, seed: int,
                   oracle=None) -> list:
    """One full experiment; returns the per-round metrics records."""
    engine = ExperimentEngine(dataset, config, seed)
    return engine.run(oracle)
