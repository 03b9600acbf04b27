"""Experiment configuration: JSON schema, validation, dataset factory.

Configs are plain JSON documents.  Validation is strict: unknown keys are
rejected by name, enums list their allowed values, and ranges are checked
field by field so a typo fails loudly before any compute starts.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from . import data
from .acquisition import STRATEGIES
from .ensemble import MODE_SHARED, MODES


class ConfigError(ValueError):
    pass


def _require_keys(section: dict, allowed: set, context: str):
    for key in section:
        if key not in allowed:
            raise ConfigError(
                f"unknown field {context}.{key!r}; allowed: {sorted(allowed)}")


def _positive(value, context):
    if not isinstance(value, (int, float)) or value <= 0:
        raise ConfigError(f"{context} must be positive, got {value!r}")
    return value


@dataclass(frozen=True)
class ModelConfig:
    hidden_widths: tuple = (64,)
    activation: str = "tanh"
    dropout_rate: float = 0.0


@dataclass(frozen=True)
class EnsembleConfig:
    n_members: int = 5
    mode: str = MODE_SHARED
    prior_mean: float = 0.0
    prior_variance: float | None = None   # None: Xavier-scaled from the spec
    anchor_coefficient: float = 1e-4
    redraw_each_round: bool = True


@dataclass(frozen=True)
class ScheduleConfig:
    initial_budget: float = 200
    step_budget: float = 100
    rounds: int = 8
    epochs_per_round: int = 100
    batch_size: int = 64
    retrain_mode: str = "scratch"
    incremental_epochs: int = 20
    learning_rate: float = 1e-3

    def resolve(self, pool_size: int):
        """Budgets below 1 are fractions of the pool."""
        initial = self.initial_budget
        step = self.step_budget
        initial = int(round(initial * pool_size)) if initial < 1 else int(initial)
        step = int(round(step * pool_size)) if step < 1 else int(step)
        if initial < 1 or (self.rounds > 0 and step < 1):
            raise ConfigError("resolved budgets must be at least 1 sample")
        if initial + self.rounds * step > pool_size:
            raise ConfigError(
                f"schedule needs {initial + self.rounds * step} samples "
                f"but the pool has {pool_size}")
        return initial, step


@dataclass(frozen=True)
class SslConfig:
    pool_size: int = 5000
    epochs: int = 20
    batch_size: int = 128
    encoder_widths: tuple = (256, 128)
    projector_widths: tuple = (128, 16)
    epsilon: float = 1e-5
    learning_rate: float = 1e-3
    crop_pad: int = 2
    crop_prob: float = 1.0
    flip_prob: float = 0.0
    noise_std: float = 0.05
    head_widths: tuple = (64,)


@dataclass(frozen=True)
class DatasetConfig:
    name: str
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetConfig
    model: ModelConfig = ModelConfig()
    ensemble: EnsembleConfig = EnsembleConfig()
    schedule: ScheduleConfig = ScheduleConfig()
    strategy: str = "vr"
    oracle: str = "simulated"
    ssl: SslConfig | None = None
    seeds: tuple = (0,)


_DATASET_FIELDS = {
    "blobs": {"classes", "dim", "center_scale", "std", "samples_per_class", "seed"},
    "digits": {"n_train", "n_test", "image_size", "seed", "rotation_deg",
               "shift_frac", "scale_jitter", "blur_max", "noise_std"},
    "mnist": {"dir"},
}


def _parse_dataset(section: dict) -> DatasetConfig:
    _require_keys(section, {"name", *{k for v in _DATASET_FIELDS.values() for k in v}},
                  "dataset")
    name = section.get("name")
    if name not in _DATASET_FIELDS:
        raise ConfigError(
            f"dataset.name must be one of {sorted(_DATASET_FIELDS)}, got {name!r}")
    params = {k: v for k, v in section.items() if k != "name"}
    _require_keys(params, _DATASET_FIELDS[name], "dataset")
    for key in ("n_train", "n_test", "samples_per_class", "classes", "dim"):
        if key in params:
            _positive(params[key], f"dataset.{key}")
    return DatasetConfig(name=name, params=params)


def _parse_model(section: dict) -> ModelConfig:
    _require_keys(section, {"hidden_widths", "activation", "dropout_rate"}, "model")
    cfg = ModelConfig(
        hidden_widths=tuple(section.get("hidden_widths", (64,))),
        activation=section.get("activation", "tanh"),
        dropout_rate=float(section.get("dropout_rate", 0.0)))
    if cfg.activation not in ("tanh", "relu"):
        raise ConfigError(
            f"model.activation must be one of ['relu', 'tanh'], got {cfg.activation!r}")
    if not all(isinstance(w, int) and w > 0 for w in cfg.hidden_widths):
        raise ConfigError("model.hidden_widths must be positive integers")
    if not (0 <= cfg.dropout_rate < 1):
        raise ConfigError("model.dropout_rate must be in [0, 1)")
    return cfg


def _parse_ensemble(section: dict) -> EnsembleConfig:
    allowed = {"n_members", "mode", "prior_mean", "prior_variance",
               "anchor_coefficient", "redraw_each_round"}
    _require_keys(section, allowed, "ensemble")
    cfg = EnsembleConfig(
        n_members=int(section.get("n_members", 5)),
        mode=section.get("mode", MODE_SHARED),
        prior_mean=float(section.get("prior_mean", 0.0)),
        prior_variance=section.get("prior_variance"),
        anchor_coefficient=float(section.get("anchor_coefficient", 1e-4)),
        redraw_each_round=bool(section.get("redraw_each_round", True)))
    if cfg.n_members < 1:
        raise ConfigError("ensemble.n_members must be at least 1")
    if cfg.mode not in MODES:
        raise ConfigError(f"ensemble.mode must be one of {sorted(MODES)}, "
                          f"got {cfg.mode!r}")
    if cfg.prior_variance is not None:
        _positive(cfg.prior_variance, "ensemble.prior_variance")
    if cfg.anchor_coefficient < 0:
        raise ConfigError("ensemble.anchor_coefficient must be nonnegative")
    return cfg


def _parse_schedule(section: dict) -> ScheduleConfig:
    allowed = {"initial_budget", "step_budget", "rounds", "epochs_per_round",
               "batch_size", "retrain_mode", "incremental_epochs", "learning_rate"}
    _require_keys(section, allowed, "schedule")
    cfg = ScheduleConfig(
        initial_budget=section.get("initial_budget", 200),
        step_budget=section.get("step_budget", 100),
        rounds=int(section.get("rounds", 8)),
        epochs_per_round=int(section.get("epochs_per_round", 100)),
        batch_size=int(section.get("batch_size", 64)),
        retrain_mode=section.get("retrain_mode", "scratch"),
        incremental_epochs=int(section.get("incremental_epochs", 20)),
        learning_rate=float(section.get("learning_rate", 1e-3)))
    _positive(cfg.initial_budget, "schedule.initial_budget")
    if cfg.rounds < 0:
        raise ConfigError("schedule.rounds must be nonnegative")
    if cfg.rounds > 0:
        _positive(cfg.step_budget, "schedule.step_budget")
    if cfg.retrain_mode not in ("scratch", "incremental"):
        raise ConfigError(
            "schedule.retrain_mode must be one of ['incremental', 'scratch'], "
            f"got {cfg.retrain_mode!r}")
    for key in ("epochs_per_round", "batch_size", "incremental_epochs"):
        _positive(getattr(cfg, key), f"schedule.{key}")
    return cfg


def _parse_ssl(section: dict) -> SslConfig:
    allowed = {"pool_size", "epochs", "batch_size", "encoder_widths",
               "projector_widths", "epsilon", "learning_rate", "crop_pad",
               "crop_prob", "flip_prob", "noise_std", "head_widths"}
    _require_keys(section, allowed, "ssl")
    defaults = SslConfig()
    cfg = SslConfig(
        pool_size=int(section.get("pool_size", defaults.pool_size)),
        epochs=int(section.get("epochs", defaults.epochs)),
        batch_size=int(section.get("batch_size", defaults.batch_size)),
        encoder_widths=tuple(section.get("encoder_widths", defaults.encoder_widths)),
        projector_widths=tuple(section.get("projector_widths",
                                           defaults.projector_widths)),
        epsilon=float(section.get("epsilon", defaults.epsilon)),
        learning_rate=float(section.get("learning_rate", defaults.learning_rate)),
        crop_pad=int(section.get("crop_pad", defaults.crop_pad)),
        crop_prob=float(section.get("crop_prob", defaults.crop_prob)),
        flip_prob=float(section.get("flip_prob", defaults.flip_prob)),
        noise_std=float(section.get("noise_std", defaults.noise_std)),
        head_widths=tuple(section.get("head_widths", defaults.head_widths)))
    for prob in ("crop_prob", "flip_prob"):
        if not (0.0 <= getattr(cfg, prob) <= 1.0):
            raise ConfigError(f"ssl.{prob} must be in [0, 1]")
    if cfg.projector_widths[-1] < 2:
        raise ConfigError("ssl projector output dimension must be at least 2")
    if cfg.projector_widths[-1] > cfg.batch_size - 1:
        raise ConfigError("ssl batch_size must exceed the projector output dim")
    return cfg


def config_from_dict(doc: dict) -> ExperimentConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a JSON object")
    allowed = {"dataset", "model", "ensemble", "schedule", "strategy",
               "oracle", "ssl", "seeds"}
    _require_keys(doc, allowed, "config")
    if "dataset" not in doc:
        raise ConfigError("config.dataset is required")
    strategy = doc.get("strategy", "vr")
    if strategy not in STRATEGIES:
        raise ConfigError(
            f"strategy must be one of {sorted(STRATEGIES)}, got {strategy!r}")
    oracle = doc.get("oracle", "simulated")
    if oracle not in ("simulated", "live"):
        raise ConfigError(
            f"oracle must be one of ['live', 'simulated'], got {oracle!r}")
    seeds = tuple(doc.get("seeds", (0,)))
    if not seeds or not all(isinstance(s, int) for s in seeds):
        raise ConfigError("seeds must be a nonempty list of integers")
    return ExperimentConfig(
        dataset=_parse_dataset(doc["dataset"]),
        model=_parse_model(doc.get("model", {})),
        ensemble=_parse_ensemble(doc.get("ensemble", {})),
        schedule=_parse_schedule(doc.get("schedule", {})),
        strategy=strategy,
        oracle=oracle,
        ssl=_parse_ssl(doc["ssl"]) if doc.get("ssl") is not None else None,
        seeds=seeds)


def load_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return config_from_dict(doc)


def config_to_dict(cfg: ExperimentConfig) -> dict:
    doc = {
        "dataset": {"name": cfg.dataset.name, **cfg.dataset.params},
        "model": {"hidden_widths": list(cfg.model.hidden_widths),
                  "activation": cfg.model.activation,
                  "dropout_rate": cfg.model.dropout_rate},
        "ensemble": {"n_members": cfg.ensemble.n_members,
                     "mode": cfg.ensemble.mode,
                     "prior_mean": cfg.ensemble.prior_mean,
                     "prior_variance": cfg.ensemble.prior_variance,
                     "anchor_coefficient": cfg.ensemble.anchor_coefficient,
                     "redraw_each_round": cfg.ensemble.redraw_each_round},
        "schedule": {"initial_budget": cfg.schedule.initial_budget,
                     "step_budget": cfg.schedule.step_budget,
                     "rounds": cfg.schedule.rounds,
                     "epochs_per_round": cfg.schedule.epochs_per_round,
                     "batch_size": cfg.schedule.batch_size,
                     "retrain_mode": cfg.schedule.retrain_mode,
                     "incremental_epochs": cfg.schedule.incremental_epochs,
                     "learning_rate": cfg.schedule.learning_rate},
        "strategy": cfg.strategy,
        "oracle": cfg.oracle,
        "seeds": list(cfg.seeds),
    }
    if cfg.ssl is not None:
        doc["ssl"] = {"pool_size": cfg.ssl.pool_size, "epochs": cfg.ssl.epochs,
                      "batch_size": cfg.ssl.batch_size,
                      "encoder_widths": list(cfg.ssl.encoder_widths),
                      "projector_widths": list(cfg.ssl.projector_widths),
                      "epsilon": cfg.ssl.epsilon,
                      "learning_rate": cfg.ssl.learning_rate,
                      "crop_pad": cfg.ssl.crop_pad,
                      "crop_prob": cfg.ssl.crop_prob,
                      "flip_prob": cfg.ssl.flip_prob,
                      "noise_std": cfg.ssl.noise_std,
                      "head_widths": list(cfg.ssl.head_widths)}
    return doc


def build_dataset(cfg: DatasetConfig) -> data.Dataset:
    """Instantiate the dataset a config names; deterministic for synthetic ones."""
    params = cfg.params
    if cfg.name == "blobs":
        rng = np.random.default_rng(params.get("seed", 0))
        classes = params.get("classes", 4)
        dim = params.get("dim", 8)
        centers = rng.normal(scale=params.get("center_scale", 5.0),
                             size=(classes, dim))
        return data.make_blobs(data.BlobSpec(
            centers=centers, std=params.get("std", 1.0),
            samples_per_class=params.get("samples_per_class", 200),
            seed=params.get("seed", 0)))
    if cfg.name == "digits":
        return data.make_digits(data.DigitsSpec(**params))
    if cfg.name == "mnist":
        import os
        directory = params.get("dir", "data/mnist")
        def pick(stem):
            plain = os.path.join(directory, stem)
            return plain if os.path.exists(plain) else plain + ".gz"
        return data.load_mnist(pick("train-images-idx3-ubyte"),
                               pick("train-labels-idx1-ubyte"),
                               pick("t10k-images-idx3-ubyte"),
                               pick("t10k-labels-idx1-ubyte"))
    raise ConfigError(f"unknown dataset {cfg.name!r}")
