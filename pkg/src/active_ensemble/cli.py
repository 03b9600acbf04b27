"""Command-line interface.

Subcommands: `run` (one experiment seed), `bandit` (regret benchmark CSV),
`ssl-pretrain` (train and save a frozen encoder), `serve` (annotation
service), `report` (summary CSV across per-seed metrics files).
"""

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import bandit as bandit_mod
from . import data, pretrain
from .config import ConfigError, build_dataset, config_from_dict
from .loop import ExperimentEngine


def _load_config_with_overrides(path, overrides):
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        target = doc
        parts = key.split(".")
        for part in parts[:-1]:
            target = target.setdefault(part, {})
        target[parts[-1]] = value
    return config_from_dict(doc)


def cmd_run(args):
    from .loop import SimulatedOracle

    overrides = list(args.set or [])
    if args.strategy:
        overrides.append(f"strategy={args.strategy}")
    config = _load_config_with_overrides(args.config, overrides)
    dataset = build_dataset(config.dataset)
    if args.resume and os.path.exists(args.resume):
        engine = ExperimentEngine.load(args.resume, dataset)
        print(f"resumed from {args.resume} at round {engine.pools.round}")
    else:
        engine = ExperimentEngine(dataset, config, seed=args.seed)
        engine.initialize()
        if args.resume:
            engine.checkpoint(args.resume)
    oracle = SimulatedOracle(dataset.y_train.copy())
    for record in engine.metrics:
        print(f"round {record['round']}: n_labeled={record['n_labeled']} "
              f"accuracy={record['test_accuracy']:.4f}")
    while engine.pending is not None:
        record = engine.submit_labels(oracle.label(engine.pending.indices))
        if args.resume:
            engine.checkpoint(args.resume)
        print(f"round {record['round']}: n_labeled={record['n_labeled']} "
              f"accuracy={record['test_accuracy']:.4f}")
    data.write_metrics(engine.metrics, args.out)
    print(f"wrote {len(engine.metrics)} records to {args.out}")


def cmd_bandit(args):
    env = bandit_mod.make_benchmark_env()
    rows = []
    exact_curves, ensemble_curves = [], []
    for seed in range(args.seeds):
        post = bandit_mod.benchmark_prior(env)
        exact = bandit_mod.cumulative_regret(
            bandit_mod.run_episode(post, env, args.horizon, seed=seed), env)
        agent = bandit_mod.ensemble_agent(
            args.ensemble_size, np.zeros(env.theta.size),
            np.eye(env.theta.size), env.noise_std, seed=10_000 + seed)
        ens = bandit_mod.cumulative_regret(

            bandit_mod.run_episode(agent, env, args.horizon, seed=seed), env)
        exact_curves.append(exact)
        ensemble_curves.append(ens)
        for t in range(args.horizon):
            rows.append((str(seed), t + 1, exact[t], ens[t]))
    exact_mean = np.mean(exact_curves, axis=0)
    ens_mean = np.mean(ensemble_curves, axis=0)
    for t in range(args.horizon):
        rows.append(("mean", t + 1, exact_mean[t], ens_mean[t]))
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["seed", "t", "regret_exact_ts",
                         f"regret_ensemble_{args.ensemble_size}"])
        for row in rows:
            writer.writerow([row[0], row[1], f"{row[2]:.6f}", f"{row[3]:.6f}"])
    print(f"wrote regret curves for {args.seeds} seeds to {args.out}")
    print(f"final mean regret: exact={exact_mean[-1]:.2f} "
          f"ensemble={ens_mean[-1]:.2f}")


def cmd_ssl_pretrain(args):
    config = _load_config_with_overrides(args.config, args.set)
    if config.ssl is None:
        raise ConfigError("config has no ssl section")
    dataset = build_dataset(config.dataset)
    if dataset.image_shape is None:
        raise ConfigError("ssl pre-training needs image-shaped data")
    ssl = config.ssl
    rng = np.random.default_rng([args.seed, 3])
    pool = dataset.x_train
    if ssl.pool_size < pool.shape[0]:
        pool = pool[rng.choice(pool.shape[0], ssl.pool_size, replace=False)]
    head = pretrain.init_encoder_head(
        pool.shape[1], ssl.encoder_widths, ssl.projector_widths,
        activation=config.model.activation, seed=[args.seed, 3, 1])
    aug = pretrain.AugmentationConfig(
        crop_pad=ssl.crop_pad, crop_prob=ssl.crop_prob,
        flip_prob=ssl.flip_prob, noise_std=ssl.noise_std)
    head, losses = pretrain.pretrain(
        head, pool, dataset.image_shape, epochs=ssl.epochs, aug=aug,
        batch_size=ssl.batch_size, epsilon=ssl.epsilon,
        learning_rate=ssl.learning_rate, seed=[args.seed, 3, 2])
    pretrain.save_encoder(head, args.out, frozen=True)
    print(f"pretrained {ssl.epochs} epochs on {pool.shape[0]} samples; "
          f"loss {losses[0]:.4f} -> {losses[-1]:.4f}; saved {args.out}")


def cmd_serve(args):
    from .service import serve

    port = int(os.environ.get("ACTIVE_ENSEMBLE_PORT", args.port))
    checkpoint_dir = os.environ.get("ACTIVE_ENSEMBLE_CHECKPOINT_DIR",
                                    args.checkpoint_dir)
    serve(config_path=args.config, host=args.host, port=port,
          checkpoint_dir=checkpoint_dir, static_dir=args.static_dir)


def cmd_report(args):
    runs = [data.read_metrics(path) for path in args.metrics]
    lengths = {len(run) for run in runs}
    if len(lengths) != 1:
        raise SystemExit("metrics files cover different numbers of rounds")
    data.write_summary_csv(runs, args.out)
    accs = np.array([run[-1]["test_accuracy"] for run in runs])
    print(f"wrote summary for {len(runs)} runs to {args.out}; "
          f"final accuracy {accs.mean():.4f} +- {accs.std(ddof=0):.4f}")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="active-ensemble",
        description="Pool-based active learning with shared-prior ensembles")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one experiment seed")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--seed", type=int, required=True)
    p_run.add_argument("--strategy", default=None,
                       help="override the config strategy")
    p_run.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override any config field, e.g. schedule.rounds=2")
    p_run.add_argument("--out", default="metrics.ndjson")
    p_run.add_argument("--resume", default=None,
                       help="checkpoint path; written per round, resumed if present")
    p_run.set_defaults(func=cmd_run)

    p_bandit = sub.add_parser("bandit", help="regret benchmark to CSV")
    p_bandit.add_argument("--horizon", type=int, default=500)
    p_bandit.add_argument("--seeds", type=int, default=20)
    p_bandit.add_argument("--ensemble-size", type=int, default=30)
    p_bandit.add_argument("--out", default="regret.csv")
    p_bandit.set_defaults(func=cmd_bandit)

    p_ssl = sub.add_parser("ssl-pretrain", help="train and save a frozen encoder")
    p_ssl.add_argument("--config", required=True)
    p_ssl.add_argument("--seed", type=int, default=0)
    p_ssl.add_argument("--set", action="append", metavar="KEY=VALUE")
    p_ssl.add_argument("--out", default="encoder.npz")
    p_ssl.set_defaults(func=cmd_ssl_pretrain)

    p_serve = sub.add_parser("serve", help="start the annotation service")
    p_serve.add_argument("--config", default=None,
                         help="optional config; creates a session at startup")
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8000)
    p_serve.add_argument("--checkpoint-dir", default="checkpoints")
    p_serve.add_argument("--static-dir", default=None)
    p_serve.set_defaults(func=cmd_serve)

    p_report = sub.add_parser("report", help="summarize per-seed metrics files")
    p_report.add_argument("--metrics", nargs="+", required=True)
    p_report.add_argument("--out", default="summary.csv")
    p_report.set_defaults(func=cmd_report)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
