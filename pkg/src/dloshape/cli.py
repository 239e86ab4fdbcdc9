"""dloctl: command-line front end over the library.

Exit codes: 0 success, 2 configuration error, 3 simulation/training
divergence.  DLOCTL_THREADS caps sweep parallelism (sweeps run their
configurations in separate processes when it is greater than 1).
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from .data import collect, relabel, split
from .dataset_io import load_dataset, save_dataset
from .errors import (
    ConfigurationError,
    DatasetFormatError,
    DimensionError,
    EvaluationError,
    ModeInfeasibleError,
    RejectedCommandError,
    SimulationDivergedError,
    TrainingDivergedError,
)
from .evaluate import (
    BaselineRunner,
    PolicyRunner,
    emit_artifacts,
    make_goal_sequence,
    run_eval,
    sweep_alpha,
    sweep_augmentation,
)
from .policy_file import load_policy, save_policy
from .servo import ServoConfig
from .sim import SimConfig
from .td3bc import TrainConfig, train

log = logging.getLogger("dloctl")

CONFIG_ERRORS = (
    ConfigurationError, RejectedCommandError, DimensionError,
    DatasetFormatError, ModeInfeasibleError, ValueError,
)
DIVERGENCE_ERRORS = (SimulationDivergedError, TrainingDivergedError, EvaluationError)


def _add_collect(sub):
    p = sub.add_parser("collect", help="run the simulator and record episodes")
    p.add_argument("--episodes", type=int, required=True)
    p.add_argument("--material", choices=("soft", "elastic"), default="soft")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--test-split", type=int, default=0,
                   help="also write the last N episodes to OUT-test")


def _add_augment(sub):
    p = sub.add_parser("augment", help="goal-relabel a dataset")
    p.add_argument("--in", dest="src", required=True)
    p.add_argument("--mode", choices=("intra", "inter", "mixed"), required=True)
    p.add_argument("--ratio", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)


def _add_train(sub):
    p = sub.add_parser("train", help="offline TD3+BC on a dataset directory")
    p.add_argument("--data", required=True)
    p.add_argument("--alpha", type=float, default=2.5)
    p.add_argument("--gamma", type=float, default=0.95)
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--batch-size", type=int, default=256)
    p.add_argument("--dtype", choices=("float64", "float32"), default="float64")
    p.add_argument("--algo", choices=("td3bc", "bc"), default="td3bc")
    p.add_argument("--out", required=True)


def _add_eval(sub):
    p = sub.add_parser("eval", help="closed-loop evaluation on the 8-shape sequence")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--policy", help="policy file to evaluate")
    group.add_argument("--baseline", help="baseline spec, e.g. k=1")
    p.add_argument("--material", choices=("soft", "elastic"), default="soft")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--shuffle-goals", action="store_true")
    p.add_argument("--out", required=True)


def _add_sweeps(sub):
    p = sub.add_parser("sweep-aug", help="augmentation-ratio sweep")
    p.add_argument("--data", required=True)
    p.add_argument("--ratios", default="1,2,4,6,8")
    p.add_argument("--alpha", type=float, default=2.5)
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--material", choices=("soft", "elastic"), default="soft")
    p.add_argument("--batch-size", type=int, default=256)
    p.add_argument("--dtype", choices=("float64", "float32"), default="float64")
    p.add_argument("--out", required=True)

    p = sub.add_parser("sweep-alpha", help="BC-regularization sweep")
    p.add_argument("--data", required=True)
    p.add_argument("--alphas", default="1.0,2.5,3.0")
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--material", choices=("soft", "elastic"), default="soft")
    p.add_argument("--batch-size", type=int, default=256)
    p.add_argument("--dtype", choices=("float64", "float32"), default="float64")
    p.add_argument("--out", required=True)


def _add_goals(sub):
    p = sub.add_parser("goals", help="emit the scripted goal sequence as JSON")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--material", choices=("soft", "elastic"), default="soft")
    p.add_argument("--out", required=True)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dloctl", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_collect(sub)
    _add_augment(sub)
    _add_train(sub)
    _add_eval(sub)
    _add_sweeps(sub)
    _add_goals(sub)
    return parser


def _train_config(args, total_steps=None) -> TrainConfig:
    return TrainConfig(
        alpha=getattr(args, "alpha", 2.5),
        gamma=getattr(args, "gamma", 0.95),
        total_steps=total_steps if total_steps is not None else args.steps,
        seed=args.seed,
        batch_size=args.batch_size,
        dtype=args.dtype,
        algo=getattr(args, "algo", "td3bc"),
    )


def _cmd_collect(args) -> int:
    dataset = collect(SimConfig(rng_seed=args.seed), args.material,
                      args.episodes, args.seed)
    if args.test_split:
        train_set, test_set = split(dataset, args.test_split)
        save_dataset(train_set, args.out)
        save_dataset(test_set, args.out + "-test")
        log.info("wrote %d train / %d test episodes", len(train_set), len(test_set))
    else:
        save_dataset(dataset, args.out)
        log.info("wrote %d episodes to %s", len(dataset), args.out)
    return 0


def _cmd_augment(args) -> int:
    dataset = load_dataset(args.src)
    out = relabel(dataset, args.mode, args.ratio, args.seed)
    save_dataset(out, args.out)
    log.info("%d -> %d episodes (%s %dx)", len(dataset), len(out), args.mode, args.ratio)
    return 0


def _cmd_train(args) -> int:
    dataset = load_dataset(args.data)
    config = _train_config(args)
    params = train(dataset, config)
    save_policy(params, args.out, extra_manifest={
        "alpha": config.alpha, "gamma": config.gamma,
        "steps": config.total_steps, "seed": config.seed,
        "algo": config.algo, "data": os.path.abspath(args.data),
    })
    log.info("policy written to %s", args.out)
    return 0


def _parse_baseline(spec: str) -> ServoConfig:
    kwargs = {}
    for item in spec.split(","):
        if not item:
            continue
        key, _, value = item.partition("=")
        if key.strip() != "k":
            raise ConfigurationError(f"unknown baseline parameter {key!r}")
        kwargs["k"] = float(value)
    return ServoConfig(**kwargs)


def _cmd_eval(args) -> int:
    config = SimConfig(rng_seed=args.seed)
    sequence = make_goal_sequence(config, args.material, args.seed)
    if args.policy:
        runner = PolicyRunner(load_policy(args.policy))
    else:
        runner = BaselineRunner(_parse_baseline(args.baseline))
    report = run_eval(runner, sequence, config, args.material,
                      seed=args.seed, shuffle_goals=args.shuffle_goals)
    emit_artifacts([({}, report)], args.out)
    with open(os.path.join(args.out, "report.json"), "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=2)
    log.info("mean RMSE %.4f m over %d shapes", report.mean, len(report.finals))
    return 0


def _sweep_workers() -> int:
    try:
        return max(1, int(os.environ.get("DLOCTL_THREADS", "1")))
    except ValueError:
        return 1


def _cmd_sweep_aug(args) -> int:
    dataset = load_dataset(args.data)
    ratios = [int(r) for r in args.ratios.split(",") if r]
    config = SimConfig(rng_seed=args.seed)
    sequence = make_goal_sequence(config, args.material, args.seed)
    tc = _train_config(args)
    reports = _run_parallel_sweep(
        [(("ratio", r), (dataset, [r], args.alpha, tc, sequence, config, args.material))
         for r in ratios],
        sweep_augmentation,
    )
    emit_artifacts([({"ratio": r, "alpha": args.alpha}, rep) for r, rep in reports], args.out)
    return 0


def _cmd_sweep_alpha(args) -> int:
    dataset = load_dataset(args.data)
    alphas = [float(a) for a in args.alphas.split(",") if a]
    config = SimConfig(rng_seed=args.seed)
    sequence = make_goal_sequence(config, args.material, args.seed)
    tc = _train_config(args)
    reports = _run_parallel_sweep(
        [(("alpha", a), (dataset, [a], tc, sequence, config, args.material))
         for a in alphas],
        sweep_alpha,
    )
    best = min(reports, key=lambda item: item[1].mean)
    log.info("best alpha %.2f with mean RMSE %.4f", best[0], best[1].mean)
    emit_artifacts([({"alpha": a}, rep) for a, rep in reports], args.out)
    return 0


def _run_parallel_sweep(jobs, sweep_fn):
    """jobs: [((label_name, value), sweep_args)] run with capped parallelism."""
    workers = _sweep_workers()
    results = []
    if workers <= 1 or len(jobs) <= 1:
        for label, sweep_args in jobs:
            out = sweep_fn(*sweep_args)
            results.append((label[1], next(iter(out.values()))))
        return results
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [(label, pool.submit(sweep_fn, *sweep_args))
                   for label, sweep_args in jobs]
        for label, fut in futures:
            out = fut.result()
            results.append((label[1], next(iter(out.values()))))
    return results


def _cmd_goals(args) -> int:
    sequence = make_goal_sequence(SimConfig(rng_seed=args.seed), args.material, args.seed)
    payload = {
        "seed": args.seed,
        "material": args.material,
        "budget_s": sequence.budget,
        "tags": list(sequence.tags),
        "goals": [g.points.tolist() for g in sequence.goals],
    }
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)
    log.info("wrote %d goals to %s", len(sequence), args.out)
    return 0


COMMANDS = {
    "collect": _cmd_collect,
    "augment": _cmd_augment,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "sweep-aug": _cmd_sweep_aug,
    "sweep-alpha": _cmd_sweep_alpha,
    "goals": _cmd_goals,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return COMMANDS[args.command](args)
    except CONFIG_ERRORS as err:
        log.error("%s", err)
        return 2
    except DIVERGENCE_ERRORS as err:
        log.error("%s", err)
        return 3


if __name__ == "__main__":
    sys.exit(main())
