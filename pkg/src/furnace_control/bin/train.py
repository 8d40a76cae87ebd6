"""Train one zone-3 agent from a job file.

Writes ``checkpoint.bundle``, ``metrics.csv``, ``config.json`` and the greedy
evaluation ``trace.csv`` into the output directory.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from furnace_control.lib.config import load_twin_config
from furnace_control.lib.console import (
    ArgumentParser,
    add_config_argument,
    add_verbose_argument,
    configure_logging,
    guarded,
)
from furnace_control.lib.hyperparams import validate
from furnace_control.lib.jobs import (
    METRICS_FILE,
    JobSpec,
    build_env,
    format_config_table,
    job_rngs,
    load_job,
    run_job,
    write_job_outputs,
)
from furnace_control.lib.rewards import RewardSpec
from furnace_control.lib.training import (
    EpisodeMetrics,
    TrainingAborted,
    evaluate,
    greedy_policy,
    write_metrics_csv,
)

TRACE_FILE = "trace.csv"


def parse_args(argv: list[str] | None = None) -> argparse.Namespace:
    """Parse command-line arguments."""
    parser = ArgumentParser(
        prog="furnace train", description="Train a DQN or PPO agent on the furnace twin."
    )
    parser.add_argument("job", type=Path, help="Job TOML with [job] and [hyperparameters]")
    add_config_argument(parser)
    parser.add_argument("--seed", type=int, default=None, help="Override the job seed")
    parser.add_argument("--episodes", type=int, default=None, help="Override the episode count")
    parser.add_argument(
        "--grid",
        action="store_true",
        default=None,
        help="Require every hyperparameter to come from its grid domain",
    )
    parser.add_argument(
        "--out", type=Path, default=Path("train-output"), help="Output directory"
    )
    add_verbose_argument(parser)
    return parser.parse_args(argv)


def apply_overrides(spec: JobSpec, seed: int | None, episodes: int | None, grid: bool) -> JobSpec:
    changes: dict[str, int] = {}
    if seed is not None:
        changes["seed"] = seed
    if episodes is not None:
        changes["episodes"] = episodes
    if not changes:
        return spec
    config = replace(spec.config, **changes)
    validate(config, grid=grid)
    return replace(spec, config=config)


def _progress(metrics: EpisodeMetrics) -> None:
    print(f"episode {metrics.episode:4d}  score {metrics.score:10.4f}  steps {metrics.steps}")


def run(args: argparse.Namespace) -> int:
    twin_config = load_twin_config(args.config)
    spec = load_job(args.job, grid=args.grid)
    spec = apply_overrides(spec, args.seed, args.episodes, bool(args.grid))
    print(format_config_table(spec))
    print()
    try:
        result = run_job(spec, twin_config, on_episode=_progress)
    except TrainingAborted as exc:
        write_metrics_csv(exc.metrics, args.out / METRICS_FILE)
        raise
    paths = write_job_outputs(result, args.out)
    _, env_rng = job_rngs(spec.seed)
    env = build_env(spec, twin_config, env_rng)
    trace = evaluate(env, greedy_policy(result.agent), RewardSpec(spec.reward))
    trace.frame().to_csv(args.out / TRACE_FILE, index=False)
    print()
    print(f"Best episode score: {result.best_score:.4f}")
    print(f"Greedy run: score {trace.score:.4f}, {trace.in_band_fraction:.1%} of steps in band")
    for name, path in sorted(paths.items()):
        print(f"{name}: {path}")
    print(f"trace: {args.out / TRACE_FILE}")
    return 0


def main(argv: list[str] | None = None) -> int:
    args = parse_args(argv)
    configure_logging(args.verbose)
    return guarded(lambda: run(args))


if __name__ == "__main__":
    sys.exit(main())
