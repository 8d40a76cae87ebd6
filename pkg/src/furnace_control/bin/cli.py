"""``furnace <verb>``: one entry point for every furnace-control command."""

from __future__ import annotations

import sys
from importlib import import_module

VERBS = {
    "simulate": "Run the twin and export a trajectory",
    "train": "Train a DQN or PPO agent from a job file",
    "grid": "Train every job of a hyperparameter grid",
    "correlate": "Correlate hyperparameters with grid scores",
    "deploy": "Wrap a checkpoint and store it for the pipeline",
    "manage": "Upload bundles and select the active managers",
    "pipeline": "Run the control pipeline against a simulated plant",
    "report": "Write plot-ready series from traces or metrics",
}


def _usage() -> str:
    width = max(len(v) for v in VERBS)
    lines = ["usage: furnace <verb> [options]", "", "verbs:"]
    lines += [f"  {verb:<{width}}  {text}" for verb, text in VERBS.items()]
    lines += ["", "Run 'furnace <verb> --help' for the options of a verb."]
    return "\n".join(lines)


def main(argv: list[str] | None = None) -> int:
    args = sys.argv[1:] if argv is None else argv
    if not args or args[0] in ("-h", "--help"):
        print(_usage())
        return 0 if args else 1
    verb, rest = args[0], args[1:]
    if verb not in VERBS:
        print(f"ERROR: unknown verb '{verb}'", file=sys.stderr)
        print(_usage(), file=sys.stderr)
        return 1
    module = import_module(f"furnace_control.bin.{verb}")
    result: int = module.main(rest)
    return result


if __name__ == "__main__":
    sys.exit(main())
