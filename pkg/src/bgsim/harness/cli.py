"""``simcli``: run, explore, check and replay scenarios.

Exit codes: 0 when every check holds, 2 when one is refuted (a
counterexample file is written), 3 when a bound or budget was exceeded,
1 for unusable input (bad config, unreadable trace).
"""
from __future__ import annotations

import argparse
import os
import sys

from ..errors import ConfigError, TraceParseError
from .config import load_config
from .runner import check_file, explore_scenario, replay_trace, run_scenario

DEFAULT_OUT = "simcli-out"


def _parser():
    ap = argparse.ArgumentParser(prog="simcli", description=__doc__.split("\n")[0])
    sub = ap.add_subparsers(dest="cmd", required=True)
    for name, what in (("run", "config file"), ("explore", "config file"),
                       ("check", "history or trace file"), ("replay", "trace file")):
        p = sub.add_parser(name)
        p.add_argument("file", help=what)
        p.add_argument("--seed", type=int, help="override scheduler.seed")
        p.add_argument("--budget", type=int,
                       help="step budget for run, state budget for explore")
        p.add_argument("--out", help=f"output directory (default $SIMCLI_OUT or ./{DEFAULT_OUT})")
        if name == "check":
            p.add_argument("--spec", help="object kind[:init], e.g. mw_register:0")
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    out = args.out or os.environ.get("SIMCLI_OUT") or DEFAULT_OUT
    try:
        if args.cmd in ("run", "explore"):
            cfg = load_config(args.file)
            if args.seed is not None:
                cfg.seed = args.seed
            if args.budget is not None:
                if args.budget < 1:
                    raise ConfigError("--budget: must be positive")
                if args.cmd == "run":
                    cfg.steps = args.budget
                else:
                    cfg.max_states = args.budget
            fn = run_scenario if args.cmd == "run" else explore_scenario
            rep = fn(cfg, out)
        elif args.cmd == "replay":
            rep = replay_trace(args.file, out)
        else:
            rep = check_file(args.file, args.spec, out)
    except (ConfigError, TraceParseError, OSError, ValueError) as exc:
        print(f"simcli: error: {exc}", file=sys.stderr)
        return 1
    print(rep.summary())
    print(f"output: {out}")
    return rep.exit_code


if __name__ == "__main__":
    sys.exit(main())
