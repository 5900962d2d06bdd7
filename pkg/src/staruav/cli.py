"""Command-line front end.

    staruav run --config scenario.ini --out out/run1
    staruav sweep --config sweep.ini --out out/sweep1 --jobs 4
    staruav validate --config scenario.ini

`run` optimizes one scenario and dumps the solution bundle. `sweep` executes
the [experiment] section across values and seeds. `validate` parses and
checks a config without solving. Exit codes: 0 success, 1 bad config,
2 scenario infeasible.
"""

from __future__ import annotations

import argparse
import sys

from .ao import ScenarioInfeasibleError
from .config_io import (
    ConfigError,
    experiment_from_config,
    read_ini,
    scenario_from_config,
)
from .experiments import run_experiment, run_single
from .scenario import ScenarioError
from .star_ris import PROTOCOLS


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="staruav", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, needs_out: bool):
        sp.add_argument("--config", required=True, help="INI scenario file")
        if needs_out:
            sp.add_argument("--out", required=True, help="output directory")
            sp.add_argument("--seed", type=int, default=0)
            sp.add_argument(
                "--paper-scale",
                action="store_true",
                help="use the full-size defaults (20 elements, 20 slots) instead of desk scale",
            )

    run = sub.add_parser("run", help="optimize one scenario and dump the solution")
    common(run, needs_out=True)
    run.add_argument("--protocol", choices=sorted(PROTOCOLS), default="ES")
    run.add_argument("--surface-mode", choices=("star", "ris", "its"), default="star")

    sweep = sub.add_parser("sweep", help="run the [experiment] section of the config")
    common(sweep, needs_out=True)
    sweep.add_argument("--jobs", type=int, default=1, help="parallel worker processes")

    val = sub.add_parser("validate", help="parse and check a config without solving")
    common(val, needs_out=False)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = read_ini(args.config)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    try:
        if args.command == "validate":
            spec = None
            if cfg.has_section("experiment"):
                spec = experiment_from_config(cfg)
            if spec is not None and spec.random_users is not None:
                from .experiments import seeded_users

                seed = spec.seeds[0] if spec.seeds else 0
                scenario_from_config(cfg, users=seeded_users(seed, spec.random_users))
            else:
                scenario_from_config(cfg)
            print("config ok")
            return 0

        if args.command == "run":
            sol = run_single(
                cfg,
                args.out,
                seed=args.seed,
                protocol=args.protocol,
                surface_mode=args.surface_mode,
                paper_scale=args.paper_scale,
            )
            print(
                f"sum rate {sol.report.sum_rate:.6f} bits/s/Hz"
                f" ({sol.status}, {sol.iterations} outer iterations)"
            )
            print(f"bundle written to {args.out}")
            return 0

        # sweep
        spec = experiment_from_config(cfg)
        if args.paper_scale:
            from dataclasses import replace

            spec = replace(spec, paper_scale=True)
        if args.seed and len(spec.seeds) == 1 and spec.seeds[0] == 0:
            from dataclasses import replace

            spec = replace(spec, seeds=(args.seed,))
        files = run_experiment(cfg, spec, args.out, jobs=args.jobs)
        for f in files:
            print(f"curve written: {f}")
        return 0
    except (ConfigError, ScenarioError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ScenarioInfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
