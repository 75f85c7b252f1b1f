"""Command-line entry point: ``python -m alphalis <command> ...``.

Commands
--------
run CONFIG                 sweep from a JSON config, CSV to --out
compare-optimizers CONFIG  full / incremental / NEPv output bases per s
ces CONFIG                 calibrate-emulate-sample run, result directory to --out
cache {list,clear}         manage cached tempered-posterior chains
"""

import argparse
import json
import logging
import sys

import numpy as np

from . import experiments as ex
from .emulator_ces import CesConfig, ces_run


def _load_json(path):
    with open(path) as fh:
        return json.load(fh)


def _override(cfg, args):
    if args.seed is not None:
        cfg["seed"] = args.seed
    return cfg


def _cmd_run(args):
    cfg = ex.ExperimentConfig.from_dict(_override(_load_json(args.config), args))
    res = ex.run_experiment(cfg, jobs=args.jobs, out=args.out)
    if not args.out:
        sys.stdout.write(res.to_csv())
    for e in res.errors:
        logging.error(e)
    return 0 if res.n_failures == 0 else 1


def _cmd_compare(args):
    cfg = ex.ExperimentConfig.from_dict(_override(_load_json(args.config), args))
    res = ex.compare_optimizers(cfg, out=args.out)
    if not args.out:
        sys.stdout.write(res.to_csv())
    return 0 if res.n_failures == 0 else 1


def _cmd_ces(args):
    raw = _load_json(args.config)
    problem = raw.pop("problem")
    seed = raw.pop("seed", 0) if args.seed is None else args.seed
    raw.pop("seed", None)
    p = ex.build_problem(problem, 0)
    res = ces_run(p, CesConfig.from_dict(raw), seed)
    res.provenance["problem_config"] = problem
    if args.out:
        res.save(args.out)
    summary = {"posterior_mean": res.posterior_mean.tolist(), "acceptance_rate": res.chain.acceptance_rate}
    if problem.get("type") == "lorenz":
        f_true = ex.lorenz_true_forcing(p.d_x)
        summary["param_error"] = float(np.linalg.norm(f_true - res.posterior_mean))
    sys.stdout.write(json.dumps(summary, indent=2) + "\n")
    return 0


def _cmd_cache(args):
    if args.action == "list":
        for f in ex.cache_entries(args.dir):
            print(f)
    else:
        print(f"removed {ex.cache_clear(args.dir)} entries")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="alphalis", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("config", help="JSON configuration file")
        sp.add_argument("--seed", type=int, default=None, help="override the config seed")
        sp.add_argument("--jobs", type=int, default=1, help="parallel replicate jobs")
        sp.add_argument("--out", default=None, help="output path")

    common(sub.add_parser("run", help="run a sweep"))
    common(sub.add_parser("compare-optimizers", help="compare output-basis optimizers"))
    common(sub.add_parser("ces", help="calibrate, emulate, sample"))
    sp = sub.add_parser("cache", help="manage cached chains")
    sp.add_argument("action", choices=["list", "clear"])
    sp.add_argument("--dir", default=".alphalis-cache")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    handlers = {"run": _cmd_run, "compare-optimizers": _cmd_compare, "ces": _cmd_ces, "cache": _cmd_cache}
    return handlers[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
