"""Command-line entry point: ``softspibb <command> [flags]``.

Exit codes: 0 success, 1 invalid input (bad flags, missing or malformed
files), 2 runtime failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

from . import benchmark as bench
from .error_bounds import ERROR_KINDS, bound_report, estimate_kappa, make_errors
from .mdp import count_pairs, estimate_mle, policy_value, solve_optimal
from .serialization import (FormatError, aggregate_to_csv, atomic_write, load_dataset,
                            load_mdp, load_policy, load_records, save_dataset, save_mdp,
                            save_policy, save_records)
from .training import ALGORITHMS, SOFT_ALGOS, train_policy

log = logging.getLogger("softspibb")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


REQUIRED = {
    "generate-mdp": ("out",),
    "generate-baseline": ("mdp", "eta", "out"),
    "generate-dataset": ("mdp", "baseline", "n_trajectories", "out"),
    "train": ("algo", "mdp", "baseline", "dataset", "out"),
    "evaluate": ("mdp", "policy"),
    "benchmark": ("out",),
    "aggregate": ("results",),
    "bounds": ("epsilon", "gamma"),
}


def _algo_spec(text: str):
    """``name`` or ``name:hp1,hp2``."""
    name, _, grid = text.partition(":")
    if name not in ALGORITHMS:
        raise argparse.ArgumentTypeError(f"unknown algorithm {name!r}")
    values = [float(v) for v in grid.split(",")] if grid else [None]
    return name, values


def build_parser() -> tuple[argparse.ArgumentParser, dict]:
    parser = _Parser(prog="softspibb", description="Tabular Soft-SPIBB toolkit.")
    parser.add_argument("--config", help="JSON file with flag values (keys = flag names)")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    subs = {}

    p = subs["generate-mdp"] = sub.add_parser("generate-mdp", help="random benchmark MDP")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-states", type=int, default=50)
    p.add_argument("--n-actions", type=int, default=4)
    p.add_argument("--connectivity", type=int, default=4)
    p.add_argument("--gamma", type=float, default=0.95)
    p.add_argument("--out")

    p = subs["generate-baseline"] = sub.add_parser("generate-baseline",
                                                   help="baseline at performance level eta")
    p.add_argument("--mdp")
    p.add_argument("--eta", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")

    p = subs["generate-dataset"] = sub.add_parser("generate-dataset", help="baseline rollouts")
    p.add_argument("--mdp")
    p.add_argument("--baseline")
    p.add_argument("--n-trajectories", type=int)
    p.add_argument("--horizon-cap", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--second-goal-out",
                   help="add a random second goal first and save the modified MDP here")
    p.add_argument("--out")

    p = subs["train"] = sub.add_parser("train", help="train a policy from a dataset")
    p.add_argument("--algo", choices=ALGORITHMS)
    p.add_argument("--mdp", help="MDP file; only its shape, gamma and r_max are used")
    p.add_argument("--baseline")
    p.add_argument("--dataset")
    p.add_argument("--epsilon", type=float)
    p.add_argument("--n-wedge", type=float)
    p.add_argument("--kappa-adj", type=float)
    p.add_argument("--delta", type=float, default=1.0)
    p.add_argument("--error-kind", choices=ERROR_KINDS, default="hoeffding_P")
    p.add_argument("--one-step", action="store_true")
    p.add_argument("--gamma", type=float, help="override the MDP discount")
    p.add_argument("--out")

    p = subs["evaluate"] = sub.add_parser("evaluate", help="exact value of a policy")
    p.add_argument("--mdp")
    p.add_argument("--policy")
    p.add_argument("--baseline", help="also report the normalized performance")

    p = subs["benchmark"] = sub.add_parser("benchmark", help="random-MDP benchmark sweep")
    p.add_argument("--n-seeds", type=int, default=10)
    p.add_argument("--seed", type=int, default=0, help="master seed")
    p.add_argument("--eta", type=float, nargs="+", default=[0.9])
    p.add_argument("--sizes", type=int, nargs="+", default=[10, 20, 50, 100, 200, 500, 1000, 2000])
    p.add_argument("--algo", type=_algo_spec, action="append",
                   help="NAME or NAME:hp1,hp2 (repeatable); defaults to the standard set")
    p.add_argument("--n-states", type=int, default=50)
    p.add_argument("--n-actions", type=int, default=4)
    p.add_argument("--connectivity", type=int, default=4)
    p.add_argument("--gamma", type=float, default=0.95)
    p.add_argument("--horizon-cap", type=int, default=1000)
    p.add_argument("--error-kind", choices=ERROR_KINDS, default="hoeffding_P")
    p.add_argument("--delta", type=float, default=1.0)
    p.add_argument("--workers", type=int)
    p.add_argument("--out")

    p = subs["aggregate"] = sub.add_parser("aggregate", help="mean/CVaR table from results")
    p.add_argument("results", nargs="?")
    p.add_argument("--level", type=float, action="append", default=[],
                   help="extra CVaR level in percent (repeatable)")
    p.add_argument("--out", help="output CSV (default: stdout)")

    p = subs["bounds"] = sub.add_parser("bounds", help="safety bound calculator")
    p.add_argument("--epsilon", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--v-max", type=float, default=None, help="default: 1/(1-gamma)")
    p.add_argument("--kappa", type=float, help="default: estimated from --mdp/--baseline/--dataset")
    p.add_argument("--delta", type=float, default=1.0)
    p.add_argument("--mdp")
    p.add_argument("--baseline")
    p.add_argument("--dataset")
    p.add_argument("--error-kind", choices=ERROR_KINDS, default="hoeffding_P")
    return parser, subs


def _parse(argv) -> argparse.Namespace:
    pre = _Parser(add_help=False)
    pre.add_argument("--config")
    known, rest = pre.parse_known_args(argv)
    parser, subs = build_parser()
    if known.config:
        try:
            with open(known.config, encoding="utf-8") as fh:
                doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{known.config}: invalid JSON at line {exc.lineno}: {exc.msg}")
        if not isinstance(doc, dict):
            raise FormatError(f"{known.config}: expected a JSON object")
        command = doc.pop("command", None)
        if command is not None and command not in subs:
            raise UsageError(f"{known.config}: unknown command {command!r}")
        if not any(a in subs for a in rest):
            if command is None:
                raise UsageError("no command given")
            rest = [command, *rest]
        target = next(a for a in rest if a in subs)
        dests = {a.dest for a in subs[target]._actions}
        unknown = set(k.replace("-", "_") for k in doc) - dests
        if unknown:
            raise UsageError(f"{known.config}: unknown keys {sorted(unknown)}")
        subs[target].set_defaults(**{k.replace("-", "_"): v for k, v in doc.items()})
        if target == "benchmark" and isinstance(doc.get("algo"), list):
            subs[target].set_defaults(algo=[_algo_spec(a) if isinstance(a, str) else a
                                            for a in doc["algo"]])
    args = parser.parse_args(rest)
    if args.command is None:
        raise UsageError("no command given")
    missing = [name for name in REQUIRED[args.command] if getattr(args, name) is None]
    if missing:
        flags = ", ".join("--" + m.replace("_", "-") for m in missing)
        raise UsageError(f"{args.command}: missing required {flags}")
    return args


def _print_json(obj) -> None:
    sys.stdout.write(json.dumps(obj, indent=2) + "\n")


def cmd_generate_mdp(args):
    config = bench.BenchmarkConfig(n_states=args.n_states, n_actions=args.n_actions,
                                   connectivity=args.connectivity, gamma=args.gamma)
    save_mdp(bench.generate_random_mdp(args.seed, config), args.out)


def cmd_generate_baseline(args):
    mdp = load_mdp(args.mdp)
    save_policy(bench.generate_baseline(mdp, args.eta, args.seed), args.out)


def cmd_generate_dataset(args):
    mdp = load_mdp(args.mdp)
    baseline = load_policy(args.baseline)
    if args.second_goal_out:
        mdp = bench.add_second_goal(mdp, bench.child_seed(args.seed, 1))
        save_mdp(mdp, args.second_goal_out)
    data = bench.sample_dataset(mdp, baseline, args.n_trajectories, args.horizon_cap, args.seed)
    save_dataset(data, args.out)


def cmd_train(args):
    mdp = load_mdp(args.mdp)
    baseline = load_policy(args.baseline)
    dataset = load_dataset(args.dataset, mdp.n_states, mdp.n_actions)
    gamma = mdp.gamma if args.gamma is None else args.gamma
    mle, counts = estimate_mle(dataset, mdp.shape, gamma, mdp.r_max)
    algo = args.algo
    if args.one_step:
        if algo not in ("exact-soft-spibb", "approx-soft-spibb"):
            raise ValueError("--one-step only applies to the Soft-SPIBB algorithms")
        algo += "-1step"
    hp = {"ramdp": args.kappa_adj, "pi-b-spibb": args.n_wedge,
          "pi-leq-b-spibb": args.n_wedge}.get(algo, args.epsilon if algo in SOFT_ALGOS else None)
    policy = train_policy(algo, hp, mle, counts, baseline, args.error_kind, args.delta,
                          n_wedge=args.n_wedge)
    save_policy(policy, args.out)


def cmd_evaluate(args):
    mdp = load_mdp(args.mdp)
    policy = load_policy(args.policy)
    out = {"value": policy_value(mdp, policy)}
    rho_opt = policy_value(mdp, solve_optimal(mdp)[0])
    out["optimal_value"] = rho_opt
    if args.baseline:
        rho_b = policy_value(mdp, load_policy(args.baseline))
        out["baseline_value"] = rho_b
        out["normalized_perf"] = bench.normalized_performance(out["value"], rho_b, rho_opt)
    _print_json(out)


def cmd_benchmark(args):
    algorithms = dict(args.algo) if args.algo else dict(bench.DEFAULT_ALGORITHMS)
    config = bench.BenchmarkConfig(
        n_states=args.n_states, n_actions=args.n_actions, connectivity=args.connectivity,
        gamma=args.gamma, eta_list=list(args.eta), dataset_sizes=list(args.sizes),
        n_seeds=args.n_seeds, algorithms=algorithms, horizon_cap=args.horizon_cap,
        master_seed=args.seed, error_kind=args.error_kind, delta=args.delta)
    records = bench.run_benchmark(config, workers=args.workers)
    save_records(records, args.out)


def cmd_aggregate(args):
    levels = list(bench.CVAR_LEVELS) + [lv for lv in args.level if lv not in bench.CVAR_LEVELS]
    rows = bench.aggregate(load_records(args.results), levels)
    text = aggregate_to_csv(rows, levels)
    if args.out:
        atomic_write(args.out, text)
    else:
        sys.stdout.write(text)


def cmd_bounds(args):
    v_max = args.v_max if args.v_max is not None else 1.0 / (1.0 - args.gamma)
    kappa, visits = args.kappa, []
    if args.mdp and args.baseline and args.dataset:
        mdp = load_mdp(args.mdp)
        baseline = load_policy(args.baseline)
        data = load_dataset(args.dataset, mdp.n_states, mdp.n_actions)
        counts = count_pairs(data)
        visits = counts.sum(axis=1)
        if kappa is None:
            errors = make_errors(args.error_kind, counts, args.delta, n_wedge=None,
                                 epsilon=args.epsilon or None)
            kappa = estimate_kappa(mdp, baseline, errors)
    if kappa is None:
        raise ValueError("bounds: give --kappa or all of --mdp, --baseline and --dataset")
    _print_json(bound_report(args.epsilon, args.gamma, v_max, kappa, visits, args.delta).as_dict())


COMMANDS = {
    "generate-mdp": cmd_generate_mdp,
    "generate-baseline": cmd_generate_baseline,
    "generate-dataset": cmd_generate_dataset,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "benchmark": cmd_benchmark,
    "aggregate": cmd_aggregate,
    "bounds": cmd_bounds,
}


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    logging.basicConfig(level=logging.INFO if "-v" in argv or "--verbose" in argv
                        else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        args = _parse(argv)
        COMMANDS[args.command](args)
    except (UsageError, FormatError, ValueError, FileNotFoundError, IsADirectoryError) as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"error: {msg}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
