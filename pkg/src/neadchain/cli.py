"""Command-line entry point: simulate, sweep, walk, verify-lemmas, fit."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import harness, randwalk
from .model import SimulationError


def _float_list(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _str_list(text: str) -> list[str]:
    return [x.strip() for x in text.split(",") if x.strip()]


def _write_json(obj: dict, path: Path | None) -> None:
    text = json.dumps(harness._jsonable(obj), indent=2, sort_keys=True) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)


def _add_run_args(ap: argparse.ArgumentParser) -> None:
    # None means "not given": config-file values or ExperimentConfig defaults apply
    ap.add_argument("--replications", type=int, default=None)
    ap.add_argument("--seed", dest="base_seed", type=int, default=None,
                    help="base seed; replication r uses seed ^ r")
    ap.add_argument("-T", "--horizon", dest="T", type=int, default=None,
                    help="arrivals per run (default max(1e5, 200 (1/p) ln(1/p)))")
    ap.add_argument("--c", type=float, default=None, help="phase constant for batch-type policies")
    ap.add_argument("--R", type=int, default=None, help="number of altruistic donors (greedy only)")
    ap.add_argument("--tie-break", dest="tie_break", choices=("lowest", "random"), default=None)
    ap.add_argument("--burn-in", dest="burn_in", type=float, default=None)
    ap.add_argument("--check", dest="check_invariants", action="store_const", const=True,
                    default=None, help="verify invariants after every step")


RUN_KEYS = ("replications", "base_seed", "T", "c", "R", "tie_break", "burn_in", "check_invariants")


def _given(args, keys) -> dict:
    return {k: getattr(args, k) for k in keys if getattr(args, k, None) is not None}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="neadchain", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run one experiment config")
    sim.add_argument("--config", type=Path, help="flat key = value config file")
    sim.add_argument("--policy", default=None, choices=harness.POLICY_NAMES + ("greedy-batch", "clear-all"))
    sim.add_argument("--p", type=float, default=None)
    sim.add_argument("--out", type=Path, default=None)
    sim.add_argument("--trace", action="store_true", help="also write the event trace CSV")
    _add_run_args(sim)

    sw = sub.add_parser("sweep", help="p-grid x policies")
    sw.add_argument("--p-grid", type=_float_list, default=[0.02, 0.05, 0.1, 0.2])
    sw.add_argument("--policies", type=_str_list, default=["greedy", "batch"])
    sw.add_argument("--out", type=Path, required=True)
    _add_run_args(sw)

    wk = sub.add_parser("walk", help="drift random walk: solver, bounds, Monte Carlo")
    wk.add_argument("--M", type=int, default=50)
    wk.add_argument("--K", type=int, default=20)
    wk.add_argument("--rho", type=float, default=None, help="defaults to (1 + beta) / K")
    wk.add_argument("--beta", type=float, default=0.2)
    wk.add_argument("--steps", type=int, default=1_000_000)
    wk.add_argument("--seed", type=int, default=0)
    wk.add_argument("--out", type=Path, default=None)

    lm = sub.add_parser("verify-lemmas", help="Monte Carlo / exhaustive lemma checks")
    lm.add_argument("--which", type=_str_list, default=["random_m", "dfs_path", "gnp_path"])
    lm.add_argument("--trials", type=int, default=None)
    lm.add_argument("--seed", type=int, default=0)
    lm.add_argument("--out", type=Path, default=None, help="directory for lemmas.json")

    ft = sub.add_parser("fit", help="fit 1/p and (1/p)ln(1/p) models to a sweep CSV")
    ft.add_argument("sweep_csv", type=Path)
    ft.add_argument("--out", type=Path, default=None)
    return ap


def _config_from_args(args) -> harness.ExperimentConfig:
    values = {}
    if args.config is not None:
        values = harness.ExperimentConfig.from_text(args.config.read_text()).to_dict()
        if args.p is not None and "T" not in _given(args, ("T",)):
            values["T"] = 0  # horizon default follows the overridden p
    values.update(_given(args, RUN_KEYS + ("policy", "p")))
    if args.out is not None:
        values["output_dir"] = str(args.out)
    if args.trace:
        values["write_trace"] = True
    if values.get("p") is None:
        raise ValueError("--p is required (or set p in the config file)")
    return harness.ExperimentConfig(**values)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "simulate":
            config = _config_from_args(args)
            _, report = harness.run_experiment(config)
            if config.output_dir is None:
                _write_json(report, None)
        elif args.command == "sweep":
            rows = harness.sweep(args.p_grid, args.policies, output_dir=str(args.out),
                                 **_given(args, RUN_KEYS))
            failed = [r for r in rows if r["error"]]
            for r in failed:
                print(f"run failed: {r['policy']} p={r['p']}: {r['error']}", file=sys.stderr)
            if failed:
                return 2
        elif args.command == "walk":
            rho = args.rho if args.rho is not None else (1 + args.beta) / args.K
            params = randwalk.WalkParams(args.M, args.K, rho, args.beta)
            _write_json(randwalk.walk_report(params, args.steps, args.seed), args.out)
        elif args.command == "verify-lemmas":
            report = harness.verify_lemmas(args.which, args.trials, args.seed)
            _write_json(report, args.out / "lemmas.json" if args.out else None)
            return 0 if report["passed"] else 1
        elif args.command == "fit":
            rows = harness.read_sweep_csv(args.sweep_csv)
            _write_json(harness.fit_sweep(rows), args.out)
    except (SimulationError, AssertionError) as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
