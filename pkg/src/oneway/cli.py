"""Command-line front end.

    oneway run CONFIG [--out DIR] [--strict] [--seed N] [--replay CSV]
    oneway preset two-user [--out DIR] [--strict]
    oneway preset multi-user [--n N ...] [--out DIR] [--strict]

Outputs go to ``--out``, else ``$ONEWAY_OUTPUT_ROOT/<outputs>`` (default
root ``./runs``).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import math
import os
import sys
from typing import Optional, Sequence

from . import analysis
from .config import (
    DEFAULT_N_LIST,
    ExperimentConfig,
    load,
    preset_multi_user,
    preset_two_user,
    resolve,
    serialize,
)
from .errors import ConfigError, InapplicableCertificateError
from .oracle import solve
from .protocol import BLACKOUT_HALT, feasibility_certificate, read_csv, replay_aggregate, run, write_csv
from .utility import demand

OUTPUT_ROOT_ENV = "ONEWAY_OUTPUT_ROOT"

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_CONFIG = 2


@dataclasses.dataclass
class ExperimentResult:
    exit_status: int
    out_dir: str
    trajectory: object
    oracle: object
    certificates: list
    feasible: bool


def default_out_dir(config: ExperimentConfig) -> str:
    root = os.environ.get(OUTPUT_ROOT_ENV, "runs")
    return os.path.join(root, config.outputs or "experiment")


def _write_oracle(path, sol):
    with open(path, "w") as fh:
        json.dump(
            {
                "p_star_lo": sol.p_star_lo,
                "p_star_hi": sol.p_star_hi,
                "q_star": list(sol.q_star),
                "primal_value": sol.primal_value,
                "dual_value_at_pstar": sol.dual_value_at_pstar,
                "tol": sol.tol,
            },
            fh,
            indent=2,
        )
        fh.write("\n")


def _write_plot_data(path, traj, instance, sol):
    # one row per iteration: dual distance, load ratio and primal error
    with open(path, "w") as fh:
        fh.write("t,dist_to_pstar,log10_dist_to_pstar,aggregate_over_Q,primal_error\n")
        for rec in traj.records:
            dist = rec.dist_to_pstar
            log_dist = math.log10(dist) if dist and dist > 0 else ""
            ratio = rec.aggregate_demand / instance.Q if instance.Q > 0 else ""
            err = math.sqrt(sum((demand(u, rec.p) - q) ** 2 for u, q in zip(instance.users, sol.q_star)))
            fh.write(",".join(
                format(v, ".17g") if isinstance(v, float) else str(v)
                for v in (rec.t, dist, log_dist, ratio, err)
            ) + "\n")


def _certificates(traj, instance, sol):
    certs, notes = [], []
    try:
        certs.append(analysis.certify_sublinear(traj, sol, instance))
    except InapplicableCertificateError as exc:
        notes.append(f"{analysis.SUBLINEAR:22s} not applicable: {exc}")
    for mode, kind in (("general", analysis.LINEAR_GENERAL), ("n-independent", analysis.LINEAR_N_INDEPENDENT)):
        try:
            certs.append(analysis.certify_linear(traj, sol, instance, mode))
        except InapplicableCertificateError as exc:
            notes.append(f"{kind:22s} not applicable: {exc}")
    return certs, notes


def run_experiment(
    config: ExperimentConfig,
    out_dir: Optional[str] = None,
    strict: bool = False,
) -> ExperimentResult:
    """Simulate one configuration and write its artifacts to ``out_dir``.

    Files: ``config.yaml``, ``trajectory.csv``, ``oracle.json``,
    ``certificates.txt``/``certificates.jsonl`` and ``plot_data.csv``.
    """
    exp = resolve(config)
    out_dir = out_dir or default_out_dir(config)
    os.makedirs(out_dir, exist_ok=True)
    for name in ("certificates.txt", "certificates.jsonl"):
        if os.path.exists(os.path.join(out_dir, name)):
            os.remove(os.path.join(out_dir, name))

    sol = solve(exp.instance)
    traj = run(exp.instance, exp.p0, exp.policy, exp.stop, exp.blackout_policy, p_star_hi=sol.p_star_hi)
    traj = analysis.annotate(traj, exp.instance, sol)

    with open(os.path.join(out_dir, "config.yaml"), "w") as fh:
        fh.write(serialize(config))
    write_csv(traj, os.path.join(out_dir, "trajectory.csv"))
    _write_oracle(os.path.join(out_dir, "oracle.json"), sol)
    _write_plot_data(os.path.join(out_dir, "plot_data.csv"), traj, exp.instance, sol)

    feas = feasibility_certificate(traj)
    certs, notes = _certificates(traj, exp.instance, sol)
    header = [
        f"users={exp.instance.n} Q={exp.instance.Q!r} p0={exp.p0!r} gamma={exp.gamma!r} "
        f"iterations={len(traj) - 1} terminated={traj.terminated_reason}",
        f"{'feasibility':22s} holds={feas.feasible!s:5s} first_violation={feas.first_violation}",
    ]
    analysis.write_report(certs, out_dir, extra=header + notes)

    failed = (
        traj.terminated_reason == BLACKOUT_HALT
        or not feas.feasible
        or any(not c.holds for c in certs)
    )
    status = EXIT_FAILED if (strict and failed) else EXIT_OK
    return ExperimentResult(status, out_dir, traj, sol, certs, feas.feasible)


def replay(config: ExperimentConfig, csv_path: str) -> bool:
    """Re-meter the price column of ``csv_path`` and compare aggregates bit for bit."""
    exp = resolve(config)
    records = read_csv(csv_path)
    loads = replay_aggregate(exp.instance, [r.p for r in records])
    return all(a == r.aggregate_demand for a, r in zip(loads, records)) and len(loads) == len(records)


def _summarize(result: ExperimentResult) -> str:
    tr = result.trajectory
    last = tr.records[-1]
    parts = [
        f"{result.out_dir}: {len(tr) - 1} iterations ({tr.terminated_reason}), "
        f"p={last.p:.12g}, p*={result.oracle.p_star:.12g}, feasible={result.feasible}"
    ]
    for c in result.certificates:
        parts.append(f"  {c.kind}: holds={c.holds} worst={c.worst_violation:.4g}")
    return "\n".join(parts)


def _run_one(config, args, out_dir):
    if args.replay:
        ok = replay(config, args.replay)
        print(f"replay {args.replay}: {'aggregates match bit-exactly' if ok else 'MISMATCH'}")
        return EXIT_OK if ok else EXIT_FAILED
    result = run_experiment(config, out_dir, args.strict)
    print(_summarize(result))
    return result.exit_status


def _multi(args):
    ns = args.n or list(DEFAULT_N_LIST)
    if args.replay and len(ns) != 1:
        raise ConfigError("--replay needs exactly one --n value")
    root = args.out or os.path.join(os.environ.get(OUTPUT_ROOT_ENV, "runs"), "multi-user")
    status = EXIT_OK
    trajs, instances = [], []
    for n in ns:
        config = preset_multi_user(n)
        if args.replay:
            status = max(status, _run_one(config, args, None))
            continue
        result = run_experiment(config, os.path.join(root, f"N{n}"), args.strict)
        print(_summarize(result))
        status = max(status, result.exit_status)
        trajs.append(result.trajectory)
        instances.append(resolve(config).instance)
    if len(trajs) >= 2:
        same = analysis.check_n_independence(trajs, instances)
        line = f"n-independence N={ns}: {'identical' if same else 'DIFFERENT'} price trajectories"
        os.makedirs(root, exist_ok=True)
        with open(os.path.join(root, "n_independence.txt"), "a") as fh:
            fh.write(line + "\n")
        print(line)
        if args.strict and not same:
            status = EXIT_FAILED
    return status


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="oneway", description="Broadcast-price resource allocation simulator")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out", help="output directory")
        p.add_argument("--strict", action="store_true", help="exit nonzero on overload or a failed certificate")
        p.add_argument("--replay", metavar="CSV", help="re-meter a trajectory CSV's prices instead of running")
        p.add_argument("--seed", type=int, help="seed for randomized user generation")

    p_run = sub.add_parser("run", help="run an experiment from a YAML config")
    p_run.add_argument("config")
    common(p_run)

    p_pre = sub.add_parser("preset", help="run a built-in experiment")
    p_pre.add_argument("name", choices=["two-user", "multi-user"])
    p_pre.add_argument("--n", type=int, nargs="+", help="user counts for multi-user (default: 5 10 20 30 40 150 1000)")
    common(p_pre)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            config = load(args.config)
            if args.seed is not None:
                config.seed = args.seed
            return _run_one(config, args, args.out)
        if args.name == "two-user":
            config = preset_two_user()
            if args.seed is not None:
                config.seed = args.seed
            return _run_one(config, args, args.out)
        return _multi(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
