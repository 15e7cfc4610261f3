"""Command-line entry point: ``dsaqos {optimize,sweep,simulate,evaluate}``."""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from dataclasses import replace
from pathlib import Path

from .arrivals import mean_arrival_rate, scale_arrivals
from .config import ExperimentConfig, parse_config
from .errors import ConfigError, InstabilityError, NumericalError, RefusalError
from .ld import evaluate_policy
from .optimizers import run_algorithm
from .policy import enumerate_leaves, format_policy, read_policy
from .queue_sim import SimConfig, validate_ld, write_validation_csv


class CliError(Exception):
    pass


def _num(x: float) -> str:
    return f"{x:.12g}"


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _load_policy(path, cfg: ExperimentConfig):
    if path is None:
        raise CliError("--policy is required for this command")
    try:
        policy = read_policy(path)
    except OSError as exc:
        raise CliError(f"cannot read policy {path}: {exc.strerror}") from None
    except ValueError as exc:
        raise CliError(f"policy {path}: {exc}") from None
    if policy.W != cfg.params.W:
        raise CliError(f"policy {path} has dimension {policy.W}, config has W={cfg.params.W}")
    return policy


def cmd_optimize(cfg: ExperimentConfig, algorithm: str | None, out: str | None) -> str:
    """Run one optimizer; write the policy file and a JSON report next to it."""
    name = algorithm or cfg.algorithms[0]
    t0 = time.perf_counter()
    rep = run_algorithm(name, cfg.arrivals, cfg.params, cfg.d_max, cfg.theta_cap)
    wall = time.perf_counter() - t0
    q = rep.best_qos
    header = f"algorithm={rep.algorithm.value} W={cfg.params.W} theta_star={_num(q.theta_star)}"
    policy_text = format_policy(rep.best_policy, header)
    report = {
        "algorithm": rep.algorithm.value,
        "theta_star": _num(q.theta_star),
        "delta": _num(q.delta),
        "p_delay": _num(q.p_delay),
        "mean_service": _num(q.mean_service),
        "mean_arrival": _num(mean_arrival_rate(cfg.arrivals)),
        "d_max": _num(cfg.d_max),
        "candidates_evaluated": rep.candidates_evaluated,
        "wall_time_s": round(wall, 6),
    }
    out = out or "policy.txt"
    Path(out).write_text(policy_text)
    report_path = Path(out).with_suffix(".report.json")
    report_path.write_text(json.dumps(report, indent=2) + "\n")
    return json.dumps(report, indent=2) + "\n"


def cmd_sweep(cfg: ExperimentConfig) -> str:
    if not cfg.sweep:
        raise CliError("config has no [sweep] section")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["alpha", "algorithm", "theta_star", "delta", "p_delay"])
    for alpha in cfg.sweep:
        proc = scale_arrivals(cfg.arrivals, alpha)
        for name in cfg.algorithms:
            q = run_algorithm(name, proc, cfg.params, cfg.d_max, cfg.theta_cap).best_qos
            w.writerow([_num(alpha), name, _num(q.theta_star), _num(q.delta), _num(q.p_delay)])
    return buf.getvalue()


def cmd_simulate(cfg: ExperimentConfig, policy_path, seed: int | None) -> str:
    policy = _load_policy(policy_path, cfg)
    sim = cfg.sim
    if sim is None:
        raise CliError("config has no [sim] section")
    if seed is not None:
        sim = replace(sim, seed=seed)
    res = validate_ld(cfg.arrivals, cfg.params, policy, cfg.thresholds, sim, cfg.theta_cap)
    for msg in res.warnings:
        print(f"WARNING: {msg}", file=sys.stderr)
    print(
        f"fitted slope {_num(res.slope)} over d={res.fit_thresholds}; "
        f"-theta*·delta = {_num(-res.theta_star * res.delta)}",
        file=sys.stderr,
    )
    buf = io.StringIO()
    write_validation_csv(res, buf)
    return buf.getvalue()


def cmd_evaluate(cfg: ExperimentConfig, policy_path) -> str:
    policy = _load_policy(policy_path, cfg)
    q = evaluate_policy(cfg.arrivals, cfg.params, policy, cfg.d_max, cfg.theta_cap)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["theta_star", "delta", "p_delay", "mean_service", "mean_arrival"])
    w.writerow([_num(q.theta_star), _num(q.delta), _num(q.p_delay), _num(q.mean_service),
                _num(mean_arrival_rate(cfg.arrivals))])
    return buf.getvalue()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dsaqos",
        description="LD-optimal sensing/transmitting policies for hardware-constrained DSA.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="experiment config (TOML)")
        p.add_argument("--out", help="output path (default: stdout; optimize: policy.txt)")
        p.add_argument("--theta-cap", type=float, help="exponent above which theta* is reported as inf")
        return p

    p = common(sub.add_parser("optimize", help="find the best policy with one algorithm"))
    p.add_argument("--algorithm", help="exhaustive, staircase, greedy, dp_throughput or dp_theta")
    common(sub.add_parser("sweep", help="optimize over the config's arrival scaling factors"))
    p = common(sub.add_parser("simulate", help="compare simulated delay tails with the LD estimate"))
    p.add_argument("--policy", help="policy matrix file")
    p.add_argument("--seed", type=int, help="override [sim].seed")
    p = common(sub.add_parser("evaluate", help="LD summary of a single policy"))
    p.add_argument("--policy", help="policy matrix file")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = parse_config(args.config)
        if args.theta_cap is not None:
            if not args.theta_cap > 0:
                raise CliError("--theta-cap must be positive")
            cfg = replace(cfg, theta_cap=args.theta_cap)
        if args.command == "optimize":
            sys.stdout.write(cmd_optimize(cfg, args.algorithm, args.out))
        elif args.command == "sweep":
            _emit(cmd_sweep(cfg), args.out)
        elif args.command == "simulate":
            _emit(cmd_simulate(cfg, args.policy, args.seed), args.out)
        else:
            _emit(cmd_evaluate(cfg, args.policy), args.out)
    except (CliError, ConfigError, RefusalError, InstabilityError, NumericalError) as exc:
        print(f"ERROR: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"ERROR: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
