"""Command-line entry point.

Exit codes: 0 success, 1 configuration error, 2 golden/assertion mismatch,
3 any other runtime failure.
"""
from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from ..game_core import ContractViolation
from ..schedules import ConfigurationError
from ..theory_oracle import (
    BoundInputs,
    NoPureSaddle,
    StructureMismatch,
    UnreachablePairs,
    estimate_covering_time,
    iterations_for_accuracy,
    log_linear_rate_bound,
    log_polynomial_rate_bound,
    nash_q_oracle,
)
from .config import load_config
from .golden import golden_trace
from .outputs import emit_outputs, read_csv, summarize, write_text
from .runner import compare_summaries, make_environment, run_experiment

EXIT_OK, EXIT_CONFIG, EXIT_MISMATCH, EXIT_RUNTIME = 0, 1, 2, 3


class Mismatch(AssertionError):
    pass


def _read_pairs(source: str) -> dict[str, str]:
    """``key=value`` pairs from a file, or inline separated by commas."""
    text = open(source, encoding="utf-8").read() if os.path.exists(source) else source.replace(",", "\n")
    out = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"expected key=value, got {line!r}")
        k, v = (p.strip() for p in line.split("=", 1))
        out[k] = v
    return out


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    out = args.out or os.path.splitext(os.path.basename(args.config))[0] + "-metrics"
    result = run_experiment(cfg, out, args.workers)
    for name, s in result.summaries.items():
        tr = list(s.seed_train_return.values())
        ew = list(s.seed_exec_win.values())
        line = f"{name}: seeds={len(cfg.seeds)}"
        if tr:
            line += f" train_return={np.mean(tr):.4f}"
        if ew:
            line += f" exec_win={np.mean(ew):.4f}"
        print(line)
    for line in result.report_lines():
        print(line)
    print(f"wrote {len(result.paths)} files under {out}")
    return EXIT_OK


def cmd_golden(args) -> int:
    report = golden_trace()
    for line in report.lines():
        print(line)
    if not report.ok:
        raise Mismatch(f"{len(report.mismatches)} golden mismatches")
    return EXIT_OK


def cmd_nash(args) -> int:
    cfg = load_config(args.config)
    env = make_environment(cfg)
    sol = nash_q_oracle(env, args.kind)
    print(f"nash-q oracle ({args.kind}), {sol.sweeps} sweeps, gamma={env.discount}")
    lines = ["agent,state,joint_action,q"]
    for j, q in enumerate(sol.q):
        for s in env.active_states():
            print(f"agent {j} state {s}: v*={sol.v[j][s]:.10g} equilibrium={sol.stage_policy[s]}")
            for ja in env.joint_actions():
                lines.append(f"{j},{s},{' '.join(map(str, ja))},{float(q[(s,) + ja]):.17g}")
    if args.csv:
        write_text(args.csv, "\n".join(lines) + "\n")
        print(f"wrote {args.csv}")
    return EXIT_OK


def cmd_covering(args) -> int:
    cfg = load_config(args.config)
    env = make_environment(cfg)
    sizes = env.action_sizes

    def uniform(s, rng):
        return [int(rng.integers(n)) for n in sizes]
    est = estimate_covering_time(env, uniform, args.trials, args.seed, args.cap)
    print(f"covering time over {args.trials} trials: L={est.L} mean={est.mean:.4f}")
    if args.csv:
        write_text(args.csv, "trial,steps\n" + "".join(f"{i},{n}\n" for i, n in enumerate(est.trials)))
        print(f"wrote {args.csv}")
    return EXIT_OK


_BOUND_FIELDS = {"L": float, "q_max": float, "num_states": int, "action_product": int,
                 "delta": float, "eps": float, "gamma": float, "omega": float, "psi": float}


def cmd_bounds(args) -> int:
    pairs = _read_pairs(args.params)
    unknown = sorted(set(pairs) - set(_BOUND_FIELDS))
    missing = sorted(k for k in ("L", "q_max", "num_states", "action_product", "delta", "eps", "gamma")
                     if k not in pairs)
    if unknown or missing:
        raise ConfigurationError(f"unknown keys {unknown}, missing keys {missing}")
    try:
        x = BoundInputs(**{k: _BOUND_FIELDS[k](v) for k, v in pairs.items()})
    except ValueError as exc:
        raise ConfigurationError(str(exc)) from exc
    lp, ll = log_polynomial_rate_bound(x), log_linear_rate_bound(x)
    m = iterations_for_accuracy(x.q_max, x.beta, x.eps)
    print(f"beta={x.beta:.6g} iterations_for_accuracy={m}")
    print(f"polynomial (omega={x.omega}): log T={lp:.10g} (T={np.exp(lp) if lp < 709 else float('inf'):.6g})")
    print(f"linear (psi={x.psi}): log T={ll:.10g} (T={np.exp(ll) if ll < 709 else float('inf'):.6g})")
    if args.csv:
        write_text(args.csv, f"quantity,value\niterations,{m}\nlog_polynomial,{lp:.17g}\nlog_linear,{ll:.17g}\n")
        print(f"wrote {args.csv}")
    return EXIT_OK


def cmd_report(args) -> int:
    root = args.metrics_dir
    if not os.path.isdir(root):
        raise ConfigurationError(f"no such metrics directory {root!r}")
    summaries = {}
    for d in sorted(os.listdir(root)):
        files = [os.path.join(root, d, f"{p}.csv") for p in ("training", "execution")]
        files = [f for f in files if os.path.exists(f)]
        if not files:
            continue
        recs = [r for f in files for r in read_csv(f)]
        summaries[d] = summarize(d, recs, args.agent, args.window)
    if not summaries:
        raise ConfigurationError(f"no metrics found under {root!r}")
    if args.baseline:
        if args.baseline not in summaries:
            raise ConfigurationError(f"unknown baseline {args.baseline!r}")
        summaries = {args.baseline: summaries[args.baseline],
                     **{k: v for k, v in summaries.items() if k != args.baseline}}
    tests = compare_summaries(summaries)
    lines = [f"{a} vs {b} [{m}]: t={r.t:.6g} df={r.df:.6g} p={r.p:.6g}" for (a, b, m), r in tests.items()]
    for name, s in summaries.items():
        print(f"{name}: seeds={len(s.seed_train_return) or len(s.seed_exec_win)}")
    for line in lines:
        print(line)
    paths = emit_outputs(root, list(summaries.values()), lines)
    print(f"wrote {len(paths)} files under {root}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="matlql", description="Two-level multi-agent Q-learning from advisors")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment config")
    r.add_argument("config")
    r.add_argument("--out", help="metrics directory (default: <config>-metrics)")
    r.add_argument("--workers", type=int, default=None)
    r.set_defaults(func=cmd_run)

    g = sub.add_parser("golden-trace", help="replay the scripted toy-grid trace")
    g.set_defaults(func=cmd_golden)

    n = sub.add_parser("nash-oracle", help="solve a game for its Nash Q values")
    n.add_argument("config")
    n.add_argument("--kind", default="identical-interest", choices=["identical-interest", "zero-sum-pure-saddle"])
    n.add_argument("--csv")
    n.set_defaults(func=cmd_nash)

    c = sub.add_parser("covering-time", help="estimate covering time under a uniform policy")
    c.add_argument("config")
    c.add_argument("--trials", type=int, default=100)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--cap", type=int, default=1_000_000)
    c.add_argument("--csv")
    c.set_defaults(func=cmd_covering)

    b = sub.add_parser("bounds", help="evaluate the convergence-rate expressions")
    b.add_argument("params", help="file of key=value lines or inline 'L=10,q_max=10,...'")
    b.add_argument("--csv")
    b.set_defaults(func=cmd_bounds)

    rep = sub.add_parser("report", help="re-aggregate a metrics directory")
    rep.add_argument("metrics_dir")
    rep.add_argument("--agent", type=int, default=0)
    rep.add_argument("--window", type=int, default=100)
    rep.add_argument("--baseline")
    rep.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        return args.func(args)
    except (ConfigurationError, ContractViolation, StructureMismatch, FileNotFoundError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (Mismatch, AssertionError) as exc:
        print(f"mismatch: {exc}", file=sys.stderr)
        return EXIT_MISMATCH
    except (NoPureSaddle, UnreachablePairs) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
