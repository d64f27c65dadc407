"""Command-line entry point.

Subcommands: simulate, quenched, verify, record, replay, rate-probe,
decouple, moments.  Outputs are deterministic functions of the flags and
seeds.  Exit codes: 0 success, 1 failed verification (verify --exact, or
--strict with failing verdicts), 2 usage error, 3 I/O error, 4 malformed
event-log file.  Physics verdicts never change the exit code unless
--strict is given.
"""
from __future__ import annotations

import argparse
import os
import sys
from fractions import Fraction

from .config import load_config
from .estimators import (
    ExperimentPlan,
    InvalidPlan,
    ReplicaRow,
    decoupling_probe,
    rate_probe,
    run_annealed,
    run_quenched,
    sixth_moment_probe,
    write_json,
    write_rows_csv,
)
from .model import (
    LatticeSpec,
    ModelParams,
    SeedSpec,
    default_lattice,
    derive_stream,
    walk_seed,
)
from .oracle import sweep_identities
from .ssep import MalformedLog, generate_log_from_seed, read_log, write_log
from .walk import simulate_walk

EXIT_VERIFY_FAILED = 1
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_BAD_LOG = 4

_VERIFY_LAMBDAS = (Fraction(0), Fraction(1, 4), Fraction(1, 2), Fraction(1))
_VERIFY_RHOS = (Fraction(0), Fraction(1, 4), Fraction(1, 2),
                Fraction(3, 4), Fraction(1))


def _seed(text: str) -> int:
    return int(text, 0)


def _t_grid(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.split(","))


def _int_list(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.split(","))


def _json_path(csv_path: str) -> str:
    return os.path.splitext(csv_path)[0] + ".json"


def _add_common(p: argparse.ArgumentParser, with_lambda: bool = True) -> None:
    p.add_argument("--rho", type=float, default=None, help="particle density in [0,1]")
    if with_lambda:
        p.add_argument("--lambda", dest="lam", type=float, default=None,
                       help="slowdown in [0,1]")
    p.add_argument("--T", dest="horizon", type=float, default=None,
                   help="time horizon")
    p.add_argument("--L", dest="lattice", type=int, default=None,
                   help="lattice size (default max(4096, 16 sqrt(T)))")
    p.add_argument("--seed", type=_seed, default=None,
                   help="master seed (decimal or 0x hex)")
    p.add_argument("--workers", type=int, default=None,
                   help="worker processes for replicas (default 1)")


def _merge_config(args: argparse.Namespace, parser: argparse.ArgumentParser) -> None:
    """Fill unset flags from --config; flags given on the command line win."""
    if getattr(args, "config", None) is None:
        return
    try:
        cfg = load_config(args.config)
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        raise SystemExit(EXIT_IO)
    except ValueError as exc:
        parser.error(str(exc))
    for name in ("rho", "lam", "horizon", "lattice", "replicas", "seed", "out",
                 "environments", "walks_per_env", "epsilon", "t_grid",
                 "workers", "no_log"):
        if getattr(args, name, None) is None and getattr(cfg, name) is not None:
            setattr(args, name, getattr(cfg, name))


def _require(parser: argparse.ArgumentParser, args: argparse.Namespace,
             *names: str) -> None:
    flag = {"rho": "--rho", "lam": "--lambda", "horizon": "--T",
            "replicas": "--replicas", "out": "--out", "log_out": "--log-out",
            "log_in": "--log-in", "t_grid": "--t-grid", "epsilon": "--epsilon",
            "environments": "--environments", "walks_per_env": "--walks-per-env",
            "box_size": "--H", "separations": "--separations"}
    for name in names:
        if getattr(args, name, None) is None:
            parser.error(f"missing required flag {flag.get(name, '--' + name)}")


def _print_report(report) -> None:
    for e in report.entries:
        target = "-" if e.target is None else f"{e.target:.6g}"
        print(f"{e.quantity:<24} {e.estimate: .6g}  se={e.se:.3g}  "
              f"target={target}  {e.verdict}")
    if report.ks_pvalue is not None:
        print(f"{'ks_normal':<24} D={report.ks_statistic:.4g}  "
              f"p={report.ks_pvalue:.4g}")
    if report.winding_count:
        print(f"winding replicas excluded: {report.winding_count}")


def _plan_meta(plan: ExperimentPlan) -> dict:
    return {
        "mode": plan.mode,
        "rho": repr(plan.params.rho),
        "lambda": repr(plan.params.lam),
        "T": repr(plan.horizon),
        "L": plan.lattice.size,
        "replicas": plan.replicas,
        "environments": plan.environments,
        "walks_per_env": plan.walks_per_env,
        "seed": f"0x{plan.master_seed:x}",
    }


def _cmd_simulate(args, parser) -> int:
    _merge_config(args, parser)
    _require(parser, args, "rho", "lam", "horizon", "replicas", "out")
    params = ModelParams(args.rho, args.lam)
    lattice = LatticeSpec(args.lattice) if args.lattice else default_lattice(args.horizon)
    plan = ExperimentPlan(
        params=params, lattice=lattice, horizon=args.horizon,
        replicas=args.replicas, master_seed=args.seed or 0,
        workers=args.workers or 1,
    )
    report = run_annealed(plan)
    try:
        write_rows_csv(args.out, report.rows, _plan_meta(plan))
        write_json(_json_path(args.out), report.to_json_dict())
    except OSError as exc:
        print(f"error: cannot write output: {exc}", file=sys.stderr)
        return EXIT_IO
    _print_report(report)
    if args.strict and any(e.verdict == "FAIL" for e in report.entries):
        return 1
    return 0


def _cmd_quenched(args, parser) -> int:
    _merge_config(args, parser)
    _require(parser, args, "rho", "lam", "horizon", "out",
             "environments", "walks_per_env")
    params = ModelParams(args.rho, args.lam)
    lattice = LatticeSpec(args.lattice) if args.lattice else default_lattice(args.horizon)
    plan = ExperimentPlan(
        params=params, lattice=lattice, horizon=args.horizon,
        mode="quenched", environments=args.environments,
        walks_per_env=args.walks_per_env, master_seed=args.seed or 0,
        workers=args.workers or 1,
    )
    report = run_quenched(plan)
    try:
        write_rows_csv(args.out, report.rows, _plan_meta(plan))
        write_json(_json_path(args.out), report.to_json_dict())
    except OSError as exc:
        print(f"error: cannot write output: {exc}", file=sys.stderr)
        return EXIT_IO
    print(f"pooled occ mean {report.pooled_occ_mean:.6g} "
          f"(target {report.occ_target:.6g})")
    print(f"across-env std {report.across_env_std:.4g}, "
          f"mean within-env se {report.mean_within_env_se:.4g}")
    for e in report.envs:
        print(f"env {e.env_id:>3}: occ {e.occ_mean:.5f} +- {e.occ_se:.5f}  "
              f"y/T {e.y_mean: .5f}")
    if args.strict and abs(report.pooled_occ_mean - report.occ_target) > 0.05:
        return 1
    return 0


def _cmd_verify(args, parser) -> int:
    if args.n_max < 1 or args.ell_max < 1 or args.window < 1:
        parser.error("--n-max, --ell-max and --window must be >= 1")
    cases = sweep_identities(
        args.n_max, args.ell_max, args.window,
        _VERIFY_LAMBDAS, _VERIFY_RHOS, exact=args.exact,
    )
    tol = 0 if args.exact else 1e-12
    failures = 0
    json_cases = []
    for c in cases:
        if c.status == "ok":
            ok = (c.residual == 0) if args.exact else (abs(c.residual) <= tol)
            verdict = "PASS" if ok else "FAIL"
        else:
            ok = False
            verdict = c.status
        failures += 0 if ok else 1
        ell = "-" if c.ell is None else c.ell
        rho = "-" if c.rho is None else c.rho
        res = "-" if c.residual is None else c.residual
        print(f"{c.identity:<4} n={c.n} ell={ell} lambda={c.lam} rho={rho} "
              f"residual={res} {verdict}")
        json_cases.append({
            "identity": c.identity, "n": c.n,
            "ell": c.ell, "lambda": str(c.lam),
            "rho": None if c.rho is None else str(c.rho),
            "residual": None if c.residual is None else str(c.residual),
            "status": c.status, "verdict": verdict,
        })
    print(f"{len(cases) - failures}/{len(cases)} identities verified")
    if args.json_out:
        try:
            write_json(args.json_out, {
                "schema": "ssepwalk-verify 1",
                "exact": args.exact,
                "cases": json_cases,
            })
        except OSError as exc:
            print(f"error: cannot write output: {exc}", file=sys.stderr)
            return EXIT_IO
    return EXIT_VERIFY_FAILED if failures else 0


def _cmd_record(args, parser) -> int:
    _merge_config(args, parser)
    _require(parser, args, "rho", "horizon", "log_out")
    lattice = LatticeSpec(args.lattice) if args.lattice else default_lattice(args.horizon)
    log = generate_log_from_seed(
        args.rho, lattice, args.horizon,
        SeedSpec(args.seed or 0, args.stream_id),
    )
    try:
        write_log(log, args.log_out)
    except OSError as exc:
        print(f"error: cannot write log: {exc}", file=sys.stderr)
        return EXIT_IO
    print(f"wrote {len(log)} events to {args.log_out}")
    return 0


def _cmd_replay(args, parser) -> int:
    _require(parser, args, "log_in", "lam", "out")
    try:
        log = read_log(args.log_in)
    except MalformedLog as exc:
        print(f"error: malformed log: {exc}", file=sys.stderr)
        return EXIT_BAD_LOG
    except OSError as exc:
        print(f"error: cannot read log: {exc}", file=sys.stderr)
        return EXIT_IO
    params = ModelParams(log.rho, args.lam)
    master = args.seed if args.seed is not None else log.seed.master_seed
    stream = derive_stream(walk_seed(master, args.walk_index))
    real, acc = simulate_walk(log, params, stream)
    row = ReplicaRow(
        replica_id=args.walk_index,
        env_id=log.seed.stream_id,
        horizon=log.horizon,
        displacement=real.displacement,
        jump_count=real.jump_count,
        max_abs_position=real.max_abs_position,
        occ_integral=acc.occ_integral,
        qv_integral=acc.qv_integral,
        y_integral=acc.y_integral,
        winding_flag=int(real.winding_flag),
    )
    meta = {"mode": "replay", "rho": repr(log.rho), "lambda": repr(args.lam),
            "T": repr(log.horizon), "L": log.lattice.size,
            "seed": f"0x{master:x}", "log": os.path.basename(args.log_in)}
    try:
        write_rows_csv(args.out, [row], meta)
    except OSError as exc:
        print(f"error: cannot write output: {exc}", file=sys.stderr)
        return EXIT_IO
    print(f"X_T={real.displacement} jumps={real.jump_count} "
          f"occ/T={acc.occ_integral / log.horizon:.6f}")
    return 0


def _cmd_rate_probe(args, parser) -> int:
    _merge_config(args, parser)
    _require(parser, args, "rho", "lam", "t_grid", "replicas", "epsilon", "out")
    params = ModelParams(args.rho, args.lam)
    lattice = LatticeSpec(args.lattice) if args.lattice else default_lattice(max(args.t_grid))
    plan = ExperimentPlan(
        params=params, lattice=lattice, horizon=max(args.t_grid),
        replicas=args.replicas, master_seed=args.seed or 0,
        t_grid=args.t_grid, workers=args.workers or 1,
    )
    result = rate_probe(plan, args.epsilon)
    lines = ["t,replicas,exceed_count,p_hat,wilson_lo,wilson_hi"]
    for e in result.entries:
        print(f"t={e.t:<8g} P(|Y|/t >= {args.epsilon}) = {e.p_hat:.4f} "
              f"[{e.wilson95[0]:.4f}, {e.wilson95[1]:.4f}]")
        lines.append(f"{e.t!r},{e.replicas},{e.exceed_count},{e.p_hat!r},"
                     f"{e.wilson95[0]!r},{e.wilson95[1]!r}")
    print(f"non-increasing within CIs: {result.non_increasing_within_ci}")
    try:
        with open(args.out, "w", encoding="ascii") as fh:
            fh.write("\n".join(lines) + "\n")
        write_json(_json_path(args.out), result.to_json_dict())
    except OSError as exc:
        print(f"error: cannot write output: {exc}", file=sys.stderr)
        return EXIT_IO
    return 0


def _cmd_decouple(args, parser) -> int:
    _require(parser, args, "rho", "box_size", "separations", "replicas", "out")
    result = decoupling_probe(
        args.rho, args.box_size, list(args.separations),
        args.replicas, args.seed or 0, args.threshold, args.threshold,
    )
    lines = ["separation,replicas,covariance,se,ci_lo,ci_hi,f1_mean,f2_mean"]
    for e in result.entries:
        print(f"y={e.separation:<6} cov={e.covariance: .5f} +- {e.se:.5f}")
        lines.append(f"{e.separation},{e.replicas},{e.covariance!r},{e.se!r},"
                     f"{e.ci99[0]!r},{e.ci99[1]!r},{e.f1_mean!r},{e.f2_mean!r}")
    try:
        with open(args.out, "w", encoding="ascii") as fh:
            fh.write("\n".join(lines) + "\n")
        write_json(_json_path(args.out), result.to_json_dict())
    except OSError as exc:
        print(f"error: cannot write output: {exc}", file=sys.stderr)
        return EXIT_IO
    return 0


def _cmd_moments(args, parser) -> int:
    _merge_config(args, parser)
    _require(parser, args, "rho", "lam", "t_grid", "replicas", "out")
    params = ModelParams(args.rho, args.lam)
    lattice = LatticeSpec(args.lattice) if args.lattice else default_lattice(max(args.t_grid))
    plan = ExperimentPlan(
        params=params, lattice=lattice, horizon=max(args.t_grid),
        replicas=args.replicas, master_seed=args.seed or 0,
        t_grid=args.t_grid, workers=args.workers or 1,
    )
    result = sixth_moment_probe(plan)
    lines = ["t,replicas,ratio,se,ci_lo,ci_hi,poisson_bound,dominated"]
    for e in result.entries:
        print(f"t={e.t:<8g} E[X^6]/t^3 = {e.ratio:.4f} +- {e.se:.4f} "
              f"(bound {e.poisson_bound:.4f}) dominated={e.dominated}")
        lines.append(f"{e.t!r},{e.replicas},{e.ratio!r},{e.se!r},{e.ci99[0]!r},"
                     f"{e.ci99[1]!r},{e.poisson_bound!r},{int(e.dominated)}")
    print(f"bounded trend: {result.bounded_trend}")
    try:
        with open(args.out, "w", encoding="ascii") as fh:
            fh.write("\n".join(lines) + "\n")
        write_json(_json_path(args.out), result.to_json_dict())
    except OSError as exc:
        print(f"error: cannot write output: {exc}", file=sys.stderr)
        return EXIT_IO
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ssepwalk",
        description="Simulator and verification harness for a random walk "
                    "driven by symmetric exclusion.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="annealed experiment: R joint runs")
    _add_common(p)
    p.add_argument("--replicas", type=int, default=None)
    p.add_argument("--out", default=None, help="per-replica CSV path; a JSON "
                   "report is written next to it")
    p.add_argument("--no-log", action="store_true", default=None,
                   help="stream without retaining event logs (always the "
                   "case for simulate; see record)")
    p.add_argument("--config", default=None, help="key = value config file")
    p.add_argument("--strict", action="store_true",
                   help="exit 1 when a physics verdict fails")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("quenched", help="E environments, W walks on each")
    _add_common(p)
    p.add_argument("--replicas", type=int, default=None, help=argparse.SUPPRESS)
    p.add_argument("--environments", type=int, default=None)
    p.add_argument("--walks-per-env", dest="walks_per_env", type=int, default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--config", default=None)
    p.add_argument("--strict", action="store_true")
    p.set_defaults(func=_cmd_quenched)

    p = sub.add_parser("verify", help="exhaustive generator-identity checks")
    p.add_argument("--n-max", dest="n_max", type=int, required=True)
    p.add_argument("--ell-max", dest="ell_max", type=int, required=True)
    p.add_argument("--window", type=int, required=True,
                   help="max window radius a case may require")
    p.add_argument("--exact", action="store_true",
                   help="exact rational arithmetic; any nonzero residual "
                   "fails with exit 1")
    p.add_argument("--json-out", dest="json_out", default=None)
    p.set_defaults(func=_cmd_verify)

    p = sub.add_parser("record", help="write an environment event log")
    _add_common(p, with_lambda=False)
    p.add_argument("--stream-id", dest="stream_id", type=int, default=0)
    p.add_argument("--log-out", dest="log_out", default=None)
    p.add_argument("--config", default=None)
    p.set_defaults(func=_cmd_record)

    p = sub.add_parser("replay", help="run one walk over a recorded log")
    p.add_argument("--log-in", dest="log_in", default=None)
    p.add_argument("--lambda", dest="lam", type=float, default=None)
    p.add_argument("--seed", type=_seed, default=None,
                   help="walk master seed (default: the log's master seed)")
    p.add_argument("--walk-index", dest="walk_index", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_replay)

    p = sub.add_parser("rate-probe", help="P(|Y_t|/t >= eps) over a t-grid")
    _add_common(p)
    p.add_argument("--replicas", type=int, default=None)
    p.add_argument("--t-grid", dest="t_grid", type=_t_grid, default=None)
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--config", default=None)
    p.set_defaults(func=_cmd_rate_probe)

    p = sub.add_parser("decouple", help="box-functional covariance probe")
    p.add_argument("--rho", type=float, default=None)
    p.add_argument("--H", dest="box_size", type=int, default=None)
    p.add_argument("--separations", type=_int_list, default=None)
    p.add_argument("--replicas", type=int, default=None)
    p.add_argument("--threshold", type=float, default=None)
    p.add_argument("--seed", type=_seed, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_decouple)

    p = sub.add_parser("moments", help="sixth-moment ratio over a t-grid")
    _add_common(p)
    p.add_argument("--replicas", type=int, default=None)
    p.add_argument("--t-grid", dest="t_grid", type=_t_grid, default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--config", default=None)
    p.set_defaults(func=_cmd_moments)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args, parser)
    except (InvalidPlan, ValueError) as exc:
        parser.error(str(exc))
        return EXIT_USAGE  # unreachable; parser.error exits 2


if __name__ == "__main__":
    sys.exit(main())
