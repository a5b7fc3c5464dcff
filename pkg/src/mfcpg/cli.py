"""Command line entry point.

    mfcpg solve CONFIG
    mfcpg exact-pg CONFIG [--rho R|auto] [--k-max K] [--eps-rel E] [--out DIR]
    mfcpg model-free-pg CONFIG [--seed S | --seeds S1,S2,...] [--threads T] [--out DIR]
    mfcpg estimate-grad CONFIG [--seed S] [--threads T] [--out DIR]
    mfcpg check CONFIG [--seed S]
    mfcpg constants CONFIG [--level L] [--level-hat LH]

Exit codes: 0 success, 2 config error, 3 numerical error, 4 divergence.
"""

import argparse
import os
import sys

import numpy as np

from .config import ConfigError, parse_config
from .csvio import fmt, write_csv
from .linalg import ConvergenceError, DimensionError, RiccatiError, StabilityError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_DIVERGED = 0, 2, 3, 4


class Divergence(Exception):
    pass


def _threads(v):
    if v == "auto":
        return os.cpu_count() or 1
    n = int(v)
    if n < 1:
        raise argparse.ArgumentTypeError("threads must be >= 1")
    return n


def _seed(v):
    s = int(v, 0)
    if not 0 <= s < 2**64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return s


def _seeds(v):
    return [_seed(x) for x in v.split(",") if x.strip()]


def _rho(v):
    return v if v == "auto" else float(v)


def _build_parser():
    ap = argparse.ArgumentParser(prog="mfcpg", description="Policy gradient for LQ mean-field control.")
    sub = ap.add_subparsers(dest="cmd", required=True)

    def add(name, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("config")
        sp.add_argument("--seed", type=_seed, default=None)
        sp.add_argument("--out", default=".")
        sp.add_argument("--threads", type=_threads, default=1)
        return sp

    add("solve", "print the analytic solution")
    sp = add("exact-pg", "model-based gradient descent trace")
    sp.add_argument("--rho", type=_rho, default=None)
    sp.add_argument("--k-max", type=int, default=None)
    sp.add_argument("--eps-rel", type=float, default=None)
    sp = add("model-free-pg", "model-free policy gradient run(s)")
    sp.add_argument("--seeds", type=_seeds, default=None)
    sp.add_argument("--rho", type=float, default=None, help="constant step overriding the schedule")
    sp.add_argument("--k-max", type=int, default=None)
    sp.add_argument("--eps", type=float, default=0.05)
    add("estimate-grad", "one zeroth-order gradient estimate at theta0")
    add("check", "run the oracle suite")
    sp = add("constants", "level-set constants report")
    sp.add_argument("--level", type=float, default=None)
    sp.add_argument("--level-hat", type=float, default=None)
    return ap


def _flat(a, prefix):
    a = np.asarray(a)
    return [f"{prefix}_{i}{j}" for i in range(a.shape[0]) for j in range(a.shape[1])]


def _require_theta0(cfg):
    if cfg.theta0 is None:
        raise ConfigError(["theta0 and zeta0 are required for this command"])
    return cfg.theta0


def _sim_config(cfg, seed, threads):
    from .popsim import SimConfig

    r = cfg.run
    return SimConfig(T=r["T"], n=r["n"], N=r["N"], seed=seed, entropy_mode=r["entropy_mode"], threads=threads)


def _grad_config(cfg, seed, threads):
    from .zograd import GradConfig

    r = cfg.run
    return GradConfig(r=r["r"], Ntilde=r["Ntilde"], sim=_sim_config(cfg, seed, threads),
                      smoothing_dim=r["smoothing_dim"])


def cmd_solve(cfg, args, out):
    from .model import solve_optimal

    sol = solve_optimal(cfg.model)
    lines = [
        ("theta*", sol.theta_opt), ("zeta*", sol.zeta_opt), ("K", sol.K), ("Lambda", sol.Lambda),
        ("J1*", sol.J1_opt), ("J2*", sol.J2_opt), ("upsilon", sol.upsilon), ("J*", sol.J_opt),
    ]
    for name, v in lines:
        v = np.asarray(v)
        txt = fmt(float(v.reshape(-1)[0])) if v.size == 1 else np.array2string(v, precision=10)
        print(f"{name} = {txt}", file=out)
    return EXIT_OK


def _gd_rows(trace, p):
    rows = []
    for rec in trace.records:
        rows.append([rec.k, *rec.theta.ravel(), *rec.zeta.ravel(), rec.J1, rec.J2, rec.J,
                     rec.grad_norm_theta, rec.grad_norm_zeta, rec.J_err_rel])
    return rows


def cmd_exact_pg(cfg, args, out):
    from .exact_pg import exact_gd

    p = cfg.model
    pol = _require_theta0(cfg)
    rho = args.rho if args.rho is not None else "auto"
    k_max = args.k_max if args.k_max is not None else cfg.run["k_max"]
    try:
        trace = exact_gd(pol, p, rho=rho, k_max=k_max, eps_rel=args.eps_rel)
    except StabilityError as exc:
        if "iterate" in str(exc):
            raise Divergence(f"exact_pg.exact_gd: StabilityError: {exc}") from None
        raise
    header = ["k", *_flat(pol.theta, "theta"), *_flat(pol.zeta, "zeta"),
              "J1", "J2", "J", "grad_norm_theta", "grad_norm_zeta", "J_err_rel"]
    path = os.path.join(args.out, "exact_pg.csv")
    write_csv(path, header, _gd_rows(trace, p))
    print(f"rho = {fmt(trace.rho)}; {len(trace.records) - 1} iterations; "
          f"final J_err_rel = {fmt(trace.last.J_err_rel)}; wrote {path}", file=out)
    return EXIT_OK


def _mf_header(pol):
    return ["k", *_flat(pol.theta, "theta"), *_flat(pol.zeta, "zeta"), "jpop", "jpop_ma10",
            "ghat_norm_theta", "ghat_norm_zeta", "rho", "J", "J_err_rel"]


def _mf_rows(trace):
    from .pgloop import moving_average

    ma = moving_average([r.jpop for r in trace.records], 10)
    return [[r.k, *r.theta.ravel(), *r.zeta.ravel(), r.jpop, ma[i], r.grad_norm_theta,
             r.grad_norm_zeta, r.rho, r.J, r.J_err_rel] for i, r in enumerate(trace.records)]


def cmd_model_free_pg(cfg, args, out):
    from .pgloop import MFRunConfig, StepSchedule, multi_seed_study

    p = cfg.model
    pol = _require_theta0(cfg)
    base_seed = args.seed if args.seed is not None else cfg.run["seed"]
    seeds = args.seeds if args.seeds is not None else [base_seed]
    sched = (StepSchedule.constant(args.rho) if args.rho is not None
             else StepSchedule(tuple(map(tuple, cfg.run["rho_schedule"]))))
    k_max = args.k_max if args.k_max is not None else cfg.run["k_max"]
    mf = MFRunConfig(theta0=pol, schedule=sched, k_max=k_max, gc=_grad_config(cfg, base_seed, args.threads))
    study = multi_seed_study(mf, p, seeds, eps=args.eps)
    failed = []
    for s, tr in zip(seeds, study["traces"]):
        path = os.path.join(args.out, f"model_free_pg_seed{s}.csv")
        write_csv(path, _mf_header(pol), _mf_rows(tr))
        if tr.error:
            failed.append(f"seed {s}: {tr.error}")
    rows = [[s, ratio, int(ok)] for s, ratio, ok in zip(seeds, study["final_ratio"], study["success"])]
    write_csv(os.path.join(args.out, "model_free_pg_summary.csv"), ["seed", "final_gap_ratio", "success"], rows)
    print(f"{study['successes']}/{len(seeds)} seeds reached gap ratio <= {args.eps}", file=out)
    if failed:
        raise Divergence("pgloop.model_free_pg: OverflowError: " + "; ".join(failed))
    return EXIT_OK


def cmd_estimate_grad(cfg, args, out):
    from .exact_pg import gradient
    from .zograd import estimate_gradient

    p = cfg.model
    pol = _require_theta0(cfg)
    seed = args.seed if args.seed is not None else cfg.run["seed"]
    gc = _grad_config(cfg, seed, args.threads)
    try:
        est = estimate_gradient(pol, p, gc)
    except OverflowError as exc:
        raise Divergence(f"zograd.estimate_gradient: OverflowError: {exc}") from None
    rows = [[i, np.linalg.norm(est.U[i]), np.linalg.norm(est.V[i]), est.per_episode_costs[i]]
            for i in range(len(est.per_episode_costs))]
    write_csv(os.path.join(args.out, "estimate_grad_episodes.csv"), ["i", "norm_U", "norm_V", "jpop"], rows)
    header = [*_flat(pol.theta, "g_theta"), *_flat(pol.zeta, "g_zeta")]
    row = [*est.g_theta.ravel(), *est.g_zeta.ravel()]
    try:
        g1, g2 = gradient(pol, p)
        header += [*_flat(pol.theta, "exact_theta"), *_flat(pol.zeta, "exact_zeta")]
        row += [*g1.ravel(), *g2.ravel()]
    except StabilityError:
        pass
    write_csv(os.path.join(args.out, "estimate_grad.csv"), header, [row])
    print(f"g_theta = {np.array2string(est.g_theta)}, g_zeta = {np.array2string(est.g_zeta)}", file=out)
    return EXIT_OK


def cmd_check(cfg, args, out):
    from .oracles import run_checks

    seed = args.seed if args.seed is not None else cfg.run["seed"]
    results = run_checks(cfg.model, sim=_sim_config(cfg, seed, args.threads), seed=seed)
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}", file=out)
    return EXIT_OK if all(ok for _, ok, _ in results) else EXIT_NUMERIC


def cmd_constants(cfg, args, out):
    from .exact_pg import constants, cost

    p = cfg.model
    if args.level is None or args.level_hat is None:
        c0 = cost(_require_theta0(cfg), p)
    lv = args.level if args.level is not None else c0.J1
    lvh = args.level_hat if args.level_hat is not None else c0.J2
    cs = constants(lv, lvh, p)
    for name in cs.__dataclass_fields__:
        print(f"{name} = {fmt(getattr(cs, name))}", file=out)
    print(f"kappa_tilde = {fmt(cs.kappa_tilde)}", file=out)
    return EXIT_OK


COMMANDS = {
    "solve": (cmd_solve, "model.solve_optimal"),
    "exact-pg": (cmd_exact_pg, "exact_pg.exact_gd"),
    "model-free-pg": (cmd_model_free_pg, "pgloop.model_free_pg"),
    "estimate-grad": (cmd_estimate_grad, "zograd.estimate_gradient"),
    "check": (cmd_check, "oracles.run_checks"),
    "constants": (cmd_constants, "exact_pg.constants"),
}


def run(argv=None, out=None, err=None):
    """Run one command; returns the exit status."""
    out = out or sys.stdout
    err = err or sys.stderr
    args = _build_parser().parse_args(argv)
    fn, where = COMMANDS[args.cmd]
    try:
        cfg = parse_config(args.config)
    except ConfigError as exc:
        for prob in exc.problems:
            print(f"cli.parse_config: ConfigError: {prob}", file=err)
        return EXIT_CONFIG
    try:
        os.makedirs(args.out, exist_ok=True)
        return fn(cfg, args, out)
    except ConfigError as exc:
        print(f"cli.parse_config: ConfigError: {exc}", file=err)
        return EXIT_CONFIG
    except Divergence as exc:
        print(str(exc), file=err)
        return EXIT_DIVERGED
    except OverflowError as exc:
        print(f"{where}: OverflowError: {exc}", file=err)
        return EXIT_DIVERGED
    except (StabilityError, RiccatiError, ConvergenceError, DimensionError, ValueError,
            np.linalg.LinAlgError) as exc:
        print(f"{where}: {type(exc).__name__}: {exc}", file=err)
        return EXIT_NUMERIC


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
