"""Command line interface.

Verbs:
  analyze     spectral quantities, guaranteed rates, tail bounds (no simulation)
  simulate    one traced protocol run
  montecarlo  many trials: rate estimates, tail probabilities, full report
  gamma       exact second-moment transition matrix report
  verify      structural proof checks over seeded runs
  code-bench  anytime-exponent measurement for a code ensemble

The output directory comes from --outdir, else the
ERASURE_CONSENSUS_OUTDIR environment variable, else
./erasure-consensus-out.  Every verb writes machine-readable files that
embed the config hash; figures are written by default and --no-plots
turns them off.  Exit status: 0 success, 1 a verification check failed,
2 invalid arguments or configuration.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from .analysis import (
    asym_limit_mse,
    coding_gain_check,
    gamma_exact,
    guaranteed_rate_anytime,
    guaranteed_rate_degree,
    guaranteed_rate_strict,
    tail_bound_anytime,
    tail_bound_degree,
    tail_bound_edgecount,
    uncoded_sym_rate,
)
from .checks import (
    check_no_wait_loops,
    find_witness,
    verify_witness,
    wasted_round_dominator,
)
from .errors import (
    DominationViolated,
    ErasureConsensusError,
    InternalConsistencyError,
    LoopDetected,
    TooManyEdges,
    WitnessNotFound,
)
from .experiments import (
    ExperimentConfig,
    canonical_hash,
    emit_report,
    run_experiment,
    trial_seed,
)
from .protocols import run_repetition, run_treecode, run_uncoded
from .spectral import spectral_summary
from .treecode import CodeParams, measure_beta

DEFAULT_OUTDIR_ENV = "ERASURE_CONSENSUS_OUTDIR"


# ----------------------------------------------------------------------
# Argument plumbing.


def _float_or_auto(text: str):
    if text == "auto":
        return "auto"
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(
            f'expected a float or "auto", got {text!r}'
        ) from None


def _x0_spec(text: str):
    if text == "e1":
        return "e1"
    try:
        return tuple(float(tok) for tok in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(
            f'expected "e1" or comma-separated floats, got {text!r}'
        ) from None


def _float_list(text: str):
    try:
        return tuple(float(tok) for tok in text.split(",") if tok)
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"expected comma-separated floats, got {text!r}"
        ) from None


def _add_common(sp, protocol: bool = True, trials: int | None = 1000):
    sp.add_argument("--graph", required=True,
                    help='graph spec: "path:N", "cycle:N", "complete:N", '
                         '"star:N", "grid:RxC", "er:N:Q:SEED", or a JSON file')
    sp.add_argument("--mode", choices=("symmetric", "asymmetric"),
                    default="symmetric", help="erasure model (default symmetric)")
    sp.add_argument("-p", "--erasure-prob", type=float, default=0.0,
                    dest="p", help="per-packet erasure probability")
    sp.add_argument("--eps", type=_float_or_auto, default="auto",
                    help='step size, or "auto" for the optimal one')
    if protocol:
        sp.add_argument("--protocol",
                        choices=("uncoded", "repetition", "treecode"),
                        default="uncoded")
        sp.add_argument("--lambda-bits", type=int, default=72,
                        help="tree-code frame payload bits")
        sp.add_argument("--n-packets", type=int, default=3,
                        help="tree-code packets per frame (rate 1/n)")
        sp.add_argument("--code-seed", type=int, default=1,
                        help="tree-code ensemble seed")
    sp.add_argument("--rounds", type=int, default=50)
    if trials is not None:
        sp.add_argument("--trials", type=int, default=trials)
    sp.add_argument("--seed", type=int, default=0, help="master seed")
    sp.add_argument("--x0", type=_x0_spec, default="e1",
                    help='initial values: "e1" (node 0 holds N) or '
                         "comma-separated floats")
    sp.add_argument("--outdir", default=None,
                    help=f"output directory (default ${DEFAULT_OUTDIR_ENV} "
                         "or ./erasure-consensus-out)")
    sp.add_argument("--plots", action=argparse.BooleanOptionalAction,
                    default=True, help="write figures (default on)")


def _config_from(args, protocol: bool = True, trials: int = 0) -> ExperimentConfig:
    kwargs = dict(
        graph_spec=args.graph,
        mode=args.mode,
        p=args.p,
        eps=args.eps,
        rounds=args.rounds,
        trials=getattr(args, "trials", trials),
        seed=args.seed,
        x0=args.x0,
    )
    if protocol:
        kwargs.update(
            protocol=args.protocol,
            lambda_bits=args.lambda_bits,
            n_packets=args.n_packets,
            code_seed=args.code_seed,
        )
    return ExperimentConfig(**kwargs)


def _outdir(args) -> Path:
    raw = args.outdir or os.environ.get(DEFAULT_OUTDIR_ENV) or "erasure-consensus-out"
    path = Path(raw)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_json(path: Path, obj) -> None:
    with open(path, "w", newline="\n") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_csv(path: Path, config_hash: str, header: str, rows) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(f"# config_hash={config_hash}\n")
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(
                f"{c:.12g}" if isinstance(c, float) else str(c) for c in row
            ) + "\n")


def _bound_dict(report) -> dict:
    out = dataclasses.asdict(report)
    for key in ("value", "value_raw", "exponent", "threshold_rate"):
        if isinstance(out[key], float) and not math.isfinite(out[key]):
            out[key] = str(out[key])
    return out


# ----------------------------------------------------------------------
# Verbs.


def cmd_analyze(args) -> int:
    cfg = _config_from(args, protocol=False)
    g = cfg.graph()
    eps = cfg.eps_value(g)
    summary = spectral_summary(g, eps)
    rates = {
        "rate_degree": guaranteed_rate_degree(cfg.p, g),
        "rate_strict": guaranteed_rate_strict(cfg.p, g),
        "edge_threshold": (1.0 - cfg.p) ** g.edge_count,
    }
    if args.beta is not None:
        rates["rate_anytime"] = guaranteed_rate_anytime(args.beta, g)
    bounds = []
    by_name: dict[str, list[float]] = {"degree": [], "edge count": []}
    if args.beta is not None:
        by_name["anytime"] = []
    for r_prime in args.r_grid:
        b1 = tail_bound_degree(g, cfg.rounds, r_prime, cfg.p)
        b2 = tail_bound_edgecount(g, cfg.rounds, r_prime, cfg.p)
        row = {"r_prime": r_prime, "degree": _bound_dict(b1),
               "edgecount": _bound_dict(b2)}
        by_name["degree"].append(b1.value if b1.decaying else float("nan"))
        by_name["edge count"].append(b2.value if b2.decaying else float("nan"))
        if args.beta is not None:
            b3 = tail_bound_anytime(g, cfg.rounds, r_prime, args.beta)
            row["anytime"] = _bound_dict(b3)
            by_name["anytime"].append(b3.value if b3.decaying else float("nan"))
        bounds.append(row)
    out = {
        "config": cfg.to_json(),
        "config_hash": cfg.config_hash(),
        "graph": {
            "spec": cfg.graph_spec,
            "n_nodes": g.n_nodes,
            "edge_count": g.edge_count,
            "max_degree": g.max_degree,
            "diameter": g.diameter,
        },
        "spectral": {
            "eigenvalues": list(summary.eigenvalues),
            "lambda_max": summary.lambda_max,
            "fiedler": summary.fiedler,
            "eps": summary.eps,
            "eps_star": summary.eps_star,
            "mu": summary.mu,
        },
        "rates": rates,
        "bounds": bounds,
    }
    if cfg.p > 0.0:
        try:
            out["coding_gain"] = dataclasses.asdict(coding_gain_check(g, eps, cfg.p))
        except TooManyEdges:
            out["coding_gain"] = None
    outdir = _outdir(args)
    _write_json(outdir / "analysis.json", out)
    print(f"mu = {summary.mu:.6g} at eps = {eps:.6g} (eps* = {summary.eps_star:.6g})")
    print(f"guaranteed rates: degree {rates['rate_degree']:.6g}, "
          f"strict {rates['rate_strict']:.6g}, "
          f"edge threshold {rates['edge_threshold']:.6g}"
          + (f", anytime {rates['rate_anytime']:.6g}"
             if "rate_anytime" in rates else ""))
    if args.plots:
        from . import plots as plots_mod

        thresholds = {"R(p)": rates["rate_degree"],
                      "(1-p)^E": rates["edge_threshold"]}
        if "rate_anytime" in rates:
            thresholds["R(beta)"] = rates["rate_anytime"]
        plots_mod.save_bounds_plot(
            outdir / "bounds.png", np.array(args.r_grid),
            {name: np.array(vals) for name, vals in by_name.items()},
            thresholds,
        )
    print(f"wrote {outdir / 'analysis.json'}")
    return 0


def cmd_simulate(args) -> int:
    cfg = _config_from(args)
    g = cfg.graph()
    eps = cfg.eps_value(g)
    x0 = cfg.x0_vector(g)
    seed_used = trial_seed(cfg.seed, args.trial)
    if cfg.protocol == "uncoded":
        run = run_uncoded(g, eps, cfg.model(), x0, cfg.rounds, seed_used)
    elif cfg.protocol == "repetition":
        run = run_repetition(g, eps, cfg.p, x0, cfg.rounds, seed=seed_used)
    else:
        run = run_treecode(
            g, eps, cfg.p, x0, cfg.rounds, cfg.code_params(),
            seed=seed_used, mode=cfg.mode,
            horizon_cap=max(cfg.rounds, 512),
        )
    outdir = _outdir(args)
    h = cfg.config_hash()
    _write_csv(
        outdir / "trace.csv", h, "round,node,value,n_v",
        (
            (t, v, float(run.value_hist[t, v]), int(run.n_hist[t, v]))
            for t in range(cfg.rounds + 1)
            for v in range(g.n_nodes)
        ),
    )
    _write_json(outdir / "run.json", {
        "config": cfg.to_json(),
        "config_hash": h,
        "trial": args.trial,
        "seed_used": seed_used,
        "target": run.target,
        "min_rate": run.min_rate,
        "final_values": [float(v) for v in run.final_values],
        "final_err": float(run.err_hist[-1]),
    })
    print(f"final err = {run.err_hist[-1]:.6g}, "
          f"min iterations = {int(np.min(run.n_hist[-1]))}/{cfg.rounds}")
    if args.plots:
        from . import plots as plots_mod

        plots_mod.save_values_plot(
            outdir / "values.png", run.value_hist, target=run.target
        )
    print(f"wrote {outdir / 'run.json'}")
    return 0


def cmd_montecarlo(args) -> int:
    cfg = _config_from(args)
    result = run_experiment(cfg, r_prime_grid=args.r_grid, beta=args.beta)
    outdir = _outdir(args)
    paths = emit_report(result, outdir, plots=args.plots)
    for row in result.rate_rows:
        print(f"{row.quantity}: predicted {row.predicted:.6g}, "
              f"empirical {row.empirical:.6g} "
              f"[{row.ci_lo:.6g}, {row.ci_hi:.6g}]")
    print(f"{cfg.trials} trials in {result.wall_time_s:.2f}s; "
          f"wrote {paths['report']}")
    return 0


def cmd_gamma(args) -> int:
    cfg = _config_from(args, protocol=False)
    g = cfg.graph()
    eps = cfg.eps_value(g)
    ga = gamma_exact(g, eps, cfg.p, cfg.mode)
    outdir = _outdir(args)
    h = cfg.config_hash()
    dim = ga.gamma.shape[0]
    _write_csv(
        outdir / "gamma.csv", h, "row,col,value",
        (
            (i, j, float(ga.gamma[i, j]))
            for i in range(dim)
            for j in range(dim)
        ),
    )
    out = {
        "config": cfg.to_json(),
        "config_hash": h,
        "mode": cfg.mode,
        "eps": eps,
        "p": cfg.p,
        "n_nodes": g.n_nodes,
        "dim": dim,
    }
    if cfg.mode == "symmetric":
        lam2 = ga.lambda2_magnitude
        out["lambda2"] = lam2
        out["sqrt_lambda2"] = uncoded_sym_rate(ga)
        print(f"lambda2 = {lam2:.12g}, per-round rms factor {out['sqrt_lambda2']:.12g}")
    else:
        limit = asym_limit_mse(ga, cfg.x0_vector(g))
        out["limit_mse"] = limit
        print(f"limiting mean squared deviation = {limit:.12g}")
    _write_json(outdir / "gamma.json", out)
    if args.plots:
        from . import plots as plots_mod

        plots_mod.save_gamma_heatmap(outdir / "heatmap.png", ga.gamma)
    print(f"wrote {outdir / 'gamma.json'}")
    return 0


def cmd_verify(args) -> int:
    cfg = _config_from(args, protocol=False)
    cfg = dataclasses.replace(cfg, protocol="repetition")
    g = cfg.graph()
    eps = cfg.eps_value(g)
    x0 = cfg.x0_vector(g)
    failures: list[dict] = []
    pairs_checked = 0
    loops_checked = 0
    domination_checked = 0
    longest_chain = 0
    for k in range(args.runs):
        run = run_repetition(
            g, eps, cfg.p, x0, cfg.rounds, seed=trial_seed(cfg.seed, k)
        )
        try:
            report = check_no_wait_loops(run)
            longest_chain = max(longest_chain, report.longest_chain)
        except (LoopDetected, InternalConsistencyError) as exc:
            failures.append({"check": "wait_loops", "run": k, "message": str(exc)})
        loops_checked += 1
        for v in range(g.n_nodes):
            try:
                wasted_round_dominator(run, v)
            except (DominationViolated, InternalConsistencyError) as exc:
                failures.append({
                    "check": "domination", "run": k, "node": v,
                    "message": str(exc),
                })
            domination_checked += 1
            for t in range(1, cfg.rounds + 1):
                try:
                    verify_witness(run, find_witness(run, v, t))
                except (WitnessNotFound, InternalConsistencyError) as exc:
                    failures.append({
                        "check": "witness", "run": k, "node": v, "round": t,
                        "message": str(exc),
                    })
                pairs_checked += 1
    ok = not failures
    out = {
        "config": cfg.to_json(),
        "config_hash": cfg.config_hash(),
        "runs": args.runs,
        "checks": {
            "witness": {"pairs_checked": pairs_checked},
            "wait_loops": {
                "runs_checked": loops_checked,
                "longest_chain": longest_chain,
            },
            "domination": {"node_runs_checked": domination_checked},
        },
        "failures": failures,
        "ok": ok,
    }
    outdir = _outdir(args)
    _write_json(outdir / "verify.json", out)
    print(f"witness: {pairs_checked} (node, round) pairs verified")
    print(f"wait loops: {loops_checked} runs, longest cause chain {longest_chain}")
    print(f"domination: {domination_checked} (run, node) checks")
    if ok:
        print(f"all checks passed; wrote {outdir / 'verify.json'}")
        return 0
    for f in failures[:10]:
        print(f"FAIL {f}", file=sys.stderr)
    print(f"{len(failures)} failures; wrote {outdir / 'verify.json'}",
          file=sys.stderr)
    return 1


def cmd_code_bench(args) -> int:
    params = CodeParams(
        lambda_bits=args.lambda_bits,
        n_packets=args.n_packets,
        ensemble_seed=args.code_seed,
    )
    est = measure_beta(
        params, args.p, args.rounds, args.trials, args.seed,
        min_failures=args.min_failures,
    )
    h = canonical_hash({
        "lambda_bits": args.lambda_bits,
        "n_packets": args.n_packets,
        "code_seed": args.code_seed,
        "p": args.p,
        "rounds": args.rounds,
        "trials": args.trials,
        "seed": args.seed,
        "min_failures": args.min_failures,
    })
    outdir = _outdir(args)
    _write_csv(outdir / "beta.csv", h, "delay,n_obs,failures,p_hat", est.rows)
    _write_json(outdir / "beta.json", {
        "config_hash": h,
        "beta_hat": est.beta_hat,
        "d0": est.d0,
        "r_squared": est.r_squared,
        "fit_range": list(est.fit_range),
        "lambda_bits": args.lambda_bits,
        "n_packets": args.n_packets,
        "code_seed": args.code_seed,
        "p": args.p,
        "rounds": args.rounds,
        "trials": args.trials,
        "min_failures": args.min_failures,
    })
    print(f"beta_hat = {est.beta_hat:.6g} bits/round "
          f"(d0 = {est.d0:.3g}, R^2 = {est.r_squared:.4f})")
    if args.plots:
        from . import plots as plots_mod

        plots_mod.save_beta_plot(outdir / "beta.png", est)
    print(f"wrote {outdir / 'beta.json'}")
    return 0


# ----------------------------------------------------------------------
# Parser.


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="erasure-consensus",
        description="Average consensus over packet-erasure networks: "
                    "simulation, spectral analysis, and bound evaluation.",
    )
    sub = parser.add_subparsers(dest="verb", required=True)

    sp = sub.add_parser("analyze", help="spectral summary and tail bounds")
    _add_common(sp, protocol=False, trials=None)
    sp.add_argument("--beta", type=float, default=None,
                    help="anytime exponent for the third bound family")
    sp.add_argument("--r-grid", type=_float_list,
                    default=tuple(round(0.05 * i, 2) for i in range(1, 20)),
                    help="comma-separated nominal rates for bound tables")
    sp.set_defaults(func=cmd_analyze)

    sp = sub.add_parser("simulate", help="one traced run")
    _add_common(sp, trials=None)
    sp.add_argument("--trial", type=int, default=0,
                    help="trial index to replay (seed derivation)")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("montecarlo", help="trial ensemble with estimates")
    _add_common(sp)
    sp.add_argument("--r-grid", type=_float_list, default=(),
                    help="nominal rates for tail-probability estimates")
    sp.add_argument("--beta", type=float, default=None,
                    help="measured anytime exponent for bound comparisons")
    sp.set_defaults(func=cmd_montecarlo)

    sp = sub.add_parser("gamma", help="exact second-moment matrix report")
    _add_common(sp, protocol=False, trials=None)
    sp.set_defaults(func=cmd_gamma)

    sp = sub.add_parser("verify", help="proof-oracle checks on seeded runs")
    _add_common(sp, protocol=False, trials=None)
    sp.add_argument("--runs", type=int, default=100,
                    help="number of seeded runs to check")
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("code-bench", help="measure the anytime exponent")
    sp.add_argument("--lambda-bits", type=int, default=72)
    sp.add_argument("--n-packets", type=int, default=3)
    sp.add_argument("--code-seed", type=int, default=1)
    sp.add_argument("-p", "--erasure-prob", type=float, required=True, dest="p")
    sp.add_argument("--rounds", type=int, default=60, help="decoding horizon")
    sp.add_argument("--trials", type=int, default=2000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--min-failures", type=int, default=10,
                    help="minimum observed failures for a delay to enter the fit")
    sp.add_argument("--outdir", default=None)
    sp.add_argument("--plots", action=argparse.BooleanOptionalAction, default=True)
    sp.set_defaults(func=cmd_code_bench)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, ErasureConsensusError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
