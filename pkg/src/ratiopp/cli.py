"""Command-line entry points: simulation, fitting, studies, bound reports,
and order-book fits.

Subcommands: ``simulate``, ``fit``, ``evaluate``, ``convergence``,
``robustness``, ``bounds``, ``lob-fit``, plus the ``lob-synth`` helper that
writes a synthetic order-flow CSV with a known conditional law.
"""

import argparse
import dataclasses
import json
import os
import sys
import time

import numpy as np

from . import harness, lob, sim, theory
from .estimators import (
    OneStepModel,
    load_model_bundle,
    predict_joint,
)
from .metrics import ErrorReport, empirical_binned_probs, write_reports

LOB_CELLS = tuple((sgn, spread) for sgn in (-1.0, 1.0) for spread in (1.0, 2.0, 3.0))
LOB_CURVE_POINTS = 101
LOB_OVERLAY_BINS = 20


def _study_config(args, kind, defaults):
    """Resolve an ExperimentConfig from --config plus command-line overrides."""
    if args.config:
        cfg = harness.load_config(args.config)
        if cfg.kind != kind:
            cfg = dataclasses.replace(cfg, kind=kind)
    else:
        cfg = harness.ExperimentConfig(kind=kind, **defaults)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, base_seed=args.seed)
    if args.workers is not None:
        cfg = dataclasses.replace(cfg, workers=args.workers)
    return cfg


def _add_study_flags(p):
    p.add_argument("--config", help="JSON file with experiment settings")
    p.add_argument("--seed", type=int, default=None, help="base seed override")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--workers", type=int, default=None,
                   help="process-pool size (default 1 = serial)")


def _cmd_simulate(args):
    model = harness._truth_model(args.model)
    sample = sim.simulate(model, args.horizon, seed=args.seed)
    os.makedirs(os.path.dirname(os.path.abspath(args.out)), exist_ok=True)
    sim.save_sample(sample, args.out)
    print(f"wrote {sample.n_events} events over T={sample.T:g} to {args.out}")
    return 0


def _cmd_fit(args):
    defaults = {"horizons": (args.horizon,), "replications": 1,
                "methods": (args.method,) if args.method != "both"
                else harness.METHODS}
    cfg = _study_config(args, "single-fit", defaults)
    cfg = dataclasses.replace(cfg, horizons=(args.horizon,),
                              methods=(args.method,) if args.method != "both"
                              else harness.METHODS)
    _, result = harness.run_single_fit(cfg, args.out)
    for row in result.rows:
        print(f"{row.method}: eps_l2={row.eps_l2:.4f} eps_linf={row.eps_linf:.4f} "
              f"risk={row.risk:.4f} ({row.wall_s:.1f}s)")
    return 0


def _cmd_evaluate(args):
    model = load_model_bundle(args.model)
    method = "one-step" if isinstance(model, OneStepModel) else "two-step"
    sample = sim.load_sample(args.input)
    truth = harness._truth_model(args.truth)
    eps_l2, eps_linf, risk = harness.evaluate_model(
        model, method, truth, sample, grid_points=args.grid_points)
    shape = model.net.config if method == "one-step" else model.type_net.config
    report = ErrorReport(method=method, T=sample.T, seed=sample.seed or 0,
                         nL=shape.n_layers, nN=shape.width, eps_l2=eps_l2,
                         eps_linf=eps_linf, risk=risk, wall_s=0.0)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        write_reports([report], os.path.join(args.out, "results.csv"))
    print(json.dumps({"method": method, "T": sample.T, "eps_l2": eps_l2,
                      "eps_linf": eps_linf, "risk": risk}, indent=2))
    return 0


def _cmd_convergence(args):
    cfg = _study_config(args, "convergence", {})
    result = harness.run_convergence_study(cfg, args.out)
    for method, measures in sorted(result.slopes.items()):
        parts = ", ".join(f"{m}: {v['slope']:.3f}±{v['stderr']:.3f}"
                          for m, v in sorted(measures.items()))
        print(f"{method} slopes — {parts}")
    if result.failures:
        print(f"{len(result.failures)} replication(s) failed "
              f"(see failures.json)", file=sys.stderr)
    return 0


def _cmd_robustness(args):
    defaults = {"horizons": (8000.0,), "depth_choices": (2, 8),
                "width_choices": (16, 64)}
    cfg = _study_config(args, "robustness", defaults)
    result = harness.run_robustness_grid(cfg, args.out)
    for a in result.aggregates:
        print(f"{a['method']} nL={a['nL']} nN={a['nN']}: "
              f"eps_l2={a['eps_l2']:.4f} risk={a['risk']:.4f}")
    return 0


def _default_bounds_params():
    return {
        "smoothness": {"betas": [2.0, 1.0], "ts": [2.0, 1.0]},
        "horizons": list(harness.DEFAULT_HORIZONS),
        "net_size": {"depth": 8, "widths": [3] + [64] * 8 + [7],
                     "sparsity": 33991, "delta": 0.001},
        "tail": {"p": 2.0, "q": 1.0, "C": 1.0, "B": 1.0, "k": 1},
        "compatibility": {"x0": 0.5, "x1": 2.0},
    }


def bounds_report(params=None):
    """Evaluate the five theoretical quantities for a parameter set."""
    p = _default_bounds_params()
    for key, value in (params or {}).items():
        if key not in p:
            raise ValueError(f"unknown bounds section {key!r}")
        if isinstance(p[key], dict):
            p[key] = {**p[key], **value}
        else:
            p[key] = value

    spec = theory.SmoothnessSpec(betas=tuple(p["smoothness"]["betas"]),
                                 ts=tuple(p["smoothness"]["ts"]))
    size = theory.NetSizeSpec(depth=int(p["net_size"]["depth"]),
                              widths=tuple(int(w) for w in p["net_size"]["widths"]),
                              sparsity=int(p["net_size"]["sparsity"]),
                              delta=float(p["net_size"]["delta"]))
    t = p["tail"]
    compat = theory.compatibility_constants(p["compatibility"]["x0"],
                                            p["compatibility"]["x1"])
    return {
        "parameters": p,
        "effective_smoothness": list(theory.effective_smoothness(spec.betas)),
        "rate_phi": {str(int(T)): theory.rate_phi(float(T), spec)
                     for T in p["horizons"]},
        "covering_log_bound": theory.covering_bound(size),
        "tail_bound": {
            "closed_form": theory.tail_integral_bound(t["p"], t["q"], t["C"],
                                                      t["B"], t["k"]),
            "quadrature": theory.tail_integral_quadrature(t["p"], t["q"],
                                                          t["C"], t["B"]),
        },
        "compatibility_constants": {"lower": compat[0], "upper": compat[1]},
    }


def _cmd_bounds(args):
    params = None
    if args.config:
        with open(args.config) as fh:
            params = json.load(fh)
    report = bounds_report(params)
    blob = json.dumps(report, indent=2, sort_keys=True)
    if args.out:
        os.makedirs(os.path.dirname(os.path.abspath(args.out)), exist_ok=True)
        with open(args.out, "w") as fh:
            fh.write(blob + "\n")
    print(blob)
    return 0


def _cmd_lob_synth(args):
    events = lob.synthesize_lob_stream(args.horizon, seed=args.seed)
    os.makedirs(os.path.dirname(os.path.abspath(args.out)), exist_ok=True)
    lob.save_lob_csv(events, args.out)
    print(f"wrote {events.timestamp_us.shape[0]} order-book events to {args.out}")
    return 0


def _lob_cell_tag(sgn, spread):
    return f"x1{int(sgn):+d}_x2{int(spread)}"


def write_lob_curves(model, sample, out_dir):
    """Fitted probability curves over x₀ per (last sign, spread) cell, plus
    20-bin empirical frequencies for overlay."""
    os.makedirs(out_dir, exist_ok=True)
    x0 = np.linspace(-1.0, 1.0, LOB_CURVE_POINTS)
    files = []
    for sgn, spread in LOB_CELLS:
        pts = np.column_stack([x0, np.full_like(x0, sgn), np.full_like(x0, spread)])
        p_hat = predict_joint(model, pts)
        tag = _lob_cell_tag(sgn, spread)
        curve_path = os.path.join(out_dir, f"curves_{tag}.csv")
        with open(curve_path, "w") as fh:
            fh.write("x0," + ",".join(
                f"p_t{c // 2}_m{c % 2}" for c in range(p_hat.shape[1])) + "\n")
            for j in range(x0.shape[0]):
                fh.write(f"{x0[j]:.17g}," +
                         ",".join(f"{v:.17g}" for v in p_hat[j]) + "\n")
        binned = empirical_binned_probs(sample, axis=0, n_bins=LOB_OVERLAY_BINS,
                                        conditioning={1: sgn, 2: spread},
                                        bin_range=(-1.0, 1.0))
        bins_path = os.path.join(out_dir, f"bins_{tag}.csv")
        with open(bins_path, "w") as fh:
            fh.write("bin_center,count," + ",".join(
                f"p_t{c // 2}_m{c % 2}" for c in range(binned.freqs.shape[1])) + "\n")
            for j in range(binned.centers.shape[0]):
                fh.write(f"{binned.centers[j]:.17g},{int(binned.counts[j])}," +
                         ",".join(f"{v:.17g}" for v in binned.freqs[j]) + "\n")
        files.extend([curve_path, bins_path])
    return files


def _cmd_lob_fit(args):
    sessions = []
    rejected = 0
    for path in args.input:
        events = lob.load_lob_csv(path)
        cov = lob.compute_covariates(events, tick_size=args.tick_size)
        rejected += cov.n_rejected
        sessions.append(lob.to_marked_sample(events, covariates=cov,
                                             tick_size=args.tick_size))
    sample = lob.merge_sessions(sessions)

    if args.config:
        traincfg = harness.load_config(args.config).train
    else:
        # Long-horizon order-flow fits benefit from lr step-downs once the
        # validation loss plateaus.
        traincfg = harness.TrainConfig(max_epochs=400, patience=5,
                                       plateau_decays=5)
    traincfg = dataclasses.replace(traincfg, seed=args.seed)
    t0 = time.perf_counter()
    model, wall = harness.fit_method(sample, args.method, args.depth,
                                     args.width, traincfg)
    os.makedirs(args.out, exist_ok=True)
    from .estimators import save_model_bundle

    save_model_bundle(model, os.path.join(args.out, "model"))
    files = write_lob_curves(model, sample, args.out)
    summary = {"method": args.method, "n_sessions": len(sessions),
               "n_events": int(sample.n_events), "n_rejected": int(rejected),
               "T": sample.T, "train_wall_s": wall,
               "total_wall_s": time.perf_counter() - t0}
    with open(os.path.join(args.out, "report.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"fit {args.method} on {sample.n_events} events "
          f"({len(sessions)} session(s)); wrote {len(files)} curve files")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="ratiopp",
        description="Marked-point-process ratio estimation toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate a marked event stream")
    p.add_argument("--horizon", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="events CSV path")
    p.add_argument("--model", choices=("reference", "constant"),
                   default="reference")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("fit", help="single fit with learned-function panels")
    p.add_argument("--horizon", type=float, default=8000.0)
    p.add_argument("--method", choices=("one-step", "two-step", "both"),
                   default="both")
    _add_study_flags(p)
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("evaluate", help="score a saved model on a sample")
    p.add_argument("--model", required=True, help="model bundle directory")
    p.add_argument("--input", required=True, help="events CSV from `simulate`")
    p.add_argument("--truth", choices=("reference", "constant"),
                   default="reference")
    p.add_argument("--grid-points", type=int, default=20)
    p.add_argument("--out", default=None, help="optional report directory")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("convergence", help="error decay across horizons")
    _add_study_flags(p)
    p.set_defaults(func=_cmd_convergence)

    p = sub.add_parser("robustness", help="error grid across network shapes")
    _add_study_flags(p)
    p.set_defaults(func=_cmd_robustness)

    p = sub.add_parser("bounds", help="report theoretical bound values")
    p.add_argument("--config", default=None, help="JSON parameter overrides")
    p.add_argument("--out", default=None, help="optional JSON output path")
    p.set_defaults(func=_cmd_bounds)

    p = sub.add_parser("lob-synth", help="synthetic order-flow CSV")
    p.add_argument("--horizon", type=float, default=100000.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_lob_synth)

    p = sub.add_parser("lob-fit", help="fit order-flow probabilities from CSV")
    p.add_argument("--input", nargs="+", required=True,
                   help="one or more session CSVs")
    p.add_argument("--method", choices=("one-step", "two-step"), required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", default=None,
                   help="JSON experiment config (train section is used)")
    p.add_argument("--tick-size", type=float, default=1.0)
    p.add_argument("--depth", type=int, default=8, help="hidden layers per net")
    p.add_argument("--width", type=int, default=64, help="units per hidden layer")
    p.set_defaults(func=_cmd_lob_fit)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
