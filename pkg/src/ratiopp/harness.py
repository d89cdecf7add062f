"""Experiment orchestration: single fits, convergence studies over horizons,
and robustness grids over network shapes.

Every study is driven by an :class:`ExperimentConfig`, runs its replication
tasks through an optional process pool, and persists deterministic CSV/JSON
artifacts (per-row ``results.csv``, ``aggregate.csv``, ``slopes.json``, and a
``config.json`` carrying the resolved configuration plus its hash).  Wall-time
columns are the only nondeterministic output fields.
"""

import dataclasses
import hashlib
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from functools import lru_cache
from dataclasses import dataclass, replace

import numpy as np

from . import sim
from .estimators import (
    TrainConfig,
    predict_joint,
    save_model_bundle,
    train_onestep,
    train_twostep,
)
from .metrics import (
    ErrorReport,
    empirical_risk_onestep,
    empirical_risk_twostep,
    grid_joint_errors,
    quantile_grid_from_sample,
    write_reports,
)
from .net import NetConfig

EVAL_SEED_OFFSET = 10 ** 6
METHODS = ("one-step", "two-step")
DEFAULT_HORIZONS = (1000.0, 2000.0, 4000.0, 8000.0, 16000.0)
MEASURES = ("eps_l2", "eps_linf", "risk")
PANEL_QUANTILES = (0.2, 0.4, 0.6, 0.8)
PANEL_POINTS = 101
AGGREGATE_HEADER = "method,T,nL,nN,eps_l2,eps_linf,risk"


@dataclass(frozen=True)
class ExperimentConfig:
    """Resolved settings for one study run."""

    kind: str = "convergence"
    horizons: tuple = DEFAULT_HORIZONS
    replications: int = 5
    depth_choices: tuple = (8,)
    width_choices: tuple = (64,)
    methods: tuple = METHODS
    # Studies fit at horizons up to 16k events-per-unit scale; two plateau
    # restarts with a halved step size are needed to push the optimization
    # error below the statistical error at the largest horizons.
    train: TrainConfig = TrainConfig(max_epochs=150, plateau_decays=2)
    base_seed: int = 0
    model_id: str = "reference"
    grid_points: int = 20
    workers: int = 1

    def __post_init__(self):
        if self.kind not in ("convergence", "robustness", "single-fit"):
            raise ValueError(f"unknown experiment kind {self.kind!r}")
        if not self.horizons or any(T <= 0 for T in self.horizons):
            raise ValueError("horizons must be positive")
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if not self.depth_choices or not self.width_choices:
            raise ValueError("network shape lists must be nonempty")
        if not self.methods or any(m not in METHODS for m in self.methods):
            raise ValueError(f"methods must be a nonempty subset of {METHODS}")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    def train_seed(self, rep):
        return self.base_seed + rep

    def eval_seed(self, rep):
        return self.train_seed(rep) + EVAL_SEED_OFFSET

    def to_dict(self):
        return dataclasses.asdict(self)

    def sha256(self):
        """Hash of everything that can affect results (worker count cannot)."""
        payload = self.to_dict()
        payload.pop("workers")
        blob = json.dumps(payload, sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()


def config_from_dict(blob):
    """Build an ExperimentConfig from a plain dict (e.g. a parsed JSON file)."""
    blob = dict(blob)
    train = blob.pop("train", None)
    kwargs = {}
    for f in dataclasses.fields(ExperimentConfig):
        if f.name in blob:
            value = blob.pop(f.name)
            if f.name in ("horizons", "depth_choices", "width_choices", "methods"):
                value = tuple(value)
            kwargs[f.name] = value
    if blob:
        raise ValueError(f"unknown config keys: {sorted(blob)}")
    if train is not None:
        kwargs["train"] = TrainConfig(**train)
    return ExperimentConfig(**kwargs)


def load_config(path):
    with open(path) as fh:
        return config_from_dict(json.load(fh))


@dataclass
class StudyResult:
    rows: list
    aggregates: list
    slopes: dict
    failures: list
    config_sha256: str


def fit_loglog_slope(horizons, values):
    """Ordinary least-squares slope of log(values) vs log(horizons).

    Returns (slope, stderr); stderr is the usual OLS standard error of the
    slope (NaN when there are only two points).
    """
    x = np.log(np.asarray(horizons, dtype=np.float64))
    y = np.log(np.asarray(values, dtype=np.float64))
    if x.size != y.size or x.size < 2:
        raise ValueError("need at least two (horizon, value) pairs")
    xbar = x.mean()
    sxx = float(((x - xbar) ** 2).sum())
    if sxx == 0.0:
        raise ValueError("horizons must not be all equal")
    slope = float(((x - xbar) * (y - y.mean())).sum() / sxx)
    intercept = float(y.mean() - slope * xbar)
    resid = y - (intercept + slope * x)
    dof = x.size - 2
    stderr = float(np.sqrt((resid ** 2).sum() / dof / sxx)) if dof > 0 else float("nan")
    return slope, stderr


# ---------------------------------------------------------------------------
# Replication tasks (module level so they pickle into worker processes)
# ---------------------------------------------------------------------------

def _limit_blas_threads():
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, "1")
    try:
        from threadpoolctl import threadpool_limits

        threadpool_limits(limits=1)
    except Exception:
        pass


def _truth_model(model_id):
    if model_id == "reference":
        return sim.reference_model()
    if model_id == "constant":
        return sim.constant_model()
    raise ValueError(f"unknown model_id {model_id!r}")


@lru_cache(maxsize=4)
def _sample_pair(model_id, horizon, seed):
    """Training and evaluation samples for one replication.

    Cached so that tasks sharing a replication (paired methods, shape grids)
    do not re-simulate; simulation itself is seed-deterministic, so cache hits
    cannot change results.
    """
    truth = _truth_model(model_id)
    return (sim.simulate(truth, horizon, seed=seed),
            sim.simulate(truth, horizon, seed=seed + EVAL_SEED_OFFSET))


def _net_configs(method, n_layers, width, sample):
    d = sample.d_x + sample.d_y
    if method == "one-step":
        return NetConfig(in_dim=d, out_dim=2 * sample.n_types - 1,
                         n_layers=n_layers, width=width)
    type_dim = d if sample.shared_xy else sample.d_x
    mark_dim = d if sample.shared_xy else max(sample.d_y, 1)
    return (NetConfig(in_dim=type_dim, out_dim=sample.n_types - 1,
                      n_layers=n_layers, width=width),
            NetConfig(in_dim=mark_dim, out_dim=1, n_layers=n_layers, width=width))


def fit_method(sample, method, n_layers, width, traincfg):
    """Train one estimator on a sample; returns (model, wall seconds)."""
    t0 = time.perf_counter()
    if method == "one-step":
        model = train_onestep(sample, netcfg=_net_configs(method, n_layers, width, sample),
                              traincfg=traincfg)
    elif method == "two-step":
        type_cfg, mark_cfg = _net_configs(method, n_layers, width, sample)
        model = train_twostep(sample, type_cfg=type_cfg, mark_cfg=mark_cfg,
                              traincfg=traincfg)
    else:
        raise ValueError(f"unknown method {method!r}")
    return model, time.perf_counter() - t0


def evaluate_model(model, method, truth, fresh, grid_points=20):
    """All three error measures of a fitted model against the truth."""
    grid = quantile_grid_from_sample(fresh, G=grid_points)
    eps_l2, eps_linf = grid_joint_errors(model, truth, grid, d_x=fresh.d_x)
    if method == "one-step":
        risk = empirical_risk_onestep(model, truth, fresh)
    else:
        risk = empirical_risk_twostep(model, truth, fresh)
    return eps_l2, eps_linf, risk


def _run_task(spec):
    """One (horizon, replication, method, shape) unit of work -> report dict."""
    truth = _truth_model(spec["model_id"])
    horizon = spec["horizon"]
    seed = spec["seed"]
    traincfg = TrainConfig(**spec["train"])
    sample, fresh = _sample_pair(spec["model_id"], horizon, seed)
    model, wall = fit_method(sample, spec["method"], spec["n_layers"],
                             spec["width"], traincfg)
    eps_l2, eps_linf, risk = evaluate_model(model, spec["method"], truth, fresh,
                                            grid_points=spec["grid_points"])
    return {"method": spec["method"], "T": float(horizon), "seed": seed,
            "nL": spec["n_layers"], "nN": spec["width"],
            "eps_l2": eps_l2, "eps_linf": eps_linf, "risk": risk, "wall_s": wall}


def _task_specs(config, horizons, shapes):
    specs = []
    for horizon in horizons:
        for n_layers, width in shapes:
            for rep in range(config.replications):
                for method in config.methods:
                    specs.append({
                        "model_id": config.model_id,
                        "horizon": float(horizon),
                        "seed": config.train_seed(rep),
                        "method": method,
                        "n_layers": int(n_layers),
                        "width": int(width),
                        "train": dataclasses.asdict(
                            replace(config.train, seed=config.train_seed(rep))),
                        "grid_points": config.grid_points,
                    })
    return specs


def _execute(specs, workers):
    """Run task specs (serially or in a process pool); collect rows/failures."""
    rows, failures = [], []

    def record(spec, outcome, error=None):
        if error is None:
            rows.append(outcome)
        else:
            failures.append({"method": spec["method"], "T": spec["horizon"],
                             "seed": spec["seed"], "nL": spec["n_layers"],
                             "nN": spec["width"], "error": error})

    if workers <= 1:
        for spec in specs:
            try:
                record(spec, _run_task(spec))
            except Exception as exc:  # noqa: BLE001 - record-and-skip policy
                record(spec, None, f"{type(exc).__name__}: {exc}")
    else:
        with ProcessPoolExecutor(max_workers=workers,
                                 initializer=_limit_blas_threads) as pool:
            futures = [(spec, pool.submit(_run_task, spec)) for spec in specs]
            for spec, fut in futures:
                try:
                    record(spec, fut.result())
                except Exception as exc:  # noqa: BLE001
                    record(spec, None, f"{type(exc).__name__}: {exc}")
    if len(failures) > 0.2 * len(specs):
        detail = "; ".join(f["error"] for f in failures[:3])
        raise RuntimeError(
            f"{len(failures)}/{len(specs)} replications failed (>20%): {detail}")
    return rows, failures


def _to_reports(rows):
    reports = [ErrorReport(**row) for row in rows]
    reports.sort(key=lambda r: (r.method, r.T, r.seed, r.nL, r.nN))
    return reports


def _aggregate(reports, key_fields):
    """Mean of each error measure over report rows sharing a group key."""
    groups = {}
    for r in reports:
        key = tuple(getattr(r, f) for f in key_fields)
        groups.setdefault(key, []).append(r)
    out = []
    for key in sorted(groups):
        members = groups[key]
        entry = dict(zip(key_fields, key))
        for measure in MEASURES:
            entry[measure] = float(np.mean([getattr(r, measure) for r in members]))
        entry["n_rows"] = len(members)
        out.append(entry)
    return out


def _write_aggregates(aggregates, path):
    with open(path, "w") as fh:
        fh.write(AGGREGATE_HEADER + "\n")
        for a in aggregates:
            fh.write(f"{a['method']},{a.get('T', 0.0):.17g},{a['nL']},{a['nN']},"
                     f"{a['eps_l2']:.17g},{a['eps_linf']:.17g},{a['risk']:.17g}\n")


def _write_json(payload, path):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _persist_common(config, out_dir, reports, failures):
    os.makedirs(out_dir, exist_ok=True)
    write_reports(reports, os.path.join(out_dir, "results.csv"))
    _write_json({"config": config.to_dict(), "config_sha256": config.sha256()},
                os.path.join(out_dir, "config.json"))
    if failures:
        _write_json(failures, os.path.join(out_dir, "failures.json"))


def run_convergence_study(config, out_dir):
    """Paired-sample study of both estimators across simulation horizons."""
    if len(config.horizons) < 3:
        raise ValueError("slope fitting needs at least 3 horizons")
    shape = (config.depth_choices[0], config.width_choices[0])
    specs = _task_specs(config, config.horizons, [shape])
    rows, failures = _execute(specs, config.workers)
    reports = _to_reports(rows)
    aggregates = _aggregate(reports, ("method", "T", "nL", "nN"))

    slopes = {}
    for method in config.methods:
        per_t = [a for a in aggregates if a["method"] == method]
        slopes[method] = {}
        for measure in MEASURES:
            slope, stderr = fit_loglog_slope([a["T"] for a in per_t],
                                             [a[measure] for a in per_t])
            slopes[method][measure] = {"slope": slope, "stderr": stderr}

    _persist_common(config, out_dir, reports, failures)
    _write_aggregates(aggregates, os.path.join(out_dir, "aggregate.csv"))
    _write_json({"config_sha256": config.sha256(), "slopes": slopes},
                os.path.join(out_dir, "slopes.json"))
    return StudyResult(rows=reports, aggregates=aggregates, slopes=slopes,
                       failures=failures, config_sha256=config.sha256())


def run_robustness_grid(config, out_dir):
    """Both estimators across every (depth, width) pair at one fixed horizon."""
    if len(config.horizons) != 1:
        raise ValueError("robustness grid runs at a single fixed horizon")
    shapes = [(nl, nn) for nl in config.depth_choices for nn in config.width_choices]
    specs = _task_specs(config, config.horizons, shapes)
    rows, failures = _execute(specs, config.workers)
    reports = _to_reports(rows)
    aggregates = _aggregate(reports, ("method", "T", "nL", "nN"))

    _persist_common(config, out_dir, reports, failures)
    _write_aggregates(aggregates, os.path.join(out_dir, "aggregate.csv"))
    lookup = {(a["method"], a["nL"], a["nN"]): a for a in aggregates}
    for method in config.methods:
        for measure in MEASURES:
            path = os.path.join(out_dir, f"heatmap_{measure}_{method}.csv")
            with open(path, "w") as fh:
                fh.write("nL," + ",".join(str(w) for w in config.width_choices) + "\n")
                for nl in config.depth_choices:
                    cells = [f"{lookup[(method, nl, nn)][measure]:.17g}"
                             for nn in config.width_choices]
                    fh.write(f"{nl}," + ",".join(cells) + "\n")
    return StudyResult(rows=reports, aggregates=aggregates, slopes={},
                       failures=failures, config_sha256=config.sha256())


# ---------------------------------------------------------------------------
# Single fit with learned-function panels
# ---------------------------------------------------------------------------

def _panel_axes(sample):
    """1%..99% x₀ line plus pinned-quantile values for x₁ and y."""
    source = sample.grid_covariates if sample.grid_covariates is not None \
        else sample.covariates
    lo, hi = np.quantile(source[:, 0], [0.01, 0.99])
    x0 = np.linspace(lo, hi, PANEL_POINTS)
    x1_q = np.quantile(source[:, 1], PANEL_QUANTILES)
    y_q = np.quantile(source[:, 2], PANEL_QUANTILES)
    return x0, x1_q, y_q


def _class_tag(c):
    return f"t{c // 2}_m{c % 2}"


def _panel_table(model, truth, x0, x1_val, y_val):
    """Per-class ratio curves (vs the reference class) plus probabilities."""
    n = x0.shape[0]
    x = np.column_stack([x0, np.full(n, x1_val)])
    y = np.full(n, y_val)
    p_hat = predict_joint(model, x, y)
    p_true = truth.joint_probs(x, y)
    l_hat = p_hat[:, 1:] / p_hat[:, :1]
    l_true = p_true[:, 1:] / p_true[:, :1]
    return p_hat, p_true, l_hat, l_true


def _write_panel_csv(path, x0, blocks):
    """blocks: list of (column prefix, (n, k) array, class offset)."""
    header = ["x0"]
    columns = [x0]
    for prefix, arr, offset in blocks:
        for j in range(arr.shape[1]):
            header.append(f"{prefix}_{_class_tag(j + offset)}")
            columns.append(arr[:, j])
    data = np.column_stack(columns)
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in data:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def run_single_fit(config, out_dir):
    """Fit each configured method once; emit model bundles and 4×4 panels.

    For every quantile pair (α, β) the panel CSVs trace x₀ ↦ ratio/probability
    curves at x₁ pinned to its α-quantile and y pinned to its β-quantile.
    """
    if len(config.horizons) != 1:
        raise ValueError("single fit uses exactly one horizon")
    truth = _truth_model(config.model_id)
    horizon = float(config.horizons[0])
    seed = config.train_seed(0)
    traincfg = replace(config.train, seed=seed)
    sample = sim.simulate(truth, horizon, seed=seed)
    fresh = sim.simulate(truth, horizon, seed=seed + EVAL_SEED_OFFSET)
    x0, x1_q, y_q = _panel_axes(sample)

    os.makedirs(out_dir, exist_ok=True)
    reports, models = [], {}
    n_layers, width = config.depth_choices[0], config.width_choices[0]
    for method in config.methods:
        model, wall = fit_method(sample, method, n_layers, width, traincfg)
        eps_l2, eps_linf, risk = evaluate_model(model, method, truth, fresh,
                                                grid_points=config.grid_points)
        reports.append(ErrorReport(method=method, T=horizon, seed=seed,
                                   nL=n_layers, nN=width, eps_l2=eps_l2,
                                   eps_linf=eps_linf, risk=risk, wall_s=wall))
        models[method] = model

        mdir = os.path.join(out_dir, method)
        fdir = os.path.join(mdir, "functions")
        pdir = os.path.join(mdir, "probabilities")
        os.makedirs(fdir, exist_ok=True)
        os.makedirs(pdir, exist_ok=True)
        save_model_bundle(model, os.path.join(mdir, "model"))
        for ai, alpha in enumerate(PANEL_QUANTILES):
            for bi, beta in enumerate(PANEL_QUANTILES):
                p_hat, p_true, l_hat, l_true = _panel_table(
                    model, truth, x0, x1_q[ai], y_q[bi])
                stem = f"panel_a{int(round(alpha * 100))}_b{int(round(beta * 100))}.csv"
                _write_panel_csv(os.path.join(fdir, stem), x0,
                                 [("lhat", l_hat, 1), ("ltrue", l_true, 1)])
                _write_panel_csv(os.path.join(pdir, stem), x0,
                                 [("phat", p_hat, 0), ("ptrue", p_true, 0)])

    reports.sort(key=lambda r: (r.method, r.T, r.seed, r.nL, r.nN))
    _persist_common(config, out_dir, reports, [])
    return models, StudyResult(rows=reports,
                               aggregates=_aggregate(reports, ("method", "T", "nL", "nN")),
                               slopes={}, failures=[],
                               config_sha256=config.sha256())
