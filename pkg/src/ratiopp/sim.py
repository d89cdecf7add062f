"""Marked point process simulation.

Events of type i ∈ {0..3} carry a binary mark k and arrive with intensity

    λ^{i,k}(t) = λ₀(t) · λⁱ(X_t) · pᵢᵏ(Y_t),

where λ₀ is a deterministic baseline, X = (X⁰, X¹) drives the type
intensities, and Y drives the mark probabilities.  All covariates are
independent Ornstein-Uhlenbeck processes advanced by their exact Gaussian
transition (no Euler discretization), initialized at stationarity.
Sampling uses Lewis-Shedler thinning under a constant dominating rate.
"""

import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import expit

from . import kernels

N_TYPES = 4
N_MARKS = 2
N_CLASSES = N_TYPES * N_MARKS


@dataclass(frozen=True)
class OUParams:
    theta: float   # mean-reversion rate (1/time)
    xbar: float    # long-run mean
    sigma: float   # volatility (1/sqrt(time))

    def __post_init__(self):
        if not self.theta > 0:
            raise ValueError(f"theta must be > 0, got {self.theta}")
        if self.sigma < 0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")

    @property
    def stationary_std(self):
        return self.sigma / np.sqrt(2.0 * self.theta)


def ou_transition(state, dt, params, gauss):
    """Exact OU transition over dt: x̄ + (x−x̄)e^{−θdt} + σ√((1−e^{−2θdt})/2θ)·g."""
    state = np.asarray(state, dtype=np.float64)
    if not np.all(np.isfinite(state)):
        raise ValueError("non-finite OU state")
    decay = np.exp(-params.theta * dt)
    std = params.sigma * np.sqrt(-np.expm1(-2.0 * params.theta * dt) / (2.0 * params.theta))
    return params.xbar + (state - params.xbar) * decay + std * np.asarray(gauss)


@dataclass(frozen=True)
class GroundTruthModel:
    """Closed-form generative law: OU covariates, baseline, intensities, mark laws.

    `model_id` selects the functional family: "reference" is the built-in
    smooth model (see `reference_model`), "constant" has state-independent
    intensities/mark probabilities given by `const_lambdas`/`const_mark_p0`.
    """

    model_id: str
    ou_x: tuple
    ou_y: tuple
    baseline_id: str = "cosine"          # "cosine": 1 + cos(2πt); "unit": 1
    const_lambdas: tuple = None
    const_mark_p0: tuple = None

    def __post_init__(self):
        if self.model_id not in ("reference", "constant"):
            raise ValueError(f"unknown model_id {self.model_id!r}")
        if self.baseline_id not in ("cosine", "unit"):
            raise ValueError(f"unknown baseline_id {self.baseline_id!r}")
        if self.model_id == "constant":
            if self.const_lambdas is None or self.const_mark_p0 is None:
                raise ValueError("constant model needs const_lambdas and const_mark_p0")
            if len(self.const_lambdas) != N_TYPES or len(self.const_mark_p0) != N_TYPES:
                raise ValueError("constant model parameter lists must have length 4")
            if any(lam <= 0 for lam in self.const_lambdas):
                raise ValueError("intensities must be positive")
            if any(not 0.0 <= p <= 1.0 for p in self.const_mark_p0):
                raise ValueError("mark probabilities must lie in [0,1]")

    # -- baseline ---------------------------------------------------------
    def baseline(self, t):
        t = np.asarray(t, dtype=np.float64)
        if self.baseline_id == "cosine":
            return 1.0 + np.cos(2.0 * np.pi * t)
        return np.ones_like(t)

    @property
    def baseline_sup(self):
        return 2.0 if self.baseline_id == "cosine" else 1.0

    # -- type intensities -------------------------------------------------
    def intensity_matrix(self, x):
        """λⁱ(x) for every type; x has shape (n, 2)."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        n = x.shape[0]
        lam = np.empty((n, N_TYPES))
        if self.model_id == "constant":
            lam[:] = np.asarray(self.const_lambdas)
            return lam
        x0, x1 = x[:, 0], x[:, 1]
        lam[:, 0] = 2.0 + np.tanh(x0) * np.exp(-x1 ** 2)
        lam[:, 1] = 2.0 + np.cos(np.pi * x0) * np.tanh(x1)
        lam[:, 2] = 2.0 + np.sin(2.0 * np.pi * x0) * expit(x1)
        lam[:, 3] = 3.0 - np.exp(-x0 ** 2)
        return lam

    @property
    def intensity_sups(self):
        """Per-type suprema of λⁱ over the whole state space."""
        if self.model_id == "constant":
            return tuple(float(c) for c in self.const_lambdas)
        return (3.0, 3.0, 3.0, 3.0)

    # -- mark probabilities -------------------------------------------------
    def mark_p0_matrix(self, y):
        """pᵢ⁰(y) for every type; y has shape (n,)."""
        y = np.atleast_1d(np.asarray(y, dtype=np.float64))
        p = np.empty((y.shape[0], N_TYPES))
        if self.model_id == "constant":
            p[:] = np.asarray(self.const_mark_p0)
            return p
        p[:, 0] = 0.25
        p[:, 1] = 0.05 + 0.9 * np.abs(np.cos(np.pi * y))
        p[:, 2] = expit(y)
        p[:, 3] = 0.6 * np.exp(-y ** 2)
        return p

    def joint_probs(self, x, y):
        """p^{i,k}(x,y) = λⁱpᵢᵏ / Σλʲpⱼˡ as an (n, 8) matrix, classes 2i+k."""
        lam = self.intensity_matrix(x)
        p0 = self.mark_p0_matrix(y)
        w = np.empty((lam.shape[0], N_CLASSES))
        w[:, 0::2] = lam * p0
        w[:, 1::2] = lam * (1.0 - p0)
        return w / w.sum(axis=1, keepdims=True)


def true_intensity(model, i, x):
    """λⁱ(x) for a single type index and a single x = (x₀, x₁)."""
    if not 0 <= i < N_TYPES:
        raise ValueError(f"type index {i} out of range")
    return float(model.intensity_matrix(np.asarray(x)[None, :])[0, i])


def baseline_intensity(model, t):
    return float(model.baseline(t))


def mark_probability(model, i, k, y):
    """pᵢᵏ(y) for scalar indices; the two marks of a type sum to one."""
    if not 0 <= i < N_TYPES or k not in (0, 1):
        raise ValueError(f"invalid (type, mark) = ({i}, {k})")
    p0 = float(model.mark_p0_matrix(np.atleast_1d(y))[0, i])
    return p0 if k == 0 else 1.0 - p0


def true_joint_probability(model, x, y):
    """8-vector of conditional class probabilities at state (x, y)."""
    return model.joint_probs(np.asarray(x, dtype=np.float64)[None, :],
                             np.atleast_1d(y))[0]


def dominating_bound(model):
    """Constant M with λ₀(t)·Σᵢλⁱ(x) ≤ M everywhere (valid thinning rate)."""
    return model.baseline_sup * sum(model.intensity_sups)


def reference_model():
    """The built-in smooth ground truth used throughout the experiments."""
    return GroundTruthModel(
        model_id="reference",
        ou_x=(OUParams(0.1, 0.0, 0.1), OUParams(0.2, 0.0, 0.2)),
        ou_y=(OUParams(0.1, 0.0, 0.1),),
        baseline_id="cosine",
    )


def constant_model(lambdas=(1.0, 1.0, 1.0, 1.0), mark_p0=(0.5, 0.5, 0.5, 0.5),
                   baseline_id="unit"):
    """State-independent intensities and mark laws (calibration/oracle runs)."""
    return GroundTruthModel(
        model_id="constant",
        ou_x=(OUParams(0.1, 0.0, 0.1), OUParams(0.2, 0.0, 0.2)),
        ou_y=(OUParams(0.1, 0.0, 0.1),),
        baseline_id=baseline_id,
        const_lambdas=tuple(float(v) for v in lambdas),
        const_mark_p0=tuple(float(v) for v in mark_p0),
    )


@dataclass
class MarkedPointSample:
    """Event stream with left-limit covariates, plus an optional regular-grid
    covariate snapshot used for empirical quantiles."""

    T: float
    times: np.ndarray        # (n,) strictly increasing in (0, T]
    types: np.ndarray        # (n,) int
    marks: np.ndarray        # (n,) int
    covariates: np.ndarray   # (n, d_x + d_y) values just before each event
    d_x: int
    d_y: int
    n_types: int = N_TYPES
    seed: int = None
    shared_xy: bool = False  # mark features = full covariate vector (order-book data)
    grid_times: np.ndarray = None
    grid_covariates: np.ndarray = None

    @property
    def n_events(self):
        return self.times.shape[0]

    @property
    def labels(self):
        """Flat class index 2i + k per event."""
        return 2 * self.types + self.marks

    @property
    def x_features(self):
        return self.covariates if self.shared_xy else self.covariates[:, :self.d_x]

    @property
    def y_features(self):
        return self.covariates if self.shared_xy else self.covariates[:, self.d_x:]

    def class_counts(self):
        return np.bincount(self.labels, minlength=2 * self.n_types)

    def validate(self):
        if self.times.size:
            if not (np.all(np.diff(self.times) > 0) and self.times[0] > 0
                    and self.times[-1] <= self.T):
                raise ValueError("event times must be strictly increasing in (0, T]")
        if self.types.min(initial=0) < 0 or self.types.max(initial=0) >= self.n_types:
            raise ValueError("type index out of range")
        if not np.isin(self.marks, (0, 1)).all():
            raise ValueError("marks must be binary")
        return self


SNAPSHOT_STEP = 0.1


def simulate(model, horizon, seed):
    """Thinning under the constant dominating rate M = dominating_bound(model).

    Candidates form a Poisson(M) stream on (0, T]; all OU coordinates advance
    exactly through the merged candidate/snapshot time grid; a candidate at
    time t survives with probability λ₀(t)·Σᵢλⁱ(x_t)/M, then draws its type
    from λⁱ/Σλʲ and its mark from pᵢᵏ(y_t).  Deterministic given the seed.
    """
    if not horizon > 0:
        raise ValueError(f"horizon must be > 0, got {horizon}")
    rng = np.random.default_rng(seed)
    bound = dominating_bound(model)

    n_cand = rng.poisson(bound * horizon)
    cand_times = np.sort(rng.uniform(0.0, horizon, size=n_cand))
    grid_times = np.arange(0.0, horizon + 0.5 * SNAPSHOT_STEP, SNAPSHOT_STEP)

    all_times = np.concatenate([cand_times, grid_times])
    order = np.argsort(all_times, kind="stable")
    sorted_times = all_times[order]
    dts = np.diff(sorted_times, prepend=0.0)

    ou_all = tuple(model.ou_x) + tuple(model.ou_y)
    paths = np.empty((sorted_times.shape[0], len(ou_all)))
    for c, p in enumerate(ou_all):
        init = p.xbar + p.stationary_std * rng.standard_normal()
        gauss = rng.standard_normal(sorted_times.shape[0])
        paths[:, c] = kernels.active.ou_path(init, dts, gauss, p.theta, p.xbar, p.sigma)

    # undo the merge: rows of `paths` for candidates vs. snapshot grid
    inverse = np.empty_like(order)
    inverse[order] = np.arange(order.size)
    cand_cov = paths[inverse[:n_cand]]
    grid_cov = paths[inverse[n_cand:]]

    lam = model.intensity_matrix(cand_cov[:, :2])
    lam_tot = model.baseline(cand_times) * lam.sum(axis=1)
    ratio = lam_tot / bound
    if np.any(ratio > 1.0 + 1e-12):
        raise RuntimeError(f"dominating bound violated: max ratio {ratio.max():.6f}")

    accept = rng.uniform(size=n_cand) < ratio
    ev_times = cand_times[accept]
    ev_cov = cand_cov[accept]
    ev_lam = lam[accept]

    type_cdf = np.cumsum(ev_lam, axis=1)
    type_cdf /= type_cdf[:, -1:]
    u_type = rng.uniform(size=ev_times.shape[0])
    ev_types = (u_type[:, None] > type_cdf).sum(axis=1)

    p0 = model.mark_p0_matrix(ev_cov[:, 2])[np.arange(ev_times.shape[0]), ev_types]
    ev_marks = (rng.uniform(size=ev_times.shape[0]) >= p0).astype(np.int64)

    keep = np.ones(ev_times.shape[0], dtype=bool)  # guard against uniform ties
    keep[1:] = np.diff(ev_times) > 0
    keep &= ev_times > 0
    return MarkedPointSample(
        T=float(horizon),
        times=ev_times[keep],
        types=ev_types[keep].astype(np.int64),
        marks=ev_marks[keep],
        covariates=ev_cov[keep],
        d_x=2, d_y=1,
        n_types=N_TYPES,
        seed=seed,
        grid_times=grid_times,
        grid_covariates=grid_cov,
    ).validate()


# -- serialization ---------------------------------------------------------

CSV_HEADER = "time,type,mark,x0,x1,y"


def save_sample(sample, path):
    """Events CSV (17 significant digits) plus a JSON metadata sidecar; the
    snapshot grid, when present, goes to a companion `<stem>.grid.csv`."""
    path = Path(path)
    cols = [sample.times, sample.types, sample.marks] + \
        [sample.covariates[:, j] for j in range(sample.covariates.shape[1])]
    fmt = ["%.17g", "%d", "%d"] + ["%.17g"] * sample.covariates.shape[1]
    np.savetxt(path, np.column_stack(cols), fmt=fmt, delimiter=",",
               header=CSV_HEADER, comments="")
    meta = {
        "T": sample.T,
        "seed": sample.seed,
        "d_x": sample.d_x,
        "d_y": sample.d_y,
        "n_types": sample.n_types,
        "shared_xy": sample.shared_xy,
        "class_counts": sample.class_counts().tolist(),
    }
    path.with_suffix(path.suffix + ".meta.json").write_text(json.dumps(meta, indent=1))
    if sample.grid_times is not None:
        grid_cols = [sample.grid_times] + \
            [sample.grid_covariates[:, j] for j in range(sample.grid_covariates.shape[1])]
        np.savetxt(path.with_suffix(".grid.csv"), np.column_stack(grid_cols),
                   fmt="%.17g", delimiter=",", header=CSV_HEADER.replace("type,mark,", ""),
                   comments="")


def load_sample(path):
    path = Path(path)
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    meta = json.loads(path.with_suffix(path.suffix + ".meta.json").read_text())
    grid_path = path.with_suffix(".grid.csv")
    grid_times = grid_cov = None
    if grid_path.exists():
        grid = np.loadtxt(grid_path, delimiter=",", skiprows=1, ndmin=2)
        grid_times, grid_cov = grid[:, 0], grid[:, 1:]
    if data.size == 0:
        warnings.warn(f"no events in {path}")
        data = data.reshape(0, 3 + meta["d_x"] + meta["d_y"])
    return MarkedPointSample(
        T=float(meta["T"]),
        times=data[:, 0],
        types=data[:, 1].astype(np.int64),
        marks=data[:, 2].astype(np.int64),
        covariates=data[:, 3:],
        d_x=int(meta["d_x"]),
        d_y=int(meta["d_y"]),
        n_types=int(meta["n_types"]),
        seed=meta["seed"],
        shared_xy=bool(meta["shared_xy"]),
        grid_times=grid_times,
        grid_covariates=grid_cov,
    ).validate()
