"""Evaluation measures for fitted class-probability models.

Empirical risk 𝓡_T compares held-out log-probabilities against the
generating model's closed forms (the common baseline factor cancels), so a
truth-plugged predictor scores exactly zero.  Uniform errors are computed on
a regular grid spanning the 1%-99% empirical quantiles of each covariate:
ε_L² sums per-class root-mean-square deviations over the grid, ε_L∞ takes
the worst pointwise deviation.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .estimators import OneStepModel, OracleJointModel, TwoStepModel, predict_joint
from .net import softmax_pinned
from scipy.special import expit


@dataclass(frozen=True)
class GridSpec:
    axes: tuple  # per-covariate arrays of G+1 nondecreasing points

    @property
    def cardinality(self):
        n = 1
        for a in self.axes:
            n *= a.shape[0]
        return n

    def points(self):
        """All grid points as an (cardinality, n_axes) array."""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.column_stack([m.ravel() for m in mesh])


def quantile_grid(draws_per_axis, G):
    """Regular grid of G+1 points per axis between the 1% and 99% empirical
    quantiles (linear-interpolation convention)."""
    if G < 1:
        raise ValueError("G must be >= 1")
    axes = []
    for draws in draws_per_axis:
        draws = np.asarray(draws, dtype=np.float64)
        if draws.shape[0] < 100:
            raise ValueError(f"need >= 100 draws per axis, got {draws.shape[0]}")
        lo, hi = np.quantile(draws, [0.01, 0.99])
        if lo == hi:
            warnings.warn("degenerate covariate axis: single repeated grid point")
            axes.append(np.full(G + 1, lo))
        else:
            axes.append(lo + np.arange(G + 1) * (hi - lo) / G)
    return GridSpec(axes=tuple(axes))


def quantile_grid_from_sample(sample, G=20):
    """Grid built from the sample's covariate snapshot (events as fallback)."""
    source = sample.grid_covariates if sample.grid_covariates is not None \
        else sample.covariates
    return quantile_grid([source[:, j] for j in range(source.shape[1])], G)


def grid_errors(pred, truth):
    """(ε_L², ε_L∞): summed per-class RMS over the grid, and max deviation."""
    diff = np.asarray(pred, dtype=np.float64) - np.asarray(truth, dtype=np.float64)
    eps_l2 = float(np.sqrt(np.mean(diff ** 2, axis=0)).sum())
    eps_linf = float(np.abs(diff).max())
    return eps_l2, eps_linf


def _grid_predictions(model, pts, d_x):
    if isinstance(model, OneStepModel):
        return predict_joint(model, pts)
    if isinstance(model, TwoStepModel):
        return predict_joint(model, pts[:, :d_x], pts[:, d_x:])
    if isinstance(model, OracleJointModel):
        return model.joint(pts[:, :d_x], pts[:, d_x:].ravel())
    raise TypeError(f"cannot evaluate {type(model).__name__}")


def grid_joint_errors(model, truth, grid, d_x=2):
    """Uniform errors of the model's joint probabilities against the truth."""
    pts = grid.points()
    p_true = truth.joint_probs(pts[:, :d_x], pts[:, d_x:].ravel())
    p_hat = _grid_predictions(model, pts, d_x)
    return grid_errors(p_hat, p_true)


def _event_log_probs(p, labels, what):
    sel = p[np.arange(labels.shape[0]), labels]
    if np.any(sel <= 0.0):
        raise RuntimeError(f"zero predicted probability in {what}")
    return np.log(sel)


def empirical_risk_onestep(model, truth, fresh):
    """−(1/T)·Σ_events [log p̂(class) − log p_true(class)] on a fresh sample."""
    labels = fresh.labels
    x = fresh.covariates[:, :fresh.d_x]
    y = fresh.covariates[:, fresh.d_x:].ravel()
    if isinstance(model, OracleJointModel):
        p_hat = model.joint(x, y)
    else:
        p_hat = predict_joint(model, fresh.covariates)
    p_true = truth.joint_probs(x, y)
    log_hat = _event_log_probs(p_hat, labels, "model prediction")
    log_true = _event_log_probs(p_true, labels, "ground truth")
    return float(-np.sum(log_hat - log_true) / fresh.T)


def empirical_risk_twostep(model, truth, fresh, return_parts=False):
    """Type-ratio risk over all events plus per-type mark risks, each 1/T.

    The total equals the one-step-form risk of the product model by
    construction (log of a product); parts are exposed for that check.
    """
    x = fresh.covariates[:, :fresh.d_x]
    y = fresh.covariates[:, fresh.d_x:].ravel()
    types, marks = fresh.types, fresh.marks

    if isinstance(model, OracleJointModel):
        q_hat = model.type_probs(x)
        mark_hat_p0 = model.mark_p0(y)
    elif isinstance(model, TwoStepModel):
        xf = fresh.x_features
        yf = fresh.y_features
        q_hat = softmax_pinned(np.atleast_2d(model.type_logits(xf)))
        mark_hat_p0 = np.column_stack(
            [1.0 - expit(model.mark_logit(i, yf)) for i in range(fresh.n_types)])
    else:
        raise TypeError("two-step risk needs a TwoStepModel or oracle")

    lam = truth.intensity_matrix(x)
    q_true = lam / lam.sum(axis=1, keepdims=True)
    true_p0 = truth.mark_p0_matrix(y)

    type_part = float(-np.sum(_event_log_probs(q_hat, types, "type model")
                              - _event_log_probs(q_true, types, "type truth")) / fresh.T)
    mark_parts = []
    for i in range(fresh.n_types):
        sel = types == i
        k = marks[sel]
        hat = np.where(k == 0, mark_hat_p0[sel, i], 1.0 - mark_hat_p0[sel, i])
        tru = np.where(k == 0, true_p0[sel, i], 1.0 - true_p0[sel, i])
        if np.any(hat <= 0.0):
            raise RuntimeError(f"zero predicted probability in mark model {i}")
        mark_parts.append(float(-np.sum(np.log(hat) - np.log(tru)) / fresh.T))
    total = type_part + sum(mark_parts)
    if return_parts:
        return total, type_part, mark_parts
    return total


def heldout_nll(model, sample):
    """−(1/T)·Σ log p̂(class): comparison measure when no ground truth exists."""
    if isinstance(model, TwoStepModel):
        p_hat = predict_joint(model, sample.x_features,
                              None if sample.shared_xy else sample.y_features)
    else:
        p_hat = predict_joint(model, sample.covariates)
    return float(-np.sum(_event_log_probs(p_hat, sample.labels, "model")) / sample.T)


@dataclass
class BinnedProbs:
    edges: np.ndarray    # (n_bins + 1,)
    centers: np.ndarray  # (n_bins,)
    counts: np.ndarray   # (n_bins,) events per bin
    freqs: np.ndarray    # (n_bins, n_classes), NaN rows where counts == 0


def empirical_binned_probs(sample, axis, n_bins, conditioning=None, bin_range=None):
    """Relative class frequencies per bin of one continuous covariate.

    `conditioning` restricts to events whose listed covariate columns match
    the given values exactly (discrete covariates).  Empty bins are NaN.
    """
    if n_bins < 1:
        raise ValueError("n_bins must be >= 1")
    mask = np.ones(sample.n_events, dtype=bool)
    for col, val in (conditioning or {}).items():
        mask &= np.abs(sample.covariates[:, col] - val) < 1e-9
    values = sample.covariates[mask, axis]
    labels = sample.labels[mask]
    lo, hi = bin_range if bin_range is not None else \
        ((values.min(), values.max()) if values.size else (0.0, 1.0))
    edges = np.linspace(lo, hi, n_bins + 1)
    idx = np.clip(np.digitize(values, edges[1:-1]), 0, n_bins - 1)
    n_classes = 2 * sample.n_types
    counts = np.zeros(n_bins, dtype=np.int64)
    freqs = np.full((n_bins, n_classes), np.nan)
    for b in range(n_bins):
        sel = idx == b
        counts[b] = sel.sum()
        if counts[b]:
            freqs[b] = np.bincount(labels[sel], minlength=n_classes) / counts[b]
    return BinnedProbs(edges=edges, centers=0.5 * (edges[:-1] + edges[1:]),
                       counts=counts, freqs=freqs)


@dataclass
class ErrorReport:
    method: str
    T: float
    seed: int
    nL: int
    nN: int
    eps_l2: float
    eps_linf: float
    risk: float
    wall_s: float = 0.0

    def __post_init__(self):
        if self.eps_l2 < 0 or not 0.0 <= self.eps_linf <= 1.0:
            raise ValueError("error measures out of range")
        if not np.isfinite(self.risk):
            raise ValueError("risk must be finite")


REPORT_HEADER = "method,T,seed,nL,nN,eps_l2,eps_linf,risk,wall_s"


def report_row(r):
    return (f"{r.method},{r.T:.17g},{r.seed},{r.nL},{r.nN},"
            f"{r.eps_l2:.17g},{r.eps_linf:.17g},{r.risk:.17g},{r.wall_s:.3f}")


def write_reports(reports, path):
    with open(path, "w") as fh:
        fh.write(REPORT_HEADER + "\n")
        for r in reports:
            fh.write(report_row(r) + "\n")


def read_reports(path):
    rows = np.genfromtxt(path, delimiter=",", names=True, dtype=None, encoding=None)
    return np.atleast_1d(rows)
