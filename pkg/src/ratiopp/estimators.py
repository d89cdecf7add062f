"""One-step and two-step ratio estimation of conditional event-class probabilities.

Both methods treat the event stream as a classification sample: each event
contributes its left-limit covariates as features and its (type, mark) pair
as the class.  The baseline intensity multiplies every class identically, so
it cancels from the softmax ratios and is never modeled.

One-step: a single network over all 2·n_types classes, class (0,0) pinned to
logit 0.  Two-step: a type network (class 0 pinned) times per-type mark
networks (mark 0 pinned); the joint probability is the product of the two
softmax factors.
"""

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit, logsumexp

from .net import (AdamState, NetConfig, RatioNetwork, adam_step, init_network,
                  load_checkpoint, param_count, save_checkpoint, softmax_pinned)


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 512
    max_epochs: int = 100
    val_fraction: float = 0.1
    patience: int = 5
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    plateau_decays: int = 0  # restarts from the best params at half lr

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not 0.0 <= self.val_fraction <= 0.5:
            raise ValueError("val_fraction must lie in [0, 0.5]")
        if self.plateau_decays < 0:
            raise ValueError("plateau_decays must be >= 0")


@dataclass
class LabeledBatch:
    features: np.ndarray  # (n, in_dim)
    labels: np.ndarray    # (n,) class indices

    def __post_init__(self):
        if self.features.shape[0] != self.labels.shape[0]:
            raise ValueError("features/labels length mismatch")

    @property
    def n(self):
        return self.labels.shape[0]


@dataclass
class Standardizer:
    """Per-feature affine map z = (f − mean)/std fitted on the training batch.

    Small-variance covariates otherwise leave He-initialized layers in their
    near-linear regime; standardizing restores unit-scale preactivations.
    Degenerate (constant) features pass through unscaled.
    """

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, features):
        mean = features.mean(axis=0)
        std = features.std(axis=0)
        return cls(mean=mean, std=np.where(std > 0.0, std, 1.0))

    @classmethod
    def identity(cls, dim):
        return cls(mean=np.zeros(dim), std=np.ones(dim))

    def __call__(self, features):
        return (features - self.mean) / self.std


@dataclass
class OneStepModel:
    net: RatioNetwork
    n_types: int = 4
    scaler: Standardizer = None
    curve: np.ndarray = None  # (epochs, 3): epoch, train_loss, val_loss

    def logits(self, features):
        return self.net.forward(self.scaler(features) if self.scaler else features)


@dataclass
class TwoStepModel:
    type_net: RatioNetwork
    mark_nets: list
    n_types: int = 4
    type_scaler: Standardizer = None
    mark_scalers: list = None
    curves: dict = field(default_factory=dict)

    def type_logits(self, x_features):
        return self.type_net.forward(
            self.type_scaler(x_features) if self.type_scaler else x_features)

    def mark_logit(self, i, y_features):
        scaler = self.mark_scalers[i] if self.mark_scalers else None
        return np.atleast_2d(self.mark_nets[i].forward(
            scaler(y_features) if scaler else y_features))[:, 0]


def encode_class(i, k):
    return 2 * i + k


def decode_class(c):
    return divmod(c, 2)


def build_onestep_batch(sample):
    """One row per event: all covariates as features, class 2i+k as label."""
    if sample.n_events == 0:
        raise ValueError("empty sample")
    return LabeledBatch(np.ascontiguousarray(sample.covariates, dtype=np.float64),
                        sample.labels.astype(np.int64))


def build_twostep_batches(sample):
    """Type batch over the x-features, plus per-type mark batches over the
    y-features restricted to that type's events (in time order)."""
    if sample.n_events == 0:
        raise ValueError("empty sample")
    xf = np.ascontiguousarray(sample.x_features, dtype=np.float64)
    yf = np.ascontiguousarray(sample.y_features, dtype=np.float64)
    type_batch = LabeledBatch(xf, sample.types.astype(np.int64))
    mark_batches = []
    for i in range(sample.n_types):
        sel = sample.types == i
        mark_batches.append(LabeledBatch(yf[sel], sample.marks[sel].astype(np.int64)))
    return type_batch, mark_batches


def batch_nll(net, features, labels, fixed_zero_class=True):
    """Mean negative log-probability of the realized classes (no gradient)."""
    if labels.shape[0] == 0:
        return 0.0
    logits = np.atleast_2d(net.forward(features))
    if fixed_zero_class:
        logits = np.concatenate([np.zeros((logits.shape[0], 1)), logits], axis=1)
    lse = logsumexp(logits, axis=1)
    return float(np.mean(lse - logits[np.arange(labels.shape[0]), labels]))


def _train_net(batch, netcfg, traincfg, net_index=0):
    """Minibatch Adam with per-epoch shuffling, a fixed validation split,
    early stopping on validation loss, and best-parameter restore.

    Features are standardized on the full batch; the fitted scaler is
    returned and must be applied at prediction time.
    """
    rng = np.random.default_rng([traincfg.seed, net_index, 1])
    net = init_network(netcfg, [traincfg.seed, net_index, 0])
    state = AdamState.for_network(net, lr=traincfg.lr, beta1=traincfg.beta1,
                                  beta2=traincfg.beta2, eps=traincfg.eps)

    scaler = Standardizer.fit(batch.features)
    features = scaler(batch.features)
    n_val = int(round(traincfg.val_fraction * batch.n))
    perm = rng.permutation(batch.n)
    val_idx, train_idx = perm[:n_val], perm[n_val:]
    if train_idx.size == 0:
        raise ValueError("validation split leaves no training events")
    x_tr, y_tr = features[train_idx], batch.labels[train_idx]
    x_va, y_va = features[val_idx], batch.labels[val_idx]

    best_val, best_params, best_epoch = np.inf, net.params.copy(), -1
    decays_left = traincfg.plateau_decays
    curve = []
    for epoch in range(traincfg.max_epochs):
        order = rng.permutation(train_idx.size)
        total = 0.0
        for start in range(0, train_idx.size, traincfg.batch_size):
            sel = order[start:start + traincfg.batch_size]
            loss, grad = net.loss_and_grad(x_tr[sel], y_tr[sel])
            if not np.isfinite(loss):
                raise RuntimeError(
                    f"training diverged: non-finite loss at epoch {epoch}, "
                    f"batch starting {start} (|params|_max = "
                    f"{np.abs(net.params).max():.3e})")
            adam_step(net, grad, state)
            total += loss
        train_loss = total / train_idx.size
        val_loss = batch_nll(net, x_va, y_va) if n_val else train_loss
        curve.append((epoch, train_loss, val_loss))
        if val_loss < best_val:
            best_val, best_epoch = val_loss, epoch
            best_params[...] = net.params
        elif epoch - best_epoch >= traincfg.patience:
            if decays_left == 0:
                break
            # plateau: resume from the best parameters at half the step size
            decays_left -= 1
            best_epoch = epoch
            net.params[...] = best_params
            state.lr *= 0.5
            state.m[...] = 0.0
            state.v[...] = 0.0
            state.step = 0
    net.params[...] = best_params
    return net, scaler, np.asarray(curve)


def train_onestep(sample, netcfg=None, traincfg=TrainConfig()):
    """Fit the single joint-class network on all events of the sample."""
    batch = build_onestep_batch(sample)
    in_dim = batch.features.shape[1]
    out_dim = 2 * sample.n_types - 1
    if netcfg is None:
        netcfg = NetConfig(in_dim=in_dim, out_dim=out_dim, n_layers=8, width=64)
    if netcfg.in_dim != in_dim or netcfg.out_dim != out_dim:
        raise ValueError(f"network ({netcfg.in_dim}->{netcfg.out_dim}) does not "
                         f"match sample ({in_dim} features, {out_dim} ratios)")
    net, scaler, curve = _train_net(batch, netcfg, traincfg, net_index=0)
    return OneStepModel(net=net, n_types=sample.n_types, scaler=scaler, curve=curve)


def train_twostep(sample, type_cfg=None, mark_cfg=None, traincfg=TrainConfig()):
    """Fit the type network and the per-type mark networks independently.

    A type with no events leaves its mark network at zero parameters (both
    marks predicted 1/2) with a warning.
    """
    type_batch, mark_batches = build_twostep_batches(sample)
    x_dim = type_batch.features.shape[1]
    y_dim = mark_batches[0].features.shape[1]
    if type_cfg is None:
        type_cfg = NetConfig(in_dim=x_dim, out_dim=sample.n_types - 1, n_layers=8, width=64)
    if mark_cfg is None:
        mark_cfg = NetConfig(in_dim=y_dim, out_dim=1, n_layers=8, width=64)
    if type_cfg.in_dim != x_dim or type_cfg.out_dim != sample.n_types - 1:
        raise ValueError("type network shape does not match sample")
    if mark_cfg.in_dim != y_dim or mark_cfg.out_dim != 1:
        raise ValueError("mark network shape does not match sample")

    type_net, type_scaler, type_curve = _train_net(type_batch, type_cfg, traincfg,
                                                   net_index=0)
    curves = {"type": type_curve}
    mark_nets, mark_scalers = [], []
    for i, mb in enumerate(mark_batches):
        if mb.n == 0:
            warnings.warn(f"no events of type {i}: mark network fixed at 1/2")
            net = RatioNetwork(mark_cfg, np.zeros(param_count(mark_cfg)))
            scaler = Standardizer.identity(mark_cfg.in_dim)
            curves[f"mark{i}"] = np.zeros((0, 3))
        else:
            net, scaler, curve = _train_net(mb, mark_cfg, traincfg, net_index=1 + i)
            curves[f"mark{i}"] = curve
        mark_nets.append(net)
        mark_scalers.append(scaler)
    return TwoStepModel(type_net=type_net, mark_nets=mark_nets,
                        n_types=sample.n_types, type_scaler=type_scaler,
                        mark_scalers=mark_scalers, curves=curves)


def _y_block(y, n):
    """Normalize y to an (n, d_y) block: scalar broadcasts, 1-D becomes a column."""
    y = np.asarray(y, dtype=np.float64)
    if y.ndim == 0:
        return np.full((n, 1), float(y))
    if y.ndim == 1:
        if y.shape[0] == n:
            return y[:, None]
        if n == 1:
            return y[None, :]
        raise ValueError(f"y length {y.shape[0]} does not match batch {n}")
    if y.shape[0] != n:
        raise ValueError(f"y rows {y.shape[0]} do not match batch {n}")
    return y


def _features(x, y):
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if y is None:
        return x
    return np.concatenate([x, _y_block(y, x.shape[0])], axis=1)


def predict_onestep(model, x, y=None):
    """Joint class probabilities softmax(0, logits), ordered by 2i+k."""
    single = np.asarray(x).ndim == 1 and (y is None or np.asarray(y).ndim == 0)
    probs = softmax_pinned(np.atleast_2d(model.logits(_features(x, y))))
    return probs[0] if single else probs


def predict_twostep(model, x, y=None):
    """Product of the type softmax at x and each type's mark softmax at y.

    With y omitted both factors consume the same feature vector (order-book
    covariates are shared between the type and mark models).
    """
    x2 = np.atleast_2d(np.asarray(x, dtype=np.float64))
    single = np.asarray(x).ndim == 1 and (y is None or np.asarray(y).ndim == 0)
    yf = x2 if y is None else _y_block(y, x2.shape[0])
    type_probs = softmax_pinned(np.atleast_2d(model.type_logits(x2)))
    out = np.empty((x2.shape[0], 2 * model.n_types))
    for i in range(model.n_types):
        p1 = expit(model.mark_logit(i, yf))
        out[:, 2 * i] = type_probs[:, i] * (1.0 - p1)
        out[:, 2 * i + 1] = type_probs[:, i] * p1
    return out[0] if single else out


class OracleJointModel:
    """Prediction interface backed by the generating model's closed forms.

    Used as the truth-plugged reference: its predictions reuse the exact
    arithmetic of the ground-truth probabilities, so excess-risk measures
    evaluate to zero identically.
    """

    def __init__(self, truth):
        self.truth = truth
        self.n_types = 4

    def joint(self, x, y):
        return self.truth.joint_probs(x, y)

    def type_probs(self, x):
        lam = self.truth.intensity_matrix(x)
        return lam / lam.sum(axis=1, keepdims=True)

    def mark_p0(self, y):
        return self.truth.mark_p0_matrix(y)


def predict_joint(model, x, y=None):
    """Dispatch to the fitted or oracle prediction path; returns (n, 2·n_types)."""
    if isinstance(model, OneStepModel):
        return np.atleast_2d(predict_onestep(model, x, y))
    if isinstance(model, TwoStepModel):
        return np.atleast_2d(predict_twostep(model, x, y))
    if isinstance(model, OracleJointModel):
        if y is None:
            raise ValueError("oracle prediction needs explicit (x, y) features")
        return model.joint(np.atleast_2d(x), np.atleast_1d(y))
    raise TypeError(f"cannot predict with {type(model).__name__}")


# -- fitted-model bundles ----------------------------------------------------

def _curve_to_csv(curve, path):
    np.savetxt(path, np.atleast_2d(curve) if curve is not None and len(curve) else
               np.zeros((0, 3)), fmt=("%d", "%.17g", "%.17g"), delimiter=",",
               header="epoch,train_loss,val_loss", comments="")


def save_model_bundle(model, dirpath):
    """Per-network checkpoints plus a manifest and training-curve CSVs."""
    d = Path(dirpath)
    d.mkdir(parents=True, exist_ok=True)
    if isinstance(model, OneStepModel):
        manifest = {"method": 1, "n_types": model.n_types,
                    "scaler": _scaler_to_json(model.scaler)}
        save_checkpoint(model.net, d / "net.npz")
        _curve_to_csv(model.curve, d / "curve.csv")
    elif isinstance(model, TwoStepModel):
        manifest = {"method": 2, "n_types": model.n_types,
                    "type_scaler": _scaler_to_json(model.type_scaler),
                    "mark_scalers": [_scaler_to_json(s) for s in
                                     (model.mark_scalers or
                                      [None] * model.n_types)]}
        save_checkpoint(model.type_net, d / "type_net.npz")
        _curve_to_csv(model.curves.get("type"), d / "curve_type.csv")
        for i, net in enumerate(model.mark_nets):
            save_checkpoint(net, d / f"mark_net_{i}.npz")
            _curve_to_csv(model.curves.get(f"mark{i}"), d / f"curve_mark_{i}.csv")
    else:
        raise TypeError(f"cannot save {type(model).__name__}")
    (d / "manifest.json").write_text(json.dumps(manifest, indent=1))


def _scaler_to_json(scaler):
    if scaler is None:
        return None
    return {"mean": scaler.mean.tolist(), "std": scaler.std.tolist()}


def _scaler_from_json(blob):
    if blob is None:
        return None
    return Standardizer(mean=np.asarray(blob["mean"]), std=np.asarray(blob["std"]))


def load_model_bundle(dirpath):
    d = Path(dirpath)
    manifest = json.loads((d / "manifest.json").read_text())
    if manifest["method"] == 1:
        return OneStepModel(net=load_checkpoint(d / "net.npz"),
                            n_types=manifest["n_types"],
                            scaler=_scaler_from_json(manifest.get("scaler")))
    nets = [load_checkpoint(d / f"mark_net_{i}.npz")
            for i in range(manifest["n_types"])]
    return TwoStepModel(type_net=load_checkpoint(d / "type_net.npz"),
                        mark_nets=nets, n_types=manifest["n_types"],
                        type_scaler=_scaler_from_json(manifest.get("type_scaler")),
                        mark_scalers=[_scaler_from_json(b) for b in
                                      manifest.get("mark_scalers",
                                                   [None] * manifest["n_types"])])
