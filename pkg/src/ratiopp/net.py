"""Dense feed-forward ratio networks.

The architecture is an input transform to `width` units, `n_layers`
inner transforms of `width` units, and a linear output transform.
LeakyReLU follows the input transform and every inner transform except
the last one; the last inner transform and the output stay linear.
`activate_last_hidden` restores the conventional all-hidden-activated
variant for ablations.

Parameters live in one flat float64 vector (per layer: weight matrix in
row-major order, then bias) with per-layer views, so the optimizer and
checkpoints operate on a single array.
"""

import json
from dataclasses import asdict, dataclass

import numpy as np

from . import kernels


@dataclass(frozen=True)
class NetConfig:
    in_dim: int
    out_dim: int
    n_layers: int
    width: int
    leaky_slope: float = 0.01
    activate_last_hidden: bool = False

    def __post_init__(self):
        if self.in_dim < 1 or self.out_dim < 1 or self.n_layers < 1 or self.width < 1:
            raise ValueError(f"invalid network shape {self}")
        if not 0.0 < self.leaky_slope < 1.0:
            raise ValueError(f"leaky_slope must be in (0,1), got {self.leaky_slope}")


def layer_shapes(config):
    """(fan_in, fan_out) of every affine transform, input to output."""
    shapes = [(config.in_dim, config.width)]
    shapes += [(config.width, config.width)] * config.n_layers
    shapes.append((config.width, config.out_dim))
    return shapes


def param_count(config):
    """Exact number of scalars: weights plus biases over all transforms."""
    return sum(fi * fo + fo for fi, fo in layer_shapes(config))


def _views(flat, shapes):
    weights, biases = [], []
    offset = 0
    for fi, fo in shapes:
        weights.append(flat[offset:offset + fi * fo].reshape(fi, fo))
        offset += fi * fo
        biases.append(flat[offset:offset + fo])
        offset += fo
    assert offset == flat.size
    return weights, biases


class RatioNetwork:
    """Mutable single-owner network: flat parameter vector plus views."""

    def __init__(self, config, params):
        expected = param_count(config)
        if params.shape != (expected,):
            raise ValueError(f"expected {expected} parameters, got {params.shape}")
        self.config = config
        self.params = np.ascontiguousarray(params, dtype=np.float64)
        self.weights, self.biases = _views(self.params, layer_shapes(config))

    @property
    def n_act(self):
        return self.config.n_layers + (1 if self.config.activate_last_hidden else 0)

    def forward(self, x):
        """Logits for a single input vector or a batch (n, in_dim)."""
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        if single:
            x = x[None, :]
        if x.shape[1] != self.config.in_dim:
            raise ValueError(f"input dim {x.shape[1]} != {self.config.in_dim}")
        out = kernels.active.forward(np.ascontiguousarray(x), self.weights, self.biases,
                                     self.config.leaky_slope, self.n_act)
        return out[0] if single else out

    def loss_and_grad(self, features, labels, fixed_zero_class=True):
        """Summed softmax cross-entropy over the batch and its flat gradient.

        With fixed_zero_class the softmax runs over out_dim+1 classes whose
        class 0 logit is the constant 0 (the unlearned reference ratio).
        """
        features = np.ascontiguousarray(features, dtype=np.float64)
        labels = np.ascontiguousarray(labels, dtype=np.int64)
        n_classes = self.config.out_dim + (1 if fixed_zero_class else 0)
        if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
            raise ValueError(f"label out of range [0, {n_classes})")
        if features.shape[0] != labels.shape[0]:
            raise ValueError("features/labels batch mismatch")
        grad = np.zeros_like(self.params)
        gw, gb = _views(grad, layer_shapes(self.config))
        loss = kernels.active.loss_grad(features, labels, self.weights, self.biases,
                                        self.config.leaky_slope, self.n_act,
                                        fixed_zero_class, gw, gb)
        return loss, grad

    def copy(self):
        return RatioNetwork(self.config, self.params.copy())


def init_network(config, seed):
    """He-initialized network: W ~ N(0, 2/fan_in), biases 0."""
    rng = np.random.default_rng(seed)
    flat = np.empty(param_count(config))
    weights, biases = _views(flat, layer_shapes(config))
    for w, b in zip(weights, biases):
        w[...] = rng.normal(0.0, np.sqrt(2.0 / w.shape[0]), size=w.shape)
        b[...] = 0.0
    return RatioNetwork(config, flat)


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_network(cls, net, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        return cls(m=np.zeros_like(net.params), v=np.zeros_like(net.params),
                   lr=lr, beta1=beta1, beta2=beta2, eps=eps)


def adam_step(net, grad, state):
    """Standard bias-corrected Adam update, in place on net and state."""
    state.step += 1
    kernels.active.adam_step(net.params, grad, state.m, state.v, state.step,
                             state.lr, state.beta1, state.beta2, state.eps)
    return net, state


def softmax_pinned(logits):
    """Softmax over (0, logits...) per row; returns (n, out_dim+1) probabilities."""
    logits = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    m = np.maximum(logits.max(axis=1), 0.0)
    lse = m + np.log(np.exp(-m) + np.exp(logits - m[:, None]).sum(axis=1))
    out = np.empty((logits.shape[0], logits.shape[1] + 1))
    out[:, 0] = np.exp(-lse)
    out[:, 1:] = np.exp(logits - lse[:, None])
    return out


def save_checkpoint(net, path):
    """Binary (.npz, bit-exact) or JSON text (.json, shortest round-trip floats)."""
    path = str(path)
    cfg = json.dumps(asdict(net.config))
    if path.endswith(".json"):
        with open(path, "w") as fh:
            json.dump({"config": asdict(net.config), "params": net.params.tolist()}, fh)
    elif path.endswith(".npz"):
        np.savez(path, config=np.asarray(cfg), params=net.params)
    else:
        raise ValueError(f"checkpoint path must end in .npz or .json: {path}")


def load_checkpoint(path):
    path = str(path)
    if path.endswith(".json"):
        with open(path) as fh:
            blob = json.load(fh)
        config = NetConfig(**blob["config"])
        params = np.asarray(blob["params"], dtype=np.float64)
    elif path.endswith(".npz"):
        with np.load(path) as blob:
            config = NetConfig(**json.loads(str(blob["config"])))
            params = blob["params"].astype(np.float64)
    else:
        raise ValueError(f"checkpoint path must end in .npz or .json: {path}")
    return RatioNetwork(config, params)
