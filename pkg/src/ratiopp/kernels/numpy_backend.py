"""Pure-numpy reference implementations of the hot kernels.

Semantics are the contract for the compiled backend: same call
signatures, same float64 arithmetic, same activation placement
(the first `n_act` affine transforms are followed by LeakyReLU,
every later transform is linear).
"""

import numpy as np

NAME = "numpy"


def forward(x, weights, biases, leaky_slope, n_act):
    """Batched dense-net forward pass.

    x : (n, p0) float64; weights[l] : (p_in, p_out); biases[l] : (p_out,).
    Returns logits (n, p_last).
    """
    a = x
    for layer, (w, b) in enumerate(zip(weights, biases)):
        z = a @ w + b
        if layer < n_act:
            z = np.where(z > 0.0, z, leaky_slope * z)
        a = z
    return a


def _softmax_ce(logits, labels, pinned_zero):
    """Summed cross-entropy and d(loss)/d(logits) for one batch.

    With pinned_zero the softmax runs over a constant-0 logit for class 0
    followed by the learned logits for classes 1..out_dim; labels index
    the full class set.
    """
    n = logits.shape[0]
    if pinned_zero:
        m = np.maximum(logits.max(axis=1), 0.0)
        lse = m + np.log(np.exp(-m) + np.exp(logits - m[:, None]).sum(axis=1))
        z_label = np.where(labels == 0, 0.0, logits[np.arange(n), np.maximum(labels - 1, 0)])
        loss = float(np.sum(lse - z_label))
        dlogits = np.exp(logits - lse[:, None])
        rows = labels > 0
        dlogits[np.flatnonzero(rows), labels[rows] - 1] -= 1.0
    else:
        m = logits.max(axis=1)
        lse = m + np.log(np.exp(logits - m[:, None]).sum(axis=1))
        loss = float(np.sum(lse - logits[np.arange(n), labels]))
        dlogits = np.exp(logits - lse[:, None])
        dlogits[np.arange(n), labels] -= 1.0
    return loss, dlogits


def loss_grad(x, labels, weights, biases, leaky_slope, n_act, pinned_zero,
              grad_w, grad_b):
    """Summed softmax cross-entropy loss and its gradient.

    Gradients are written into the preallocated arrays grad_w[l], grad_b[l]
    (shaped like the parameters).  Returns the scalar loss (sum over the
    batch, not the mean).
    """
    n_layers = len(weights)
    acts = [x]          # input to each transform
    masks = [None] * n_layers
    a = x
    for layer in range(n_layers):
        z = a @ weights[layer] + biases[layer]
        if layer < n_act:
            mask = np.where(z > 0.0, 1.0, leaky_slope)
            z = z * mask
            masks[layer] = mask
        a = z
        if layer < n_layers - 1:
            acts.append(a)

    loss, delta = _softmax_ce(a, labels, pinned_zero)

    for layer in range(n_layers - 1, -1, -1):
        np.matmul(acts[layer].T, delta, out=grad_w[layer])
        np.sum(delta, axis=0, out=grad_b[layer])
        if layer > 0:
            delta = delta @ weights[layer].T
            if masks[layer - 1] is not None:
                delta *= masks[layer - 1]
    return loss


def adam_step(params, grad, m, v, step, lr, beta1, beta2, eps):
    """One Adam update with bias correction, in place on flat arrays."""
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * grad * grad
    mhat = m / (1.0 - beta1 ** step)
    vhat = v / (1.0 - beta2 ** step)
    params -= lr * mhat / (np.sqrt(vhat) + eps)


def ou_path(x0, dts, gauss, theta, xbar, sigma):
    """Exact OU transitions chained along irregular steps.

    x_k = xbar + (x_{k-1} - xbar) e^{-theta dt_k} + s_k g_k with
    s_k = sigma * sqrt((1 - e^{-2 theta dt_k}) / (2 theta)); the
    theta -> 0 limit of s_k is sigma * sqrt(dt_k).
    """
    n = dts.shape[0]
    out = np.empty(n)
    decay = np.exp(-theta * dts)
    if theta > 0.0:
        sd = sigma * np.sqrt((1.0 - decay * decay) / (2.0 * theta))
    else:
        sd = sigma * np.sqrt(dts)
    shock = sd * gauss
    x = x0
    for k in range(n):
        x = xbar + (x - xbar) * decay[k] + shock[k]
        out[k] = x
    return out
