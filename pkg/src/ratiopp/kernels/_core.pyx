# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled twins of the numpy kernel backend.

Same signatures and float64 semantics as ratiopp.kernels.numpy_backend;
matrix products go through BLAS dgemm, elementwise work through C loops.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log, pow, sqrt
from scipy.linalg.cython_blas cimport dgemm

NAME = "cython"


cdef void _gemm_nn(double[:, ::1] a, double[:, ::1] b, double[:, ::1] c) noexcept nogil:
    # row-major c (m,p) = a (m,k) @ b (k,p)
    cdef int m = a.shape[0], k = a.shape[1], p = b.shape[1]
    cdef double one = 1.0, zero = 0.0
    cdef char nc = b'N'
    dgemm(&nc, &nc, &p, &m, &k, &one, &b[0, 0], &p, &a[0, 0], &k, &zero, &c[0, 0], &p)


cdef void _gemm_tn(double[:, ::1] a, double[:, ::1] b, double[:, ::1] c) noexcept nogil:
    # row-major c (k,p) = a.T @ b with a (n,k), b (n,p)
    cdef int n = a.shape[0], k = a.shape[1], p = b.shape[1]
    cdef double one = 1.0, zero = 0.0
    cdef char nc = b'N', tc = b'T'
    dgemm(&nc, &tc, &p, &k, &n, &one, &b[0, 0], &p, &a[0, 0], &k, &zero, &c[0, 0], &p)


cdef void _gemm_nt(double[:, ::1] d, double[:, ::1] w, double[:, ::1] c) noexcept nogil:
    # row-major c (n,k) = d (n,p) @ w.T with w (k,p)
    cdef int n = d.shape[0], p = d.shape[1], k = w.shape[0]
    cdef double one = 1.0, zero = 0.0
    cdef char nc = b'N', tc = b'T'
    dgemm(&tc, &nc, &k, &n, &p, &one, &w[0, 0], &p, &d[0, 0], &p, &zero, &c[0, 0], &k)


cdef void _bias_linear(double[:, ::1] z, double[::1] b) noexcept nogil:
    cdef Py_ssize_t i, j
    for i in range(z.shape[0]):
        for j in range(z.shape[1]):
            z[i, j] += b[j]


cdef void _bias_leaky(double[:, ::1] z, double[::1] b, double leaky_slope,
                      double[:, ::1] mask) noexcept nogil:
    cdef Py_ssize_t i, j
    cdef double v
    for i in range(z.shape[0]):
        for j in range(z.shape[1]):
            v = z[i, j] + b[j]
            if v > 0.0:
                mask[i, j] = 1.0
            else:
                mask[i, j] = leaky_slope
                v = v * leaky_slope
            z[i, j] = v


def forward(x, weights, biases, double leaky_slope, int n_act):
    cdef double[:, ::1] a = np.ascontiguousarray(x, dtype=np.float64)
    cdef double[:, ::1] z, mask
    cdef int layer, n_layers = len(weights)
    cdef object zn, mn
    for layer in range(n_layers):
        zn = np.empty((a.shape[0], weights[layer].shape[1]))
        z = zn
        _gemm_nn(a, weights[layer], z)
        if layer < n_act:
            mn = np.empty_like(zn)
            mask = mn
            _bias_leaky(z, biases[layer], leaky_slope, mask)
        else:
            _bias_linear(z, biases[layer])
        a = z
    return np.asarray(a)


cdef double _softmax_ce(double[:, ::1] logits, cnp.int64_t[::1] labels,
                        bint pinned_zero, double[:, ::1] delta) noexcept nogil:
    cdef Py_ssize_t i, j, n = logits.shape[0], c = logits.shape[1]
    cdef double mx, s, lse, loss = 0.0
    cdef cnp.int64_t lab
    for i in range(n):
        lab = labels[i]
        if pinned_zero:
            mx = 0.0
        else:
            mx = logits[i, 0]
        for j in range(c):
            if logits[i, j] > mx:
                mx = logits[i, j]
        if pinned_zero:
            s = exp(-mx)
        else:
            s = 0.0
        for j in range(c):
            s += exp(logits[i, j] - mx)
        lse = mx + log(s)
        if pinned_zero:
            if lab > 0:
                loss += lse - logits[i, lab - 1]
            else:
                loss += lse
        else:
            loss += lse - logits[i, lab]
        for j in range(c):
            delta[i, j] = exp(logits[i, j] - lse)
        if pinned_zero:
            if lab > 0:
                delta[i, lab - 1] -= 1.0
        else:
            delta[i, lab] -= 1.0
    return loss


def loss_grad(x, labels, weights, biases, double leaky_slope, int n_act,
              bint pinned_zero, grad_w, grad_b):
    cdef int n_layers = len(weights)
    cdef int layer
    cdef Py_ssize_t n = x.shape[0]
    acts = [np.ascontiguousarray(x, dtype=np.float64)]
    masks = [None] * n_layers

    cdef double[:, ::1] a = acts[0]
    cdef double[:, ::1] z, mask
    cdef object zn, mn
    for layer in range(n_layers):
        zn = np.empty((n, weights[layer].shape[1]))
        z = zn
        _gemm_nn(a, weights[layer], z)
        if layer < n_act:
            mn = np.empty_like(zn)
            mask = mn
            masks[layer] = mn
            _bias_leaky(z, biases[layer], leaky_slope, mask)
        else:
            _bias_linear(z, biases[layer])
        a = z
        if layer < n_layers - 1:
            acts.append(zn)

    cdef object dn = np.empty((n, weights[n_layers - 1].shape[1]))
    cdef double[:, ::1] delta = dn
    cdef cnp.int64_t[::1] lab = np.ascontiguousarray(labels, dtype=np.int64)
    cdef double loss = _softmax_ce(a, lab, pinned_zero, delta)

    cdef double[:, ::1] gw
    cdef double[::1] gb
    cdef double[:, ::1] prev_mask
    cdef Py_ssize_t i, j
    cdef double s
    cdef object dprev
    for layer in range(n_layers - 1, -1, -1):
        gw = grad_w[layer]
        gb = grad_b[layer]
        _gemm_tn(acts[layer], delta, gw)
        for j in range(delta.shape[1]):
            s = 0.0
            for i in range(delta.shape[0]):
                s += delta[i, j]
            gb[j] = s
        if layer > 0:
            dprev = np.empty((n, weights[layer].shape[0]))
            z = dprev
            _gemm_nt(delta, weights[layer], z)
            if masks[layer - 1] is not None:
                prev_mask = masks[layer - 1]
                for i in range(z.shape[0]):
                    for j in range(z.shape[1]):
                        z[i, j] = z[i, j] * prev_mask[i, j]
            delta = z
    return loss


def adam_step(double[::1] params, double[::1] grad, double[::1] m, double[::1] v,
              long step, double lr, double beta1, double beta2, double eps):
    cdef Py_ssize_t i, n = params.shape[0]
    cdef double bc1 = 1.0 - pow(beta1, <double>step)
    cdef double bc2 = 1.0 - pow(beta2, <double>step)
    cdef double g, mi, vi
    with nogil:
        for i in range(n):
            g = grad[i]
            mi = beta1 * m[i] + (1.0 - beta1) * g
            vi = beta2 * v[i] + (1.0 - beta2) * g * g
            m[i] = mi
            v[i] = vi
            params[i] -= lr * (mi / bc1) / (sqrt(vi / bc2) + eps)


def ou_path(double x0, double[::1] dts, double[::1] gauss,
            double theta, double xbar, double sigma):
    cdef Py_ssize_t k, n = dts.shape[0]
    out_arr = np.empty(n)
    cdef double[::1] out = out_arr
    cdef double x = x0, a, sd
    with nogil:
        for k in range(n):
            a = exp(-theta * dts[k])
            if theta > 0.0:
                sd = sigma * sqrt((1.0 - a * a) / (2.0 * theta))
            else:
                sd = sigma * sqrt(dts[k])
            x = xbar + (x - xbar) * a + sd * gauss[k]
            out[k] = x
    return out_arr
