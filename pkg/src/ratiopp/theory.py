"""Closed-form theoretical quantities and their numerical verifiers.

Covers the composition-smoothness machinery (effective smoothness indices
and the resulting rate φ_T), the covering-number bound for sparse dense
networks, an explicit-constant bound on Gaussian-type tail integrals
∫_B^∞ y^q e^{−Cy^p} dy, and the two compatibility constants sandwiching
−log x + x − 1 between multiples of (x−1)².
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize


@dataclass(frozen=True)
class SmoothnessSpec:
    """Composition structure: q+1 layers with Hölder exponents betas and
    effective input dimensions ts."""

    betas: tuple
    ts: tuple

    def __post_init__(self):
        if len(self.betas) == 0 or len(self.betas) != len(self.ts):
            raise ValueError("betas and ts must be nonempty and equal length")
        if any(b <= 0 for b in self.betas):
            raise ValueError("Hölder exponents must be positive")
        if any(int(t) != t or t < 1 for t in self.ts):
            raise ValueError("effective dimensions must be integers >= 1")

    @property
    def q(self):
        return len(self.betas) - 1


@dataclass(frozen=True)
class NetSizeSpec:
    """Size parameters of the sparse network class: depth L, widths
    (𝗉₀..𝗉_{L+1}), sparsity s, covering radius δ."""

    depth: int
    widths: tuple
    sparsity: int
    delta: float

    def __post_init__(self):
        if self.depth < 0 or self.sparsity < 0 or not self.delta > 0:
            raise ValueError("need depth >= 0, sparsity >= 0, delta > 0")
        if len(self.widths) != self.depth + 2:
            raise ValueError(f"widths must have length depth+2 = {self.depth + 2}")
        if any(w < 1 for w in self.widths):
            raise ValueError("widths must be >= 1")


def effective_smoothness(betas):
    """β*ᵢ = βᵢ·∏_{j>i} min(βⱼ, 1); the last index keeps its raw exponent."""
    betas = np.asarray(betas, dtype=np.float64)
    if betas.size == 0 or np.any(betas <= 0):
        raise ValueError("need nonempty positive betas")
    capped = np.minimum(betas, 1.0)
    # suffix products of capped exponents, excluding the index itself
    suffix = np.concatenate([np.cumprod(capped[::-1])[::-1][1:], [1.0]])
    return betas * suffix


def rate_phi(T, spec):
    """φ_T = maxᵢ T^{−2βᵢ*/(2βᵢ*+tᵢ)}, the rate of the slowest component."""
    if not T > 1:
        raise ValueError("T must be > 1")
    beta_star = effective_smoothness(spec.betas)
    ts = np.asarray(spec.ts, dtype=np.float64)
    exponents = -2.0 * beta_star / (2.0 * beta_star + ts)
    return float(np.max(np.power(T, exponents)))


def covering_bound(size):
    """log-covering bound (s+1)·log[2δ⁻¹(L+1)∏(𝗉_ℓ+1)] for the network class."""
    log_prod = float(np.sum(np.log1p(np.asarray(size.widths, dtype=np.float64))))
    return (size.sparsity + 1) * (
        math.log(2.0 / size.delta) + math.log(size.depth + 1.0) + log_prod)


def tail_constant(k):
    """c_k = 2·sup_{u≥1} u^{k−1}e^{−u/2}; the sup sits at u = max(1, 2(k−1))."""
    if k < 1:
        raise ValueError("k must be >= 1")
    u_star = max(1.0, 2.0 * (k - 1.0))
    return 2.0 * u_star ** (k - 1.0) * math.exp(-u_star / 2.0)


def tail_integral_bound(p, q, C, B, k):
    """Upper bound c_k·p⁻¹·C^{−(1+q)/p}·e^{−C·Bᵖ/2} on ∫_B^∞ y^q e^{−Cyᵖ} dy.

    Valid whenever (q+1)/p ≤ k and C·Bᵖ ≥ 1.
    """
    if p <= 0 or C <= 0 or B <= 0:
        raise ValueError("p, C, B must be positive")
    if (q + 1.0) / p > k + 1e-12:
        raise ValueError(f"need (q+1)/p <= k, got {(q + 1.0) / p} > {k}")
    if C * B ** p < 1.0 - 1e-12:
        raise ValueError(f"need C·B^p >= 1, got {C * B ** p}")
    return tail_constant(k) / p * C ** (-(1.0 + q) / p) * math.exp(-C * B ** p / 2.0)


def tail_integral_quadrature(p, q, C, B, tol=1e-10):
    """Adaptive-quadrature value of the tail integral (verification oracle).

    The integrand is truncated where C·yᵖ = 700, far below double underflow.
    """
    upper = (700.0 / C) ** (1.0 / p)
    if upper <= B:
        return 0.0
    val, _ = integrate.quad(lambda y: y ** q * math.exp(-C * y ** p), B, upper,
                            epsabs=tol, limit=200)
    return val


def _compat_f(x):
    """f(x) = (−log x + x − 1)/(x−1)², extended by its limit 1/2 at x = 1."""
    x = np.asarray(x, dtype=np.float64)
    d = x - 1.0
    small = np.abs(d) < 1e-5
    ds = np.where(small, 0.0, d)
    with np.errstate(divide="ignore", invalid="ignore"):
        exact = (d - np.log1p(d)) / (ds * ds)
    taylor = 0.5 - d / 3.0 + d * d / 4.0
    return float(np.where(small, taylor, exact)) if x.ndim == 0 else \
        np.where(small, taylor, exact)


def compatibility_constants(x0, x1, n_scan=100001):
    """(c0, c1) = (inf, sup) of f on [x0, x1]: the sharpest constants with
    c0(x−1)² ≤ −log x + x − 1 ≤ c1(x−1)² on the interval.

    Dense scan followed by bounded local refinement around the extremes.
    """
    if not (0.0 < x0 < x1 and x0 <= 1.0 <= x1):
        raise ValueError(f"need 0 < x0 <= 1 <= x1, got [{x0}, {x1}]")
    xs = np.linspace(x0, x1, n_scan)
    vals = _compat_f(xs)
    lo_i, hi_i = int(np.argmin(vals)), int(np.argmax(vals))

    def refine(i, sign):
        a = xs[max(i - 1, 0)]
        b = xs[min(i + 1, n_scan - 1)]
        if a == b:
            return sign * _compat_f(a)
        res = optimize.minimize_scalar(lambda x: sign * _compat_f(x),
                                       bounds=(a, b), method="bounded",
                                       options={"xatol": 1e-12})
        return min(res.fun, sign * _compat_f(a), sign * _compat_f(b))

    c0 = refine(lo_i, 1.0)
    c1 = -refine(hi_i, -1.0)
    return float(c0), float(c1)
