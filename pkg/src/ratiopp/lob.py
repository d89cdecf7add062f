"""Level-1 order-flow ingestion and a synthetic stream with a known law.

Market orders are events of a marked point process: the type is the side
hit (0 = bid, 1 = ask) and the mark records whether the mid price moved.
Covariates just before each order: queue imbalance
(q^B − q^A)/(q^B + q^A), the sign of the last trade (−1 bid / +1 ask), and
the spread in ticks clipped to {1, 2, 3}.  Both the type and the mark
models consume all three covariates.

The synthetic generator replaces proprietary data: covariates follow
simple tractable dynamics and the conditional class law is a fixed
closed-form table (`true_class_probs`), so end-to-end fits can be checked
against a known ground truth.
"""

import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import expit

from . import kernels
from .sim import MarkedPointSample

LOB_CSV_HEADER = "timestamp_us,side,best_bid,best_ask,qty_bid,qty_ask,mid_changed"
MAX_SPREAD_TICKS = 3


@dataclass
class RawLobEvents:
    """Columnar level-1 records; quantities/prices are values just before
    each order.  Prices are integer ticks."""

    timestamp_us: np.ndarray
    side: np.ndarray
    best_bid: np.ndarray
    best_ask: np.ndarray
    qty_bid: np.ndarray
    qty_ask: np.ndarray
    mid_changed: np.ndarray

    def __post_init__(self):
        n = self.timestamp_us.shape[0]
        for name in ("side", "best_bid", "best_ask", "qty_bid", "qty_ask",
                     "mid_changed"):
            if getattr(self, name).shape != (n,):
                raise ValueError(f"column {name} length mismatch")
        if n and np.any(np.diff(self.timestamp_us) < 0):
            raise ValueError("timestamps must be nondecreasing")
        if not np.isin(self.side, (0, 1)).all() or \
                not np.isin(self.mid_changed, (0, 1)).all():
            raise ValueError("side and mid_changed must be binary")

    @property
    def n(self):
        return self.timestamp_us.shape[0]


@dataclass
class LobCovariates:
    """Per-accepted-event covariates plus the acceptance bookkeeping."""

    imbalance: np.ndarray    # x0 in (-1, 1)
    last_sign: np.ndarray    # x1 in {-1, +1}
    spread_ticks: np.ndarray  # x2 in {1, 2, 3}
    accepted: np.ndarray     # boolean mask into the raw stream
    n_rejected: int

    def matrix(self):
        return np.column_stack([self.imbalance,
                                self.last_sign.astype(np.float64),
                                self.spread_ticks.astype(np.float64)])


def compute_covariates(events, tick_size=1.0):
    """Causal covariates for one session.

    Records with a crossed book (ask ≤ bid) or a non-positive queue are
    rejected (counted, excluded from outputs and from the last-sign state,
    i.e. the accepted subsequence behaves as if rejected rows never
    existed).  The first accepted event's last-sign is seeded to +1; spread
    is rounded to ticks (tolerance 1e-6) and clipped to {1..3}.
    """
    if events.n == 0:
        raise ValueError("empty event stream")
    ok = (events.best_ask > events.best_bid) & \
        (events.qty_bid > 0) & (events.qty_ask > 0)
    n_rejected = int((~ok).sum())

    qb = events.qty_bid[ok].astype(np.float64)
    qa = events.qty_ask[ok].astype(np.float64)
    imbalance = (qb - qa) / (qb + qa)

    raw_spread = (events.best_ask[ok] - events.best_bid[ok]) / tick_size
    spread = np.rint(raw_spread + 1e-6).astype(np.int64)
    spread = np.clip(spread, 1, MAX_SPREAD_TICKS)

    sides = events.side[ok]
    last_sign = np.empty(sides.shape[0], dtype=np.int64)
    if sides.shape[0]:
        last_sign[0] = 1
        last_sign[1:] = 2 * sides[:-1] - 1
    return LobCovariates(imbalance=imbalance, last_sign=last_sign,
                         spread_ticks=spread, accepted=ok,
                         n_rejected=n_rejected)


def to_marked_sample(events, covariates=None, tick_size=1.0):
    """Event stream as a classification sample: type = side, mark = mid move.

    The first accepted event carries the seeded last-sign and is excluded.
    Tied microsecond timestamps are nudged forward by 1 µs to keep event
    times strictly increasing.
    """
    cov = covariates if covariates is not None else \
        compute_covariates(events, tick_size)
    ts = events.timestamp_us[cov.accepted].astype(np.int64).copy()
    if ts.shape[0] == 0:
        raise ValueError("no accepted events in stream")
    for j in range(1, ts.shape[0]):
        if ts[j] <= ts[j - 1]:
            ts[j] = ts[j - 1] + 1
    times = ts / 1e6
    types = events.side[cov.accepted].astype(np.int64)
    marks = events.mid_changed[cov.accepted].astype(np.int64)
    matrix = cov.matrix()

    keep = np.ones(times.shape[0], dtype=bool)
    keep[0] = False  # seeded last-sign
    keep &= times > 0
    horizon = float(times[-1]) if times.shape[0] else 0.0
    return MarkedPointSample(
        T=horizon, times=times[keep], types=types[keep], marks=marks[keep],
        covariates=matrix[keep], d_x=3, d_y=0, n_types=2, shared_xy=True,
    ).validate()


def merge_sessions(samples):
    """Pool per-session samples into one training sample.

    Each session keeps its own covariate state (the last-sign seed resets per
    file); times of later sessions are shifted past the running horizon so the
    pooled times stay strictly increasing.
    """
    samples = list(samples)
    if not samples:
        raise ValueError("need at least one session")
    if len(samples) == 1:
        return samples[0]
    offset, times, types, marks, cov = 0.0, [], [], [], []
    for s in samples:
        if s.d_x != 3 or s.d_y != 0 or s.n_types != 2:
            raise ValueError("sessions must share the order-book sample layout")
        times.append(s.times + offset)
        types.append(s.types)
        marks.append(s.marks)
        cov.append(s.covariates)
        offset += s.T
    return MarkedPointSample(
        T=offset, times=np.concatenate(times), types=np.concatenate(types),
        marks=np.concatenate(marks), covariates=np.vstack(cov),
        d_x=3, d_y=0, n_types=2, shared_xy=True,
    ).validate()


# -- synthetic stream with known law ----------------------------------------

_TYPE_COEF = (1.5, 0.4, -0.2)   # imbalance, last sign, centered spread
_MARK_COEF = (-1.0, 1.0, 0.4)   # bias, signed imbalance, centered spread
_SPREAD_CHAIN = np.array([[0.70, 0.20, 0.10],
                          [0.25, 0.50, 0.25],
                          [0.15, 0.35, 0.50]])
_IMBALANCE_OU = (0.2, 0.0, 0.5)  # theta, xbar, sigma of the latent process
_TOTAL_QUEUE = 200
_EVENT_RATE = 1.0                # orders per second


def true_class_probs(covariates):
    """The synthetic generator's conditional law P(side, mid move | x) as an
    (n, 4) matrix with classes ordered 2·side + mid_changed."""
    x = np.atleast_2d(np.asarray(covariates, dtype=np.float64))
    a0, a1, a2 = _TYPE_COEF
    b0, b1, b2 = _MARK_COEF
    ds = x[:, 2] - 2.0
    p_ask = expit(a0 * x[:, 0] + a1 * x[:, 1] + a2 * ds)
    p_mid_ask = expit(b0 + b1 * x[:, 0] + b2 * ds)
    p_mid_bid = expit(b0 - b1 * x[:, 0] + b2 * ds)
    out = np.empty((x.shape[0], 4))
    out[:, 0] = (1.0 - p_ask) * (1.0 - p_mid_bid)
    out[:, 1] = (1.0 - p_ask) * p_mid_bid
    out[:, 2] = p_ask * (1.0 - p_mid_ask)
    out[:, 3] = p_ask * p_mid_ask
    return out


def synthesize_lob_stream(horizon, seed):
    """Poisson order flow over `horizon` seconds with tractable covariates.

    Imbalance observes a clipped latent OU, spread follows a 3-state Markov
    chain, the last-sign is the previous generated side, and (side, mid
    move) draws follow `true_class_probs`.  Deterministic given the seed.
    """
    if not horizon > 0:
        raise ValueError("horizon must be > 0")
    rng = np.random.default_rng(seed)
    n = rng.poisson(_EVENT_RATE * horizon)
    times = np.sort(rng.uniform(0.0, horizon, size=n))
    dts = np.diff(times, prepend=0.0)

    theta, xbar, sigma = _IMBALANCE_OU
    init = xbar + sigma / np.sqrt(2.0 * theta) * rng.standard_normal()
    latent = np.asarray(kernels.active.ou_path(
        init, dts, rng.standard_normal(n), theta, xbar, sigma))
    qty_bid = np.clip(np.rint(0.5 * (1.0 + np.clip(latent, -0.99, 0.99))
                              * _TOTAL_QUEUE), 1, _TOTAL_QUEUE - 1).astype(np.int64)
    qty_ask = _TOTAL_QUEUE - qty_bid
    imbalance = (qty_bid - qty_ask) / float(_TOTAL_QUEUE)

    u_spread = rng.uniform(size=n)
    u_side = rng.uniform(size=n)
    u_mid = rng.uniform(size=n)
    spread_cdf = np.cumsum(_SPREAD_CHAIN, axis=1)

    # conditional probabilities for all 6 (sign, spread) cells, vectorized in j
    a0, a1, a2 = _TYPE_COEF
    b0, b1, b2 = _MARK_COEF
    ds = np.array([-1.0, 0.0, 1.0])
    p_ask_tab = expit(a0 * imbalance[:, None, None]
                      + a1 * np.array([-1.0, 1.0])[None, :, None]
                      + a2 * ds[None, None, :])        # (n, sign01, spread-1)
    p_mid_tab = expit(b0 + b1 * imbalance[:, None, None]
                      * np.array([-1.0, 1.0])[None, :, None]
                      + b2 * ds[None, None, :])        # (n, side, spread-1)

    side = np.empty(n, dtype=np.int64)
    mid = np.empty(n, dtype=np.int64)
    spread = np.empty(n, dtype=np.int64)
    best_bid = np.empty(n, dtype=np.int64)
    state, sign01, bid = 0, 1, 10_000
    for j in range(n):
        spread[j] = state + 1
        best_bid[j] = bid
        s = 1 if u_side[j] < p_ask_tab[j, sign01, state] else 0
        side[j] = s
        mid[j] = 1 if u_mid[j] < p_mid_tab[j, s, state] else 0
        sign01 = s
        if mid[j]:
            bid += 2 * s - 1
        state = int(np.searchsorted(spread_cdf[state], u_spread[j], side="right"))
        state = min(state, 2)

    return RawLobEvents(
        timestamp_us=np.rint(times * 1e6).astype(np.int64),
        side=side,
        best_bid=best_bid,
        best_ask=best_bid + spread,
        qty_bid=qty_bid,
        qty_ask=qty_ask,
        mid_changed=mid,
    )


# -- CSV interface -----------------------------------------------------------

def save_lob_csv(events, path):
    cols = np.column_stack([events.timestamp_us, events.side, events.best_bid,
                            events.best_ask, events.qty_bid, events.qty_ask,
                            events.mid_changed])
    np.savetxt(path, cols, fmt="%d", delimiter=",", header=LOB_CSV_HEADER,
               comments="")


def load_lob_csv(path):
    path = Path(path)
    with open(path) as fh:
        header = fh.readline().strip()
    if header != LOB_CSV_HEADER:
        raise ValueError(f"unexpected header in {path}: {header!r} "
                         f"(want {LOB_CSV_HEADER!r})")
    data = np.loadtxt(path, delimiter=",", skiprows=1, dtype=np.int64, ndmin=2)
    if data.size == 0:
        warnings.warn(f"no events in {path}")
        data = data.reshape(0, 7)
    return RawLobEvents(*[data[:, j] for j in range(7)])
