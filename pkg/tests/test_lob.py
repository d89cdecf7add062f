"""Order-book ingestion rules, the synthetic stream's law, and CSV I/O."""

import numpy as np
import pytest
from scipy.special import expit

from ratiopp.lob import (LOB_CSV_HEADER, RawLobEvents, compute_covariates,
                         load_lob_csv, merge_sessions, save_lob_csv,
                         synthesize_lob_stream, to_marked_sample,
                         true_class_probs)
from ratiopp.sim import simulate, reference_model


def _raw(ts, side, bid, ask, qb, qa, mid):
    return RawLobEvents(
        timestamp_us=np.asarray(ts, dtype=np.int64),
        side=np.asarray(side, dtype=np.int64),
        best_bid=np.asarray(bid, dtype=np.int64),
        best_ask=np.asarray(ask, dtype=np.int64),
        qty_bid=np.asarray(qb, dtype=np.int64),
        qty_ask=np.asarray(qa, dtype=np.int64),
        mid_changed=np.asarray(mid, dtype=np.int64))


def _hand_stream():
    # (imbalance, sign, spread) rules on three clean rows.
    return _raw(ts=[1_000_000, 2_000_000, 3_000_000],
                side=[1, 0, 1],
                bid=[100, 100, 100],
                ask=[101, 105, 102],
                qb=[100, 60, 10],
                qa=[50, 20, 30],
                mid=[0, 1, 0])


# -- covariate rules ----------------------------------------------------------

def test_covariate_hand_values():
    cov = compute_covariates(_hand_stream())
    assert cov.n_rejected == 0
    assert np.allclose(cov.imbalance, [(100 - 50) / 150, 0.5, -0.5],
                       atol=1e-15)
    # 5-tick spread clips to 3; in-range spreads pass through
    assert np.array_equal(cov.spread_ticks, [1, 3, 2])
    # first sign is seeded +1; afterwards it is the previous side's sign
    assert np.array_equal(cov.last_sign, [1, 1, -1])
    matrix = cov.matrix()
    assert matrix.shape == (3, 3) and matrix.dtype == np.float64
    assert np.array_equal(matrix[2], [-0.5, -1.0, 2.0])


def test_spread_respects_tick_size():
    events = _raw([1_000_000], [0], [200], [201], [10], [10], [0])
    assert np.array_equal(compute_covariates(events, tick_size=0.5).spread_ticks,
                          [2])
    assert np.array_equal(compute_covariates(events, tick_size=1.0).spread_ticks,
                          [1])


def test_rejected_rows_are_invisible_to_the_sign_state():
    events = _raw(ts=[1, 2, 3, 4],
                  side=[0, 1, 1, 1],
                  bid=[100, 101, 100, 100],
                  ask=[101, 101, 101, 101],   # row 2 is crossed
                  qb=[50, 50, 0, 50],          # row 3 has an empty bid queue
                  qa=[50, 50, 50, 50],
                  mid=[0, 0, 0, 0])
    cov = compute_covariates(events)
    assert cov.n_rejected == 2
    assert np.array_equal(cov.accepted, [True, False, False, True])
    # the accepted subsequence behaves as if rejected rows never existed:
    # the 4th row's last sign comes from row 1 (a bid order), not row 2/3
    assert np.array_equal(cov.last_sign, [1, -1])


def test_covariates_are_causal_under_truncation():
    events = synthesize_lob_stream(horizon=300.0, seed=21)
    full = compute_covariates(events)
    m = 97
    prefix = _raw(events.timestamp_us[:m], events.side[:m],
                  events.best_bid[:m], events.best_ask[:m],
                  events.qty_bid[:m], events.qty_ask[:m],
                  events.mid_changed[:m])
    part = compute_covariates(prefix)
    k = part.imbalance.shape[0]
    assert np.array_equal(part.imbalance, full.imbalance[:k])
    assert np.array_equal(part.last_sign, full.last_sign[:k])
    assert np.array_equal(part.spread_ticks, full.spread_ticks[:k])


def test_empty_stream_rejected():
    empty = _raw([], [], [], [], [], [], [])
    with pytest.raises(ValueError, match="empty"):
        compute_covariates(empty)


def test_raw_events_validation():
    with pytest.raises(ValueError, match="length mismatch"):
        _raw([1, 2], [0], [100, 100], [101, 101], [1, 1], [1, 1], [0, 0])
    with pytest.raises(ValueError, match="nondecreasing"):
        _raw([2, 1], [0, 0], [100, 100], [101, 101], [1, 1], [1, 1], [0, 0])
    with pytest.raises(ValueError, match="binary"):
        _raw([1, 2], [0, 2], [100, 100], [101, 101], [1, 1], [1, 1], [0, 0])


# -- conversion to a classification sample ------------------------------------

def test_to_marked_sample_layout():
    sample = to_marked_sample(_hand_stream())
    # the first accepted event carries the seeded sign and is dropped
    assert sample.n_events == 2
    assert np.array_equal(sample.times, [2.0, 3.0])
    assert sample.T == 3.0
    assert np.array_equal(sample.types, [0, 1])
    assert np.array_equal(sample.marks, [1, 0])
    assert np.array_equal(sample.labels, [1, 2])
    assert sample.d_x == 3 and sample.d_y == 0 and sample.n_types == 2
    assert sample.shared_xy
    assert np.array_equal(sample.covariates,
                          [[0.5, 1.0, 3.0], [-0.5, -1.0, 2.0]])
    # shared features: both stages see the full covariate vector
    assert np.array_equal(sample.x_features, sample.covariates)
    assert np.array_equal(sample.y_features, sample.covariates)


def test_tied_timestamps_get_microsecond_nudges():
    events = _raw(ts=[1_000_000, 1_000_000, 1_000_000, 2_000_000],
                  side=[0, 1, 0, 1],
                  bid=[100] * 4, ask=[101] * 4,
                  qb=[50] * 4, qa=[50] * 4, mid=[0] * 4)
    sample = to_marked_sample(events)
    expected = np.array([1_000_001, 1_000_002, 2_000_000], dtype=np.int64) / 1e6
    assert np.array_equal(sample.times, expected)
    sample.validate()


def test_fully_rejected_stream_raises():
    crossed = _raw([1, 2], [0, 1], [101, 101], [101, 101],
                   [5, 5], [5, 5], [0, 0])
    with pytest.raises(ValueError, match="no accepted events"):
        to_marked_sample(crossed)


def test_merge_sessions_offsets_and_pools():
    s1 = to_marked_sample(synthesize_lob_stream(horizon=30.0, seed=5))
    s2 = to_marked_sample(synthesize_lob_stream(horizon=30.0, seed=6))
    merged = merge_sessions([s1, s2])
    assert merged.T == pytest.approx(s1.T + s2.T, abs=1e-12)
    assert merged.n_events == s1.n_events + s2.n_events
    assert np.array_equal(merged.times[:s1.n_events], s1.times)
    assert np.allclose(merged.times[s1.n_events:], s2.times + s1.T, atol=1e-12)
    assert np.array_equal(merged.covariates,
                          np.vstack([s1.covariates, s2.covariates]))
    assert merged.shared_xy and merged.n_types == 2


def test_merge_sessions_single_passthrough_and_validation():
    s1 = to_marked_sample(synthesize_lob_stream(horizon=20.0, seed=9))
    assert merge_sessions([s1]) is s1
    with pytest.raises(ValueError, match="at least one"):
        merge_sessions([])
    other = simulate(reference_model(), horizon=10.0, seed=0)
    with pytest.raises(ValueError, match="layout"):
        merge_sessions([s1, other])


# -- the synthetic generator's law --------------------------------------------

def test_true_class_probs_rows_sum_to_one():
    rng = np.random.default_rng(1)
    x = np.column_stack([rng.uniform(-1, 1, 500),
                         rng.choice([-1.0, 1.0], 500),
                         rng.choice([1.0, 2.0, 3.0], 500)])
    p = true_class_probs(x)
    assert p.shape == (500, 4)
    assert np.all(p > 0)
    assert np.allclose(p.sum(axis=1), 1.0, atol=1e-12)


def test_true_class_probs_hand_point():
    p = true_class_probs(np.array([[1 / 3, 1.0, 3.0]]))[0]
    p_ask = expit(1.5 / 3 + 0.4 - 0.2)
    p_mid_ask = expit(-1.0 + 1 / 3 + 0.4)
    p_mid_bid = expit(-1.0 - 1 / 3 + 0.4)
    assert p[3] == pytest.approx(p_ask * p_mid_ask, abs=1e-15)
    assert p[2] == pytest.approx(p_ask * (1 - p_mid_ask), abs=1e-15)
    assert p[1] == pytest.approx((1 - p_ask) * p_mid_bid, abs=1e-15)
    assert p[0] == pytest.approx((1 - p_ask) * (1 - p_mid_bid), abs=1e-15)


def test_synthesizer_is_deterministic_per_seed():
    a = synthesize_lob_stream(horizon=40.0, seed=3)
    b = synthesize_lob_stream(horizon=40.0, seed=3)
    for name in ("timestamp_us", "side", "best_bid", "best_ask",
                 "qty_bid", "qty_ask", "mid_changed"):
        assert np.array_equal(getattr(a, name), getattr(b, name))
    c = synthesize_lob_stream(horizon=40.0, seed=4)
    assert not np.array_equal(a.timestamp_us, c.timestamp_us)
    with pytest.raises(ValueError, match="horizon"):
        synthesize_lob_stream(horizon=0.0, seed=3)


def test_synthesizer_book_is_always_clean():
    events = synthesize_lob_stream(horizon=500.0, seed=13)
    assert np.all(events.best_ask > events.best_bid)
    assert np.all(events.best_ask - events.best_bid <= 3)
    assert np.all((events.qty_bid > 0) & (events.qty_ask > 0))
    cov = compute_covariates(events)
    assert cov.n_rejected == 0


def test_generated_class_frequencies_match_declared_law():
    events = synthesize_lob_stream(horizon=20000.0, seed=77)
    sample = to_marked_sample(events)
    expected = true_class_probs(sample.covariates).mean(axis=0)
    observed = sample.class_counts() / sample.n_events
    assert np.allclose(observed, expected, atol=0.02)


# -- CSV interface ------------------------------------------------------------

def test_lob_csv_round_trip(tmp_path):
    events = synthesize_lob_stream(horizon=60.0, seed=2)
    path = tmp_path / "session.csv"
    save_lob_csv(events, path)
    back = load_lob_csv(path)
    for name in ("timestamp_us", "side", "best_bid", "best_ask",
                 "qty_bid", "qty_ask", "mid_changed"):
        assert np.array_equal(getattr(events, name), getattr(back, name))


def test_lob_csv_header_is_checked(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("time,side\n1,0\n")
    with pytest.raises(ValueError, match="unexpected header"):
        load_lob_csv(path)


def test_lob_csv_empty_file_warns(tmp_path):
    path = tmp_path / "empty.csv"
    path.write_text(LOB_CSV_HEADER + "\n")
    with pytest.warns(UserWarning, match="no events"):
        back = load_lob_csv(path)
    assert back.n == 0
