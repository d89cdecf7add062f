"""Evaluation-grid construction, error measures, excess risk, and reports."""

import numpy as np
import pytest

from ratiopp.estimators import (OracleJointModel, TrainConfig, predict_joint,
                                train_onestep, train_twostep)
from ratiopp.metrics import (ErrorReport, GridSpec,
                             empirical_binned_probs, empirical_risk_onestep,
                             empirical_risk_twostep, grid_errors,
                             grid_joint_errors, heldout_nll, quantile_grid,
                             quantile_grid_from_sample, read_reports,
                             write_reports)
from ratiopp.sim import (MarkedPointSample, constant_model, reference_model,
                         simulate)

# Joint class probabilities of the reference generator at x=(0,0), y=0.
ORIGIN_JOINT = np.array([0.0625, 0.1875, 0.2375, 0.0125,
                         0.125, 0.125, 0.15, 0.1])

TINY_TRAIN = TrainConfig(max_epochs=3, batch_size=128, patience=2, seed=0)


# -- quantile grids -----------------------------------------------------------

def test_quantile_grid_is_regular_between_inner_quantiles():
    draws = np.linspace(0.0, 1.0, 101)
    grid = quantile_grid([draws], G=4)
    (axis,) = grid.axes
    assert axis.shape == (5,)
    assert axis[0] == pytest.approx(0.01, abs=1e-15)
    assert axis[-1] == pytest.approx(0.99, abs=1e-12)
    steps = np.diff(axis)
    assert np.allclose(steps, steps[0], rtol=0, atol=1e-12)


def test_quantile_grid_input_validation():
    good = np.linspace(0.0, 1.0, 150)
    with pytest.raises(ValueError, match="G"):
        quantile_grid([good], G=0)
    with pytest.raises(ValueError, match="100 draws"):
        quantile_grid([np.linspace(0.0, 1.0, 99)], G=4)


def test_quantile_grid_warns_on_degenerate_axis():
    with pytest.warns(UserWarning, match="degenerate"):
        grid = quantile_grid([np.full(120, 3.5)], G=6)
    (axis,) = grid.axes
    assert np.array_equal(axis, np.full(7, 3.5))


def test_grid_cardinality_and_point_ordering():
    grid = GridSpec(axes=(np.array([0.0, 1.0, 2.0]), np.array([10.0, 20.0])))
    assert grid.cardinality == 6
    expected = np.array([[0.0, 10.0], [0.0, 20.0],
                         [1.0, 10.0], [1.0, 20.0],
                         [2.0, 10.0], [2.0, 20.0]])
    assert np.array_equal(grid.points(), expected)


def test_quantile_grid_from_sample_uses_snapshot_columns():
    sample = simulate(reference_model(), horizon=40.0, seed=5)
    grid = quantile_grid_from_sample(sample, G=7)
    assert len(grid.axes) == 3
    for j, axis in enumerate(grid.axes):
        lo, hi = np.quantile(sample.grid_covariates[:, j], [0.01, 0.99])
        assert axis[0] == pytest.approx(lo, abs=1e-12)
        assert axis[-1] == pytest.approx(hi, abs=1e-12)


# -- uniform error measures ---------------------------------------------------

def test_grid_errors_hand_values_single_point():
    pred = np.full((1, 8), 0.125)
    eps_l2, eps_linf = grid_errors(pred, ORIGIN_JOINT[None, :])
    assert eps_linf == pytest.approx(0.1125, abs=1e-15)
    assert eps_l2 == pytest.approx(0.4, abs=1e-14)


def test_grid_errors_zero_for_identical_tables():
    table = np.tile(ORIGIN_JOINT, (9, 1))
    assert grid_errors(table, table) == (0.0, 0.0)


def test_grid_errors_invariant_to_grid_point_order():
    rng = np.random.default_rng(11)
    pred = rng.uniform(0.0, 1.0, size=(25, 8))
    truth = rng.uniform(0.0, 1.0, size=(25, 8))
    perm = rng.permutation(25)
    assert grid_errors(pred, truth) == grid_errors(pred[perm], truth[perm])


def test_grid_joint_errors_vanish_for_oracle():
    model = reference_model()
    sample = simulate(model, horizon=40.0, seed=7)
    grid = quantile_grid_from_sample(sample, G=4)
    eps_l2, eps_linf = grid_joint_errors(OracleJointModel(model), model, grid)
    assert eps_l2 == 0.0 and eps_linf == 0.0


# -- excess risk --------------------------------------------------------------

def test_oracle_risk_is_exactly_zero_for_both_estimators():
    model = reference_model()
    fresh = simulate(model, horizon=60.0, seed=17)
    oracle = OracleJointModel(model)
    assert empirical_risk_onestep(oracle, model, fresh) == 0.0
    assert empirical_risk_twostep(oracle, model, fresh) == 0.0


def test_risk_positive_for_mismatched_predictor():
    truth = reference_model()
    fresh = simulate(truth, horizon=60.0, seed=23)
    uniform = OracleJointModel(constant_model())  # predicts 1/8 everywhere
    assert empirical_risk_onestep(uniform, truth, fresh) > 0.1
    assert empirical_risk_twostep(uniform, truth, fresh) > 0.1


def test_twostep_risk_parts_sum_and_match_joint_form():
    truth = constant_model(lambdas=(1.0, 2.0, 1.0, 1.5),
                           mark_p0=(0.3, 0.5, 0.7, 0.4))
    sample = simulate(truth, horizon=150.0, seed=3)
    fresh = simulate(truth, horizon=80.0, seed=4)
    model = train_twostep(sample, traincfg=TINY_TRAIN)

    total, type_part, mark_parts = empirical_risk_twostep(
        model, truth, fresh, return_parts=True)
    assert total == pytest.approx(type_part + sum(mark_parts), abs=1e-12)

    # The factorized risk must equal the plain joint-probability form.
    p_hat = predict_joint(model, fresh.x_features, fresh.y_features)
    p_true = truth.joint_probs(fresh.covariates[:, :fresh.d_x],
                               fresh.covariates[:, fresh.d_x:].ravel())
    idx = np.arange(fresh.n_events)
    manual = float(-np.sum(np.log(p_hat[idx, fresh.labels])
                           - np.log(p_true[idx, fresh.labels])) / fresh.T)
    assert total == pytest.approx(manual, abs=1e-12)


def test_risk_rejects_zero_probability_predictions():
    truth = constant_model()
    fresh = simulate(truth, horizon=40.0, seed=8)
    assert np.any(fresh.labels == 1), "fixture must contain class (0, 1)"
    degenerate = OracleJointModel(constant_model(mark_p0=(1.0, 0.5, 0.5, 0.5)))
    with pytest.raises(RuntimeError, match="zero predicted probability"):
        empirical_risk_onestep(degenerate, truth, fresh)
    with pytest.raises(RuntimeError, match="zero predicted probability"):
        empirical_risk_twostep(degenerate, truth, fresh)


def test_twostep_risk_rejects_onestep_model():
    truth = constant_model()
    sample = simulate(truth, horizon=60.0, seed=12)
    model = train_onestep(sample, traincfg=TINY_TRAIN)
    with pytest.raises(TypeError, match="TwoStepModel or oracle"):
        empirical_risk_twostep(model, truth, sample)


# -- held-out likelihood ------------------------------------------------------

def test_heldout_nll_matches_manual_computation():
    truth = constant_model()
    sample = simulate(truth, horizon=120.0, seed=6)
    held = simulate(truth, horizon=50.0, seed=7)

    one = train_onestep(sample, traincfg=TINY_TRAIN)
    p = predict_joint(one, held.covariates)
    manual = -np.sum(np.log(p[np.arange(held.n_events), held.labels])) / held.T
    assert heldout_nll(one, held) == pytest.approx(manual, abs=1e-12)

    two = train_twostep(sample, traincfg=TINY_TRAIN)
    p2 = predict_joint(two, held.x_features, held.y_features)
    manual2 = -np.sum(np.log(p2[np.arange(held.n_events), held.labels])) / held.T
    assert heldout_nll(two, held) == pytest.approx(manual2, abs=1e-12)


# -- binned empirical frequencies ---------------------------------------------

def _hand_binning_sample():
    times = np.arange(1, 9, dtype=np.float64) * 0.1
    types = np.array([0, 0, 1, 1, 2, 2, 3, 3])
    marks = np.array([0, 1, 0, 1, 0, 1, 0, 1])
    x0 = np.array([0.05, 0.15, 0.25, 0.35, 0.55, 0.65, 0.75, 0.95])
    x1 = np.array([1.0, 1.0, 1.0, 1.0, -1.0, -1.0, -1.0, -1.0])
    cov = np.column_stack([x0, x1, np.zeros(8)])
    return MarkedPointSample(T=1.0, times=times, types=types, marks=marks,
                             covariates=cov, d_x=2, d_y=1).validate()


def test_binned_probs_hand_case():
    sample = _hand_binning_sample()
    binned = empirical_binned_probs(sample, axis=0, n_bins=2, bin_range=(0.0, 1.0))
    assert np.array_equal(binned.edges, [0.0, 0.5, 1.0])
    assert np.array_equal(binned.centers, [0.25, 0.75])
    assert np.array_equal(binned.counts, [4, 4])
    expected_low = np.array([0.25, 0.25, 0.25, 0.25, 0, 0, 0, 0])
    assert np.array_equal(binned.freqs[0], expected_low)
    assert np.array_equal(binned.freqs[1], np.roll(expected_low, 4))


def test_binned_probs_conditioning_and_empty_bins():
    sample = _hand_binning_sample()
    binned = empirical_binned_probs(sample, axis=0, n_bins=2,
                                    conditioning={1: 1.0}, bin_range=(0.0, 1.0))
    assert np.array_equal(binned.counts, [4, 0])
    assert np.all(np.isnan(binned.freqs[1]))
    assert np.array_equal(binned.freqs[0],
                          [0.25, 0.25, 0.25, 0.25, 0, 0, 0, 0])


def test_binned_probs_rows_sum_to_one_where_populated():
    sample = simulate(constant_model(), horizon=150.0, seed=19)
    binned = empirical_binned_probs(sample, axis=0, n_bins=12)
    assert binned.counts.sum() == sample.n_events
    populated = binned.counts > 0
    assert np.allclose(binned.freqs[populated].sum(axis=1), 1.0, atol=1e-12)
    assert np.all(np.isnan(binned.freqs[~populated]))


def test_binned_probs_no_matching_events():
    sample = _hand_binning_sample()
    binned = empirical_binned_probs(sample, axis=0, n_bins=3,
                                    conditioning={1: 99.0})
    assert binned.counts.sum() == 0
    assert np.all(np.isnan(binned.freqs))


def test_binned_probs_validates_bin_count():
    with pytest.raises(ValueError, match="n_bins"):
        empirical_binned_probs(_hand_binning_sample(), axis=0, n_bins=0)


# -- result rows --------------------------------------------------------------

def test_error_report_validation():
    good = ErrorReport(method="one-step", T=100.0, seed=0, nL=2, nN=16,
                       eps_l2=0.5, eps_linf=0.25, risk=-0.01)
    assert good.wall_s == 0.0
    with pytest.raises(ValueError, match="out of range"):
        ErrorReport(method="one-step", T=100.0, seed=0, nL=2, nN=16,
                    eps_l2=-0.5, eps_linf=0.25, risk=0.0)
    with pytest.raises(ValueError, match="out of range"):
        ErrorReport(method="one-step", T=100.0, seed=0, nL=2, nN=16,
                    eps_l2=0.5, eps_linf=1.25, risk=0.0)
    with pytest.raises(ValueError, match="finite"):
        ErrorReport(method="one-step", T=100.0, seed=0, nL=2, nN=16,
                    eps_l2=0.5, eps_linf=0.25, risk=float("nan"))


def test_reports_round_trip_through_csv(tmp_path):
    reports = [
        ErrorReport(method="one-step", T=1000.0, seed=3, nL=2, nN=16,
                    eps_l2=0.12345678901234567, eps_linf=0.25,
                    risk=-0.0072913, wall_s=1.2345),
        ErrorReport(method="two-step", T=2000.0, seed=4, nL=8, nN=64,
                    eps_l2=1.0 / 3.0, eps_linf=2.0 / 3.0,
                    risk=0.5, wall_s=0.25),
    ]
    path = tmp_path / "results.csv"
    write_reports(reports, path)
    rows = read_reports(path)
    assert rows.shape == (2,)
    for row, rep in zip(rows, reports):
        assert row["method"] == rep.method
        assert row["T"] == rep.T and row["seed"] == rep.seed
        assert row["nL"] == rep.nL and row["nN"] == rep.nN
        # %.17g round-trips doubles exactly; wall time is truncated to ms.
        assert row["eps_l2"] == rep.eps_l2
        assert row["eps_linf"] == rep.eps_linf
        assert row["risk"] == rep.risk
        assert row["wall_s"] == pytest.approx(rep.wall_s, abs=5e-4)
