"""End-to-end acceptance checks.

Each test verifies one headline guarantee of the package and prints a
single PASS/FAIL line (collected into a scorecard at the end of the pytest
run).  The long-running studies reuse the public harness entry points with
their default configurations, so a passing run certifies the same numbers a
user would reproduce from the CLI.
"""

import math

import numpy as np
import pytest
from scipy import stats

from ratiopp.estimators import (OracleJointModel, TrainConfig, predict_joint,
                                train_twostep)
from ratiopp.harness import ExperimentConfig, run_convergence_study, \
    run_robustness_grid
from ratiopp.lob import (compute_covariates, synthesize_lob_stream,
                         to_marked_sample, true_class_probs, RawLobEvents)
from ratiopp.metrics import empirical_risk_onestep, empirical_risk_twostep
from ratiopp.net import NetConfig, init_network, param_count
from ratiopp.sim import constant_model, reference_model, simulate
from ratiopp.theory import (NetSizeSpec, SmoothnessSpec,
                            compatibility_constants, covering_bound, rate_phi,
                            tail_integral_bound, tail_integral_quadrature)

RESULTS = []


def _record(name, ok, detail):
    verdict = "PASS" if ok else "FAIL"
    line = f"{name}: {verdict} ({detail})"
    RESULTS.append(line)
    print(line)
    assert ok, line


# -- 1: parameter counts ------------------------------------------------------

@pytest.mark.acceptance
def test_c1_parameter_counts():
    single = param_count(NetConfig(in_dim=3, out_dim=7, n_layers=8, width=64))
    type_net = param_count(NetConfig(in_dim=2, out_dim=3, n_layers=8, width=64))
    mark_net = param_count(NetConfig(in_dim=1, out_dim=1, n_layers=8, width=64))
    total = type_net + 4 * mark_net
    ok = single == 33_991 and total == 167_559
    _record("C1 parameter counts", ok,
            f"one-step {single} (want 33991), two-step total {total} "
            f"(want 167559)")


# -- 2: gradient correctness --------------------------------------------------

def _central_fd(net, x, labels, h=1e-6):
    base = net.params.copy()
    fd = np.empty_like(base)
    for j in range(base.size):
        net.params[...] = base
        net.params[j] += h
        up, _ = net.loss_and_grad(x, labels)
        net.params[...] = base
        net.params[j] -= h
        down, _ = net.loss_and_grad(x, labels)
        fd[j] = (up - down) / (2.0 * h)
    net.params[...] = base
    return fd


@pytest.mark.acceptance
def test_c2_gradients_match_finite_differences():
    rng = np.random.default_rng(2024)
    worst = 0.0
    for trial in range(50):
        cfg = NetConfig(in_dim=int(rng.integers(1, 5)),
                        out_dim=int(rng.choice([1, 3, 7])),
                        n_layers=int(rng.integers(1, 4)),
                        width=int(rng.integers(2, 11)))
        net = init_network(cfg, [99, trial])
        n = int(rng.integers(8, 25))
        x = rng.normal(size=(n, cfg.in_dim))
        labels = rng.integers(0, cfg.out_dim + 1, size=n)
        _, grad = net.loss_and_grad(x, labels)
        fd = _central_fd(net, x, labels)
        rel = np.abs(grad - fd).max() / max(np.abs(fd).max(), 1e-12)
        worst = max(worst, rel)
    ok = worst < 1e-4
    _record("C2 gradient check (50 random configs)", ok,
            f"worst relative error {worst:.3e} < 1e-4")


# -- 3: event-stream generation -----------------------------------------------

@pytest.mark.acceptance
def test_c3_thinning_correctness():
    model = constant_model()  # flat baseline, total intensity 4
    hits = 0
    for seed in range(20):
        sample = simulate(model, horizon=500.0, seed=seed)
        gaps = np.diff(sample.times, prepend=0.0)
        p = stats.kstest(gaps, "expon", args=(0.0, 0.25)).pvalue
        hits += p > 0.01
    ref = simulate(reference_model(), horizon=10_000.0, seed=11)
    rates = np.bincount(ref.types, minlength=4) / ref.T
    target = np.array([2.0, 2.0, 2.0, 3.0 - 1.0 / math.sqrt(1.1)])
    rate_ok = np.all(np.abs(rates / target - 1.0) < 0.10)
    ok = hits >= 18 and rate_ok
    _record("C3 thinning correctness", bool(ok),
            f"KS pass {hits}/20 runs (need >=18); per-type rates "
            f"{np.round(rates, 3).tolist()} vs {np.round(target, 3).tolist()} "
            f"within 10%: {bool(rate_ok)}")


# -- 4: truth-plugged risk ----------------------------------------------------

@pytest.mark.acceptance
def test_c4_oracle_risk_is_zero():
    model = reference_model()
    fresh = simulate(model, horizon=80.0, seed=4)
    oracle = OracleJointModel(model)
    r1 = empirical_risk_onestep(oracle, model, fresh)
    r2 = empirical_risk_twostep(oracle, model, fresh)
    ok = r1 == 0.0 and r2 == 0.0
    _record("C4 oracle risk", ok, f"one-step {r1!r}, two-step {r2!r} (want 0.0)")


# -- 5: convergence across horizons -------------------------------------------

ERR_BAND = (-0.48, -0.18)
RISK_BAND = (-0.87, -0.47)


@pytest.mark.acceptance
@pytest.mark.slow
def test_c5_convergence_study(tmp_path):
    config = ExperimentConfig(kind="convergence")
    result = run_convergence_study(config, tmp_path / "convergence")

    checks, details = [], []
    for method in config.methods:
        for measure, band in (("eps_l2", ERR_BAND), ("eps_linf", ERR_BAND),
                              ("risk", RISK_BAND)):
            slope = result.slopes[method][measure]["slope"]
            inside = band[0] <= slope <= band[1]
            checks.append(inside)
            details.append(f"{method}/{measure} {slope:.3f}"
                           f"{'' if inside else ' OUT'}")
    largest = max(config.horizons)
    mean_l2 = {a["method"]: a["eps_l2"] for a in result.aggregates
               if a["T"] == largest}
    paired = mean_l2["two-step"] < mean_l2["one-step"]
    checks.append(paired)
    details.append(f"two-step eps_l2 {mean_l2['two-step']:.4f} < one-step "
                   f"{mean_l2['one-step']:.4f} at T={largest:g}: {paired}")
    _record("C5 convergence slopes", all(checks), "; ".join(details))


# -- 6: robustness over network shapes ----------------------------------------

@pytest.mark.acceptance
@pytest.mark.slow
def test_c6_shape_robustness(tmp_path):
    config = ExperimentConfig(kind="robustness", horizons=(8000.0,),
                              depth_choices=(2, 8), width_choices=(16, 64))
    result = run_robustness_grid(config, tmp_path / "robustness")
    details, ok = [], True
    for method in config.methods:
        values = [a["eps_l2"] for a in result.aggregates
                  if a["method"] == method]
        ratio = max(values) / min(values)
        ok &= ratio <= 3.0
        details.append(f"{method} max/min mean eps_l2 = {ratio:.2f}")
    _record("C6 shape robustness", bool(ok), "; ".join(details) + " (need <= 3)")


# -- 7: closed-form bounds ----------------------------------------------------

@pytest.mark.acceptance
def test_c7_theory_bounds():
    # dominance of the closed-form tail bound over adaptive quadrature
    ps = (0.5, 0.75, 1.0, 1.5, 2.0)
    qs = (0.0, 0.5, 1.0, 2.0, 3.0)
    cs = (1.0, 1.25, 2.0, 4.0, 10.0)
    bs = (1.0, 1.5, 2.0, 3.0, 5.0)
    n_cases, n_dominated, worst_margin = 0, 0, np.inf
    for p in ps:
        for q in qs:
            for c in cs:
                for b in bs:
                    k = max(1, math.ceil((q + 1.0) / p - 1e-12))
                    bound = tail_integral_bound(p, q, c, b, k)
                    quad = tail_integral_quadrature(p, q, c, b)
                    n_cases += 1
                    n_dominated += bound >= quad * (1.0 - 1e-9)
                    worst_margin = min(worst_margin, bound / quad)
    dominance_ok = n_dominated == n_cases == 625

    lo, hi = compatibility_constants(0.5, 2.0)
    xs = np.linspace(0.5, 2.0, 300_001)
    xs = xs[np.abs(xs - 1.0) > 1e-9]
    chi = (xs - 1.0 - np.log(xs)) / (xs - 1.0) ** 2
    scan_ok = abs(lo - chi.min()) < 1e-4 and abs(hi - chi.max()) < 1e-4
    frozen_ok = abs(lo - 0.30685) < 1e-4 and abs(hi - 0.77259) < 1e-4

    phi = rate_phi(1e4, SmoothnessSpec(betas=(1.0,), ts=(2,)))
    phi_ok = phi == pytest.approx(0.01, rel=1e-12)
    cover = covering_bound(NetSizeSpec(depth=1, widths=(1, 1, 1),
                                       sparsity=1, delta=1.0))
    cover_ok = cover == pytest.approx(2.0 * math.log(32.0), rel=1e-12)

    ok = dominance_ok and scan_ok and frozen_ok and phi_ok and cover_ok
    _record("C7 theory bounds", bool(ok),
            f"tail dominance {n_dominated}/625 (min bound/integral "
            f"{worst_margin:.3f}); compatibility ({lo:.5f}, {hi:.5f}) vs scan "
            f"and frozen values ok={scan_ok and frozen_ok}; rate {phi:.6g} "
            f"(want 0.01); covering {cover:.12f} (want {2 * math.log(32):.12f})")


# -- 8: order-book pipeline ---------------------------------------------------

def _lob_rule_fixtures_ok():
    events = RawLobEvents(
        timestamp_us=np.array([1, 2, 3], dtype=np.int64),
        side=np.array([1, 0, 1], dtype=np.int64),
        best_bid=np.array([100, 100, 100], dtype=np.int64),
        best_ask=np.array([101, 105, 102], dtype=np.int64),
        qty_bid=np.array([100, 60, 10], dtype=np.int64),
        qty_ask=np.array([50, 20, 30], dtype=np.int64),
        mid_changed=np.array([0, 1, 0], dtype=np.int64))
    cov = compute_covariates(events)
    imbalance_ok = np.allclose(cov.imbalance, [1 / 3, 0.5, -0.5], atol=1e-15)
    sign_ok = np.array_equal(cov.last_sign, [1, 1, -1])  # seeded +1, then sides
    clip_ok = np.array_equal(cov.spread_ticks, [1, 3, 2])  # 5 ticks clips to 3
    return imbalance_ok, sign_ok, clip_ok


@pytest.mark.acceptance
@pytest.mark.slow
def test_c8_order_book_pipeline():
    events = synthesize_lob_stream(horizon=100_000.0, seed=9)
    sample = to_marked_sample(events)
    traincfg = TrainConfig(seed=109, patience=5, max_epochs=400,
                           plateau_decays=5)
    shape = NetConfig(in_dim=3, out_dim=1, n_layers=8, width=64)
    model = train_twostep(sample, type_cfg=shape, mark_cfg=shape,
                          traincfg=traincfg)

    x0 = np.linspace(-0.9, 0.9, 37)
    cells = [(sgn, spr) for sgn in (-1.0, 1.0) for spr in (1.0, 2.0, 3.0)]
    pts = np.vstack([np.column_stack([x0, np.full(37, sgn), np.full(37, spr)])
                     for sgn, spr in cells])
    linf = float(np.abs(predict_joint(model, pts)
                        - true_class_probs(pts)).max())
    imbalance_ok, sign_ok, clip_ok = _lob_rule_fixtures_ok()
    ok = linf < 0.05 and imbalance_ok and sign_ok and clip_ok
    _record("C8 order-book pipeline", bool(ok),
            f"worst-case probability error {linf:.4f} < 0.05 on "
            f"{sample.n_events} events; covariate rules: imbalance "
            f"{imbalance_ok}, sign {sign_ok}, spread clip {clip_ok}")
