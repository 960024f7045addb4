import numpy as np
import pytest
from scipy.optimize import minimize
from scipy.special import expit

from survnie import (
    SimulationSpec,
    assemble_nuisance,
    fit_censoring_km,
    fit_conditional_mean_regression,
    fit_conditional_mediator_means,
    fit_exposure_prob,
    fit_ksv_slope,
    fit_reciprocal_odds,
    generate,
    make_context,
    synthetic_responses,
)
from survnie.config import AnalysisConfig
from survnie.errors import CollinearityError, NumericError, PositivityError
from survnie.nuisance import PrefixStats, adjusted_exposure_shift, build_risk_curves

from conftest import SERIAL, toy_censored_dataset


class TestExposureProb:
    def test_balanced(self):
        assert fit_exposure_prob([0, 1, 0, 1]) == (0.5, 0.5)

    def test_unbalanced(self):
        assert fit_exposure_prob([1, 1, 1, 0]) == (0.25, 0.75)

    def test_single_level(self):
        with pytest.raises(PositivityError):
            fit_exposure_prob([1, 1])


class TestMediatorMeans:
    def test_group_means(self):
        m0, m1, shift = fit_conditional_mediator_means([0, 0, 1, 1], [1.0, 2.0, 3.0, 4.0])
        assert (m0, m1, shift) == (1.5, 3.5, 2.0)

    def test_identical_groups(self):
        _, _, shift = fit_conditional_mediator_means([0, 1, 0, 1], [2.0, 2.0, 5.0, 5.0])
        assert shift == 0.0

    def test_single_level(self):
        with pytest.raises(PositivityError):
            fit_conditional_mediator_means([0, 0], [1.0, 2.0])


class TestSlope:
    def test_orthogonal_design_reduces_to_plain_regression(self):
        a = np.array([0.0, 1.0, 0.0, 1.0])
        b = np.array([0.0, 0.0, 1.0, 1.0])
        assert fit_ksv_slope(a, b, b) == pytest.approx(1.0, abs=1e-12)

    def test_constant_response(self):
        a = np.array([0.0, 1.0, 0.0, 1.0])
        b = np.array([0.3, -0.1, 0.9, 0.4])
        assert fit_ksv_slope(a, b, np.full(4, 2.0)) == pytest.approx(0.0, abs=1e-12)

    def test_censored_toy_matches_least_squares(self):
        x = np.array([0.2, 0.9, 0.4, 1.4, 0.6, 1.1])
        d = np.array([1, 0, 1, 1, 1, 0])
        a = np.array([0.0, 1.0, 0.0, 1.0, 1.0, 0.0])
        b = np.array([0.5, -0.2, 1.1, 0.7, -0.5, 0.3])
        cm = fit_censoring_km(x, d)
        y = synthetic_responses(x, cm, delta=d).y
        design = np.column_stack([np.ones(6), a, b])
        coef, *_ = np.linalg.lstsq(design, y, rcond=None)
        assert fit_ksv_slope(a, b, y) == pytest.approx(coef[2], abs=1e-10)

    def test_equals_ols_without_censoring(self):
        rng = np.random.default_rng(11)
        for _ in range(5):
            n = 50
            a = (rng.random(n) < 0.5).astype(float)
            b = rng.standard_normal(n)
            t = 0.5 * a + 0.3 * b + rng.standard_normal(n)
            design = np.column_stack([np.ones(n), a, b])
            coef, *_ = np.linalg.lstsq(design, t, rcond=None)
            assert fit_ksv_slope(a, b, t) == pytest.approx(coef[2], abs=1e-10)

    def test_adjusted_matches_full_least_squares(self):
        rng = np.random.default_rng(2)
        n = 80
        a = (rng.random(n) < 0.5).astype(float)
        z = rng.standard_normal((n, 2))
        b = 0.4 * a + z[:, 0] + rng.standard_normal(n)
        y = 0.2 * b + 0.5 * a - 0.3 * z[:, 1] + rng.standard_normal(n)
        design = np.column_stack([np.ones(n), a, b, z])
        coef, *_ = np.linalg.lstsq(design, y, rcond=None)
        assert fit_ksv_slope(a, b, y, z=z) == pytest.approx(coef[2], abs=1e-9)

    def test_adjusted_with_null_confounder_equals_unadjusted(self):
        rng = np.random.default_rng(3)
        n = 60
        a = (rng.random(n) < 0.5).astype(float)
        b = rng.standard_normal(n)
        y = 0.3 * b + a + rng.standard_normal(n)
        plain = fit_ksv_slope(a, b, y)
        degenerate = fit_ksv_slope(a, b, y, z=np.zeros((n, 1)))
        assert degenerate == pytest.approx(plain, abs=1e-10)

    def test_collinear_mediator_rejected(self):
        a = np.array([0.0, 1.0, 0.0, 1.0])
        with pytest.raises(CollinearityError):
            fit_ksv_slope(a, a.copy(), np.array([1.0, 2.0, 3.0, 4.0]), mediator=0)

    def test_adjusted_shift_matches_least_squares(self):
        rng = np.random.default_rng(4)
        n = 70
        a = (rng.random(n) < 0.5).astype(float)
        z = rng.standard_normal((n, 1))
        b = 0.7 * a - 0.2 * z[:, 0] + rng.standard_normal(n)
        design = np.column_stack([np.ones(n), a, z])
        coef, *_ = np.linalg.lstsq(design, b, rcond=None)
        assert adjusted_exposure_shift(a, b, z) == pytest.approx(coef[1], abs=1e-9)


class TestReciprocalOdds:
    def test_balanced_design_exact_zero(self):
        fit = fit_reciprocal_odds([0, 0, 1, 1], [-1.0, 1.0, -1.0, 1.0])
        assert fit.intercept == 0.0
        assert fit.slope == 0.0
        assert fit.reciprocal_odds(3.7) == 1.0

    def test_zero_covariance_gives_exact_zero_slope(self):
        a = np.array([0, 1, 0, 1, 1, 0])
        b = np.array([1.0, 1.0, 2.0, 2.0, 3.0, 3.0])  # same values in each arm
        assert float(np.cov(a, b, bias=True)[0, 1]) == 0.0
        fit = fit_reciprocal_odds(a, b)
        assert fit.slope == 0.0
        assert fit.intercept == pytest.approx(0.0, abs=1e-15)

    def test_matches_direct_likelihood_optimum(self):
        rng = np.random.default_rng(8)
        b = rng.standard_normal(200)
        a = (rng.random(200) < expit(0.4 + 0.8 * b)).astype(float)

        def nll(theta):
            eta = theta[0] + theta[1] * b
            return -np.sum(a * eta - np.logaddexp(0.0, eta))

        opt = minimize(nll, x0=[0.0, 0.0], method="BFGS").x
        fit = fit_reciprocal_odds(a, b)
        assert fit.intercept == pytest.approx(opt[0], abs=1e-5)
        assert fit.slope == pytest.approx(opt[1], abs=1e-5)
        assert fit.reciprocal_odds(0.5) == pytest.approx(
            np.exp(-(opt[0] + opt[1] * 0.5)), rel=1e-4
        )

    def test_separation_clips_and_flags(self):
        b = np.array([-2.0, -1.0, 1.0, 2.0])
        a = np.array([0, 0, 1, 1])
        fit = fit_reciprocal_odds(a, b)
        assert fit.separation
        assert abs(fit.slope) <= 15.0
        assert abs(fit.intercept) <= 15.0

    def test_single_level_error(self):
        with pytest.raises(PositivityError):
            fit_reciprocal_odds([1, 1, 1], [0.0, 1.0, 2.0])

    def test_nonconvergence_raises_numeric(self):
        rng = np.random.default_rng(1)
        b = rng.standard_normal(40)
        a = (rng.random(40) < expit(b)).astype(float)
        with pytest.raises(NumericError):
            fit_reciprocal_odds(a, b, max_iter=1)


def masked_oracle(x, a, bk, y, a_val, s):
    # brute-force transcription of the masked-moment regression
    n = len(x)
    mask = ((np.asarray(a) == a_val) & (np.asarray(x) >= s)).astype(float)
    mb = float(np.sum(mask * bk) / n)
    my = float(np.sum(mask * y) / n)
    var = float(np.sum(mask * bk * bk) / n) - mb * mb
    cov = float(np.sum(mask * bk * y) / n) - mb * my
    slope = cov / var
    return my - slope * mb, slope


class TestConditionalMeanRegression:
    def test_exact_linear_relation_matches_oracle(self):
        rng = np.random.default_rng(0)
        n = 40
        a = np.array([0, 1] * 20, dtype=float)
        x = rng.standard_normal(n)
        b = rng.standard_normal(n)
        y = np.where(a == 1, 2.0 * b + 1.0, 0.0)
        fit = fit_conditional_mean_regression(x, a, b, y, a_val=1)
        r1, r2 = masked_oracle(x, a, b, y, 1, -np.inf)
        assert fit.intercept == pytest.approx(r1, abs=1e-12)
        assert fit.slope == pytest.approx(r2, abs=1e-12)
        assert not fit.fallback

    def test_threshold_matches_oracle(self):
        rng = np.random.default_rng(7)
        n = 60
        a = (rng.random(n) < 0.5).astype(float)
        a[:2] = (0.0, 1.0)
        x = rng.standard_normal(n)
        b = rng.standard_normal(n)
        y = rng.standard_normal(n)
        s = float(np.quantile(x, 0.3))
        fit = fit_conditional_mean_regression(x, a, b, y, a_val=1, s=s)
        r1, r2 = masked_oracle(x, a, b, y, 1, s)
        assert (fit.intercept, fit.slope) == pytest.approx((r1, r2), abs=1e-12)

    def test_zero_response_on_risk_set(self):
        a = np.array([0, 1, 0, 1, 1, 0], dtype=float)
        x = np.array([1.0, 2.0, 3.0, 4.0, 5.0, 6.0])
        b = np.array([0.3, -1.0, 0.2, 0.7, 2.0, 0.1])
        fit = fit_conditional_mean_regression(x, a, b, np.zeros(6), a_val=1)
        assert fit.slope == 0.0
        assert fit.intercept == 0.0

    def test_degenerate_risk_set_falls_back(self):
        a = np.array([0, 1, 0, 1, 1, 0], dtype=float)
        x = np.array([1.0, 2.0, 3.0, 4.0, 5.0, 6.0])
        b = np.array([0.3, -1.0, 0.2, 0.7, 2.0, 0.1])
        y = np.array([0.1, 0.5, 0.0, 1.0, 2.0, 0.0])
        fit = fit_conditional_mean_regression(x, a, b, y, a_val=1, s=4.5)  # one at-risk
        base = fit_conditional_mean_regression(x, a, b, y, a_val=1)
        assert fit.fallback
        assert (fit.intercept, fit.slope) == (base.intercept, base.slope)

    def test_risk_curves_match_per_threshold_fits(self):
        ds = toy_censored_dataset(n=80, p=1, seed=9, censor_rate=0.25)
        cm = fit_censoring_km(ds)
        y = synthetic_responses(ds, cm).y
        a = ds.a.astype(float)
        curves = build_risk_curves(ds.x, a, ds.b[:, 0], y, a_val=1, cm=cm)
        for m, s in enumerate(cm.jump_times):
            fit = fit_conditional_mean_regression(ds.x, a, ds.b[:, 0], y, a_val=1, s=s)
            assert curves.jump_intercepts[m] == pytest.approx(fit.intercept, abs=1e-10)
            assert curves.jump_slopes[m] == pytest.approx(fit.slope, abs=1e-10)
            assert curves.fallback[m] == fit.fallback


class TestAssembleNuisance:
    def test_product_identity(self, toy_dataset):
        cm = fit_censoring_km(toy_dataset)
        ns = assemble_nuisance(toy_dataset, cm, SERIAL)
        np.testing.assert_array_equal(ns.nie, ns.outcome_slope * ns.mediator_shift)
        assert 0.0 < ns.prob_a1 < 1.0
        assert ns.prob_a0 == 1.0 - ns.prob_a1

    def test_matches_elementary_fits(self, toy_dataset):
        cm = fit_censoring_km(toy_dataset)
        ns = assemble_nuisance(toy_dataset, cm, SERIAL)
        a = toy_dataset.a.astype(float)
        y = ns.ctx.y
        for k in range(toy_dataset.p):
            m0, m1, shift = fit_conditional_mediator_means(a, toy_dataset.b[:, k])
            assert ns.med_mean_a0[k] == pytest.approx(m0, abs=1e-12)
            assert ns.med_mean_a1[k] == pytest.approx(m1, abs=1e-12)
            assert ns.mediator_shift[k] == pytest.approx(shift, abs=1e-12)
            assert ns.outcome_slope[k] == pytest.approx(
                fit_ksv_slope(a, toy_dataset.b[:, k], y), abs=1e-10
            )

    def test_sign_invariance(self, toy_dataset):
        cm = fit_censoring_km(toy_dataset)
        ns = assemble_nuisance(toy_dataset, cm, SERIAL)
        flipped_b = toy_dataset.b.copy()
        flipped_b[:, 1] *= -1.0
        ds2 = toy_dataset.take(np.arange(toy_dataset.n))
        ds2 = type(toy_dataset)(x=toy_dataset.x, delta=toy_dataset.delta, a=toy_dataset.a, b=flipped_b)
        ns2 = assemble_nuisance(ds2, cm, SERIAL)
        assert ns2.outcome_slope[1] == pytest.approx(-ns.outcome_slope[1], abs=1e-12)
        assert ns2.mediator_shift[1] == pytest.approx(-ns.mediator_shift[1], abs=1e-12)
        assert ns2.nie[1] == pytest.approx(ns.nie[1], abs=1e-12)

    def test_scale_invariance_of_nie(self, toy_dataset):
        cm = fit_censoring_km(toy_dataset)
        ns = assemble_nuisance(toy_dataset, cm, SERIAL)
        scaled_b = toy_dataset.b.copy()
        scaled_b[:, 2] *= 7.5
        ds2 = type(toy_dataset)(x=toy_dataset.x, delta=toy_dataset.delta, a=toy_dataset.a, b=scaled_b)
        ns2 = assemble_nuisance(ds2, cm, SERIAL)
        assert ns2.outcome_slope[2] == pytest.approx(ns.outcome_slope[2] / 7.5, rel=1e-10)
        assert ns2.mediator_shift[2] == pytest.approx(ns.mediator_shift[2] * 7.5, rel=1e-10)
        assert ns2.nie[2] == pytest.approx(ns.nie[2], abs=1e-10)

    def test_streaming_matches_recomputation(self):
        # incremental moments across growing prefixes reproduce per-prefix refits
        ds = toy_censored_dataset(n=200, p=50, seed=21, censor_rate=0.15)
        cm = fit_censoring_km(ds)
        ctx = make_context(ds, cm, SERIAL)
        stats = PrefixStats(ctx, SERIAL)
        burn = 60
        stats.extend_to(burn)
        for j in range(burn, ds.n):
            stats.extend_to(j)
            snap = stats.snapshot(cm)
            direct = assemble_nuisance(ds, cm, SERIAL, n_used=j, ctx=ctx)
            assert snap.prob_a1 == pytest.approx(direct.prob_a1, abs=1e-12)
            np.testing.assert_allclose(snap.outcome_slope, direct.outcome_slope, atol=1e-9)
            np.testing.assert_allclose(snap.mediator_shift, direct.mediator_shift, atol=1e-9)
            np.testing.assert_allclose(snap.nie, direct.nie, atol=1e-9)

    def test_streaming_matches_recomputation_adjusted(self):
        rng = np.random.default_rng(31)
        base = toy_censored_dataset(n=150, p=20, seed=22, censor_rate=0.15)
        ds = type(base)(x=base.x, delta=base.delta, a=base.a, b=base.b,
                        z=rng.standard_normal((base.n, 2)))
        cfg = AnalysisConfig(threads=1, adjust_for_confounders=True)
        cm = fit_censoring_km(ds)
        ctx = make_context(ds, cm, cfg)
        stats = PrefixStats(ctx, cfg)
        stats.extend_to(50)
        for j in (50, 90, 149):
            stats.extend_to(j)
            snap = stats.snapshot(cm)
            direct = assemble_nuisance(ds, cm, cfg, n_used=j, ctx=ctx)
            np.testing.assert_allclose(snap.outcome_slope, direct.outcome_slope, atol=1e-9)
            np.testing.assert_allclose(snap.mediator_shift, direct.mediator_shift, atol=1e-9)


class TestMonteCarloAnchors:
    def test_model1_exposure_shift_near_one_prestandardization(self):
        # the raw-scale mediator shift of the active mediator is 1 by design
        shifts = []
        for r in range(200):
            ds = generate(SimulationSpec(model="M1", n=800, p=12), 4000 + r)
            cm = fit_censoring_km(ds)
            ns = assemble_nuisance(ds, cm, SERIAL)
            shifts.append(ns.mediator_shift[0])
        assert abs(np.mean(shifts) - 1.0) < 0.1

    def test_model0_max_nie_small(self):
        hits = 0
        for r in range(200):
            ds = generate(SimulationSpec(model="M0", n=800, p=10), 6000 + r)
            cm = fit_censoring_km(ds)
            ns = assemble_nuisance(ds, cm, SERIAL)
            hits += np.max(np.abs(ns.nie)) < 0.15
        assert hits / 200 >= 0.95

    def test_model1_full_sample_nie_near_true_value(self):
        # the maximal indirect effect in this scenario is 0.2
        vals = []
        for r in range(200):
            ds = generate(SimulationSpec(model="M1", n=800, p=12), 8000 + r)
            cm = fit_censoring_km(ds)
            ns = assemble_nuisance(ds, cm, SERIAL)
            vals.append(ns.nie[0])
        assert abs(np.mean(vals) - 0.2) < 0.05
