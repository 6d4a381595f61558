import math

import numpy as np
from django.test import SimpleTestCase, tag
from hypothesis import given, settings, strategies as st
from rest_framework import serializers
from scipy import stats

from .domain import CompositeTriplet, PhiIndex, ScoreForm, ScoreSpec, TripletBatch
from .exceptions import DomainError
from .functionals import (
    GammaParams,
    GridSpec,
    composite_grid_argmin,
    empirical_es,
    empirical_quantile_set,
    es_via_minimization,
    gamma_triplet,
    gamma_triplets,
)
from .identification import (
    calibration_report,
    expanded_identifications,
    identification_V,
    identification_values,
    quantile_coverage,
    transformed_identification_V,
)
from .scores import (
    bregman_loss,
    composite_score,
    composite_score_arrays,
    composite_score_gradient,
    mean_bregman_loss,
    pinball_loss,
    s_pair,
    tweedie_phi,
)
from .serializers import CalibrationReportSerializer, ScoreSpecSerializer, StrictConfigSerializer

settings.register_profile("deepcomposite", deadline=None)
settings.load_profile("deepcomposite")

ONE_TO_TEN = np.arange(1.0, 11.0)

ADDITIVE = ScoreSpec(
    form=ScoreForm.ADDITIVE,
    tau=0.5,
    phi_minus=PhiIndex(2.0, 2.0),
    phi_plus=PhiIndex(0.0, 2.0),
    g_scale=1.0,
)
REVELATION_PLUS = ScoreSpec(
    form=ScoreForm.REVELATION_PLUS,
    tau=0.5,
    phi=PhiIndex(0.0, 2.0),
    phi_plus=PhiIndex(0.0, 2.0),
    g_scale=1.0,
)

positive = st.floats(min_value=0.05, max_value=50.0, allow_nan=False)
levels = st.floats(min_value=0.01, max_value=0.99)


def random_spec(rng, tau):
    """Draw a valid ScoreSpec of a random form."""
    form = list(ScoreForm)[int(rng.integers(3))]
    minus = PhiIndex(float(rng.choice([1.5, 2.0, 3.0])), float(rng.choice([0.5, 2.0, 5.0])))
    plus = PhiIndex(float(rng.choice([-1.0, 0.0, 0.5])), float(rng.choice([0.5, 2.0, 5.0])))
    mean = PhiIndex(float(rng.choice([-1.0, 0.0, 1.0, 2.0])), float(rng.choice([0.5, 2.0, 5.0])))
    g_scale = float(rng.choice([0.0, 1.0]))
    if form == ScoreForm.ADDITIVE:
        return ScoreSpec(form=form, tau=tau, phi_minus=minus, phi_plus=plus, g_scale=g_scale)
    if form == ScoreForm.REVELATION_PLUS:
        return ScoreSpec(form=form, tau=tau, phi=mean, phi_plus=plus, g_scale=g_scale)
    return ScoreSpec(form=form, tau=tau, phi=mean, phi_minus=minus, g_scale=g_scale)


def mixed_sample(rng):
    """Sample of 5 to 50 values from a randomly chosen distribution, rounded to 0.01."""
    n = int(rng.integers(5, 51))
    kind = rng.integers(4)
    if kind == 0:
        x = rng.gamma(2.0, 3.0, size=n)
    elif kind == 1:
        x = rng.lognormal(0.5, 0.8, size=n)
    elif kind == 2:
        x = rng.uniform(0.0, 20.0, size=n)
    else:
        x = rng.integers(1, 6, size=n).astype(float)
    return np.round(x, 2) + 0.01


class PinballLossTests(SimpleTestCase):
    def test_worked_values(self):
        self.assertAlmostEqual(pinball_loss(10.0, 4.0, 0.9), 5.4)
        self.assertAlmostEqual(pinball_loss(4.0, 10.0, 0.9), 0.6)
        self.assertEqual(pinball_loss(7.0, 7.0, 0.3), 0.0)

    def test_level_outside_unit_interval(self):
        for tau in (0.0, 1.0, -0.2, 1.5):
            with self.assertRaises(DomainError):
                pinball_loss(1.0, 2.0, tau)

    @given(st.floats(-100, 100), st.floats(-100, 100), levels)
    def test_nonnegative_and_zero_only_on_diagonal(self, y, a, tau):
        loss = pinball_loss(y, a, tau)
        self.assertGreaterEqual(loss, 0.0)
        if abs(y - a) > 1e-6:
            self.assertGreater(loss, 0.0)


class SPairTests(SimpleTestCase):
    def test_worked_values(self):
        s_minus, s_plus = s_pair(2.0, 3.0, 0.5)
        self.assertAlmostEqual(s_minus, -0.5)
        self.assertAlmostEqual(s_plus, 1.5)
        s_minus, s_plus = s_pair(10.0, 4.0, 0.9)
        self.assertAlmostEqual(s_minus, -3.6)
        self.assertAlmostEqual(s_plus, 6.4)

    @given(st.floats(-100, 100), st.floats(-100, 100), levels)
    def test_relations_to_pinball(self, y, a, tau):
        s_minus, s_plus = s_pair(y, a, tau)
        self.assertAlmostEqual(s_plus - s_minus, y, places=9)
        self.assertAlmostEqual(pinball_loss(y, a, tau), s_minus + tau * y, places=9)

    def test_vectorised(self):
        s_minus, s_plus = s_pair(ONE_TO_TEN, 5.5, 0.5)
        self.assertEqual(s_minus.shape, (10,))
        self.assertAlmostEqual(s_minus.mean(), -1.5)
        self.assertAlmostEqual(s_plus.mean(), 4.0)


class TweediePhiTests(SimpleTestCase):
    def test_worked_values(self):
        self.assertAlmostEqual(tweedie_phi(2, 3.0, 0), 9.0)
        self.assertEqual(tweedie_phi(0, 1.0, 0), 0.0)
        self.assertAlmostEqual(tweedie_phi(1, 1.0, 0), -2.0)

    def test_special_cases_are_limits(self):
        for y in (0.3, 1.0, 4.0):
            self.assertAlmostEqual(tweedie_phi(0.0, y, 1), tweedie_phi(1e-7, y, 1), places=4)
            self.assertAlmostEqual(tweedie_phi(1.0, y, 2), tweedie_phi(1.0 + 1e-7, y, 2), places=4)

    @given(st.floats(-5, 5), positive)
    def test_strictly_convex(self, b, y):
        self.assertGreater(tweedie_phi(b, y, 2), 0.0)

    def test_nonpositive_argument(self):
        with self.assertRaises(DomainError):
            tweedie_phi(2, 0.0, 0)
        with self.assertRaises(DomainError):
            tweedie_phi(2, 1.0, 3)


class BregmanLossTests(SimpleTestCase):
    def test_worked_values(self):
        self.assertAlmostEqual(bregman_loss(1.0, 2.0, 0), 2 * (math.log(2) - 0.5), places=6)
        self.assertEqual(bregman_loss(5.0, 5.0, 2), 0.0)
        self.assertAlmostEqual(bregman_loss(2.0, 1.0, 2), 1.0)

    def test_poisson_deviance(self):
        self.assertAlmostEqual(bregman_loss(3.0, 2.0, 1), 2 * (3 * math.log(1.5) - 1.0))

    @given(positive, positive, st.sampled_from([-1.0, 0.0, 0.5, 1.0, 1.5, 2.0, 3.0]))
    def test_nonnegative(self, y, a, b):
        self.assertGreaterEqual(bregman_loss(y, a, b), 0.0)

    def test_rejects_nonpositive(self):
        with self.assertRaises(DomainError):
            bregman_loss(-1.0, 2.0, 0)

    def test_mean_loss(self):
        y = [1.0, 2.0, 4.0]
        expected = np.mean([bregman_loss(v, 2.0, 0) for v in y])
        self.assertAlmostEqual(mean_bregman_loss(y, [2.0, 2.0, 2.0], 0), expected)
        self.assertAlmostEqual(mean_bregman_loss(y, y, 1.5), 0.0, places=12)


class ScoreSpecTests(SimpleTestCase):
    def test_missing_phi(self):
        with self.assertRaises(DomainError):
            ScoreSpec(form=ScoreForm.ADDITIVE, tau=0.9, phi_minus=PhiIndex(2.0))
        with self.assertRaises(DomainError):
            ScoreSpec(form=ScoreForm.REVELATION_PLUS, tau=0.9, phi_plus=PhiIndex(0.0))

    def test_sign_constraints(self):
        with self.assertRaises(DomainError):
            ScoreSpec(form=ScoreForm.ADDITIVE, tau=0.9, phi_minus=PhiIndex(0.5), phi_plus=PhiIndex(0.0))
        with self.assertRaises(DomainError):
            ScoreSpec(form=ScoreForm.ADDITIVE, tau=0.9, phi_minus=PhiIndex(2.0), phi_plus=PhiIndex(1.5))

    def test_unused_phi_rejected(self):
        with self.assertRaises(DomainError):
            ScoreSpec(
                form=ScoreForm.REVELATION_PLUS,
                tau=0.9,
                phi=PhiIndex(0.0),
                phi_plus=PhiIndex(0.0),
                phi_minus=PhiIndex(2.0),
            )

    def test_scale_must_be_positive(self):
        with self.assertRaises(DomainError):
            PhiIndex(0.0, 0.0)


class CompositeScoreTests(SimpleTestCase):
    def test_zero_on_the_diagonal(self):
        rng = np.random.default_rng(3)
        for _ in range(30):
            spec = random_spec(rng, float(rng.choice([0.1, 0.5, 0.9])))
            c = float(rng.uniform(0.1, 30))
            self.assertAlmostEqual(composite_score(c, CompositeTriplet(c, c, c), spec), 0.0, places=6)

    @settings(max_examples=200)
    @given(
        positive,
        st.lists(positive, min_size=3, max_size=3),
        st.sampled_from([0.1, 0.5, 0.9]),
        st.integers(0, 2**31),
    )
    def test_nonnegative(self, y, values, tau, seed):
        spec = random_spec(np.random.default_rng(seed), tau)
        t = CompositeTriplet(*sorted(values))
        self.assertGreaterEqual(composite_score(y, t, spec), -1e-8)

    def test_grid_minimiser_additive(self):
        argmin = composite_grid_argmin(ONE_TO_TEN, ADDITIVE, GridSpec(1.0, 10.0, 0.05))
        self.assertAlmostEqual(argmin.e_minus, 3.0, delta=0.05)
        self.assertAlmostEqual(argmin.e_plus, 8.0, delta=0.05)
        self.assertTrue(5.0 - 1e-9 <= argmin.v <= 6.0 + 1e-9)

    def test_grid_minimiser_revelation(self):
        argmin = composite_grid_argmin(ONE_TO_TEN, REVELATION_PLUS, GridSpec(1.0, 10.0, 0.05))
        self.assertAlmostEqual(argmin.e_minus, 3.0, delta=0.05)
        self.assertAlmostEqual(argmin.e_plus, 8.0, delta=0.05)
        self.assertTrue(5.0 - 1e-9 <= argmin.v <= 6.0 + 1e-9)

    def _check_random_specs(self, count, seed):
        rng = np.random.default_rng(seed)
        grid = GridSpec(0.05, 6.0, 0.05)
        for i in range(count):
            tau = [0.1, 0.5, 0.9][i % 3]
            spec = random_spec(rng, tau)
            # Sample values chosen so that the empirical ES lands on the grid.
            unit = 0.25 if tau == 0.5 else 0.45
            sample = unit * rng.integers(1, 13, size=10)
            with self.subTest(spec=spec.describe(), sample=sample.tolist()):
                argmin = composite_grid_argmin(sample, spec, grid)
                lower, upper = empirical_es(sample, tau)
                quantiles = empirical_quantile_set(sample, tau)
                self.assertAlmostEqual(argmin.e_minus, lower, delta=0.05)
                self.assertAlmostEqual(argmin.e_plus, upper, delta=0.05)
                self.assertTrue(quantiles.lower - 1e-6 <= argmin.v <= quantiles.upper + 1e-6)

    def test_grid_minimiser_random_specs(self):
        self._check_random_specs(6, seed=11)

    @tag("slow")
    def test_grid_minimiser_twenty_random_specs(self):
        self._check_random_specs(21, seed=12)

    def test_additive_lower_gradient_worked_value(self):
        spec = ScoreSpec(
            form=ScoreForm.ADDITIVE, tau=0.5, phi_minus=PhiIndex(2.0, 2.0), phi_plus=PhiIndex(0.0, 2.0)
        )
        d_minus, _, _ = composite_score_gradient(2.0, CompositeTriplet(3.0, 5.0, 8.0), spec)
        # phi_minus = y^2, phi'' = 2, S-(2; 5) = 0.5: 2 (3 + 0.5 / 0.5)
        self.assertAlmostEqual(d_minus, 8.0)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(5)
        h = 1e-6
        checked = 0
        while checked < 60:
            tau = float(rng.choice([0.1, 0.5, 0.9]))
            spec = random_spec(rng, tau)
            y = float(rng.uniform(0.5, 20))
            t = sorted(rng.uniform(0.5, 20, size=3))
            if abs(y - t[1]) <= 1e-3:
                continue
            analytic = composite_score_gradient(y, CompositeTriplet(*t), spec)
            for k in range(3):
                up, down = list(t), list(t)
                up[k] += h
                down[k] -= h
                numeric = (
                    composite_score_arrays(y, *up, spec) - composite_score_arrays(y, *down, spec)
                ) / (2 * h)
                self.assertLessEqual(abs(numeric - analytic[k]), 1e-4 * max(1.0, abs(analytic[k])))
            checked += 1

    def test_expected_score_gradient_vanishes_near_diagonal(self):
        rng = np.random.default_rng(8)
        for _ in range(20):
            spec = random_spec(rng, 0.5)
            y = float(rng.uniform(1, 10))
            eps = 1e-9
            d_minus, d_v, d_plus = composite_score_gradient(
                y, CompositeTriplet(y, y + eps, y + 2 * eps), spec
            )
            self.assertAlmostEqual(d_minus, 0.0, places=5)
            self.assertAlmostEqual(d_plus, 0.0, places=5)

    def test_kink_uses_lower_branch(self):
        _, d_v, _ = composite_score_gradient(5.0, CompositeTriplet(3.0, 5.0, 8.0), ADDITIVE)
        _, d_v_above, _ = composite_score_gradient(5.0, CompositeTriplet(3.0, 5.0 + 1e-9, 8.0), ADDITIVE)
        self.assertAlmostEqual(d_v, d_v_above, places=6)
        self.assertGreater(d_v, 0.0)

    def test_rejects_invalid_inputs(self):
        with self.assertRaises(DomainError):
            composite_score(0.0, CompositeTriplet(1.0, 2.0, 3.0), ADDITIVE)
        with self.assertRaises(DomainError):
            composite_score(1.0, (1.0, 2.0, 3.0), ADDITIVE)
        with self.assertRaises(DomainError):
            CompositeTriplet(3.0, 2.0, 4.0)


class QuantileAndShortfallTests(SimpleTestCase):
    def test_quantile_sets(self):
        q = empirical_quantile_set(ONE_TO_TEN, 0.5)
        self.assertEqual((q.lower, q.upper), (5.0, 6.0))
        q = empirical_quantile_set(ONE_TO_TEN, 0.9)
        self.assertEqual((q.lower, q.upper), (9.0, 10.0))
        q = empirical_quantile_set([4.2], 0.37)
        self.assertEqual((q.lower, q.upper), (4.2, 4.2))
        q = empirical_quantile_set(ONE_TO_TEN, 0.33)
        self.assertEqual((q.lower, q.upper), (4.0, 4.0))

    def test_levels_next_to_the_boundary(self):
        sample = np.arange(1.0, 1_000_001.0)
        q = empirical_quantile_set(sample, 1 - 1e-10)
        self.assertEqual((q.lower, q.upper), (1_000_000.0, 1_000_000.0))
        q = empirical_quantile_set(sample, 1e-10)
        self.assertEqual((q.lower, q.upper), (1.0, 1.0))
        q = empirical_quantile_set(ONE_TO_TEN, 1 - 1e-13)
        self.assertEqual((q.lower, q.upper), (10.0, 10.0))

    def test_empty_sample(self):
        with self.assertRaises(DomainError):
            empirical_quantile_set([], 0.5)
        with self.assertRaises(DomainError):
            empirical_es([], 0.5)

    def test_expected_shortfall_worked_values(self):
        lower, upper = empirical_es(ONE_TO_TEN, 0.5)
        self.assertAlmostEqual(lower, 3.0)
        self.assertAlmostEqual(upper, 8.0)
        lower, upper = empirical_es(ONE_TO_TEN, 0.9)
        self.assertAlmostEqual(lower, 5.0)
        self.assertAlmostEqual(upper, 10.0)
        lower, upper = empirical_es([2.5] * 7, 0.3)
        self.assertAlmostEqual(lower, 2.5)
        self.assertAlmostEqual(upper, 2.5)

    def test_fractional_order_statistic(self):
        # n tau = 2.5: the third order statistic carries half a weight below tau.
        lower, upper = empirical_es([1.0, 2.0, 3.0, 4.0, 5.0], 0.5)
        self.assertAlmostEqual(lower, (1.0 + 2.0 + 0.5 * 3.0) / 2.5)
        self.assertAlmostEqual(upper, (0.5 * 3.0 + 4.0 + 5.0) / 2.5)

    def test_minimisation_oracle_worked_values(self):
        lower, upper = es_via_minimization(ONE_TO_TEN, 0.5, GridSpec(1.0, 10.0, 0.01))
        self.assertAlmostEqual(lower, 3.0, delta=0.01)
        self.assertAlmostEqual(upper, 8.0, delta=0.01)
        lower, upper = es_via_minimization(ONE_TO_TEN, 0.9, GridSpec(1.0, 10.0, 0.01))
        self.assertAlmostEqual(lower, 5.0, delta=0.01)
        self.assertAlmostEqual(upper, 10.0, delta=0.01)
        lower, upper = es_via_minimization([3.0], 0.2, GridSpec(3.0, 3.0, 0.01))
        self.assertAlmostEqual(lower, 3.0)
        self.assertAlmostEqual(upper, 3.0)

    def test_minimisation_grid_must_cover_sample(self):
        with self.assertRaises(DomainError):
            es_via_minimization(ONE_TO_TEN, 0.5, GridSpec(2.0, 10.0, 0.01))

    def test_minimiser_identities_on_random_samples(self):
        rng = np.random.default_rng(2021)
        for i in range(200):
            sample = mixed_sample(rng)
            grid = GridSpec(round(sample.min(), 2), round(sample.max(), 2), 0.01)
            points = grid.points()
            for tau in (0.1, 0.5, 0.9):
                quantiles = empirical_quantile_set(sample, tau)
                s_minus, s_plus = s_pair(sample[None, :], points[:, None], tau)
                pinball = pinball_loss(sample[None, :], points[:, None], tau)
                for losses in (pinball, s_minus, s_plus):
                    argmin = points[np.argmin(losses.mean(axis=1))]
                    self.assertTrue(
                        quantiles.lower - 1e-6 <= argmin <= quantiles.upper + 1e-6,
                        f"sample {i}, tau {tau}: {argmin} outside {quantiles}",
                    )
                lower, upper = empirical_es(sample, tau)
                lower_grid, upper_grid = es_via_minimization(sample, tau, grid)
                self.assertAlmostEqual(lower, lower_grid, delta=0.01)
                self.assertAlmostEqual(upper, upper_grid, delta=0.01)
                self.assertAlmostEqual(tau * lower + (1 - tau) * upper, sample.mean(), places=9)
                self.assertLessEqual(lower, quantiles.lower + 1e-9)
                self.assertGreaterEqual(upper, quantiles.upper - 1e-9)


class GammaTripletTests(SimpleTestCase):
    def test_exponential_case(self):
        t = gamma_triplet(GammaParams(1.0, 1.0), 0.9)
        v = math.log(10.0)
        self.assertAlmostEqual(t.v, v, places=10)
        self.assertAlmostEqual(t.e_plus, v + 1.0, places=10)
        self.assertAlmostEqual(t.e_minus, (1.0 - 0.1 * (1.0 + v)) / 0.9, places=10)
        self.assertAlmostEqual(t.e_minus, 0.744163, delta=1e-5)
        self.assertAlmostEqual(0.9 * t.e_minus + 0.1 * t.e_plus, 1.0, places=10)

    def test_quantile_and_recombination(self):
        for mu, shape in ((5.0, 2.0), (0.3, 0.4), (1200.0, 0.55), (2.0, 15.0)):
            for tau in (0.1, 0.5, 0.9):
                t = gamma_triplet(GammaParams(mu, shape), tau)
                self.assertAlmostEqual(stats.gamma.cdf(t.v, shape, scale=mu / shape), tau, places=8)
                self.assertAlmostEqual(tau * t.e_minus + (1 - tau) * t.e_plus, mu, delta=1e-10 * max(1, mu))
                self.assertTrue(t.e_minus <= t.v <= t.e_plus)

    def _monte_carlo(self, draws):
        rng = np.random.default_rng(77)
        mu, shape, tau = 5.0, 2.0, 0.9
        t = gamma_triplet(GammaParams(mu, shape), tau)
        y = rng.gamma(shape, mu / shape, size=draws)
        low, high = y[y <= t.v], y[y > t.v]
        self.assertLess(abs(low.mean() - t.e_minus), 3 * low.std() / math.sqrt(low.size))
        self.assertLess(abs(high.mean() - t.e_plus), 3 * high.std() / math.sqrt(high.size))

    def test_monte_carlo_agreement(self):
        self._monte_carlo(10**6)

    @tag("slow")
    def test_monte_carlo_agreement_ten_million(self):
        self._monte_carlo(10**7)

    def test_vectorised(self):
        batch = gamma_triplets([1.0, 2.0, 4.0], 1.0, 0.9)
        self.assertEqual(len(batch), 3)
        np.testing.assert_allclose(batch.v, np.log(10.0) * np.array([1.0, 2.0, 4.0]))

    def test_invalid_parameters(self):
        with self.assertRaises(DomainError):
            GammaParams(-1.0, 2.0)
        with self.assertRaises(DomainError):
            GammaParams(1.0, 0.0)


class IdentificationTests(SimpleTestCase):
    def test_zero_at_empirical_triplet(self):
        values = identification_values(ONE_TO_TEN, 3.0, 5.5, 8.0, 0.5)
        np.testing.assert_allclose(values.mean(axis=0), [0.0, 0.0, 0.0], atol=1e-12)

    def test_indicator_component_range(self):
        for y in (0.5, 5.0, 5.5, 7.0):
            _, middle, _ = identification_V(y, CompositeTriplet(3.0, 5.5, 8.0), 0.3)
            self.assertIn(round(middle, 12), (0.7, -0.3))

    def test_transformed_identification(self):
        first, _, _ = transformed_identification_V(2.0, CompositeTriplet(3.0, 5.0, 8.0), 0.5)
        self.assertAlmostEqual(first, 3.5)

    def test_expanded_forms_match(self):
        rng = np.random.default_rng(4)
        for tau in (0.1, 0.5, 0.9):
            y = rng.gamma(2.0, 2.0, size=500)
            v = rng.uniform(1, 8, size=500)
            batch = TripletBatch(v * rng.uniform(0.2, 1, 500), v, v * rng.uniform(1, 3, 500))
            report = calibration_report(batch, y, tau)
            v_minus, v_plus = expanded_identifications(batch, y, tau)
            self.assertAlmostEqual(report.v_minus, v_minus, delta=1e-10)
            self.assertAlmostEqual(report.v_plus, v_plus, delta=1e-10)
            middle = identification_values(y, batch.e_minus, batch.v, batch.e_plus, tau)[:, 1].mean()
            self.assertAlmostEqual(middle, report.coverage - tau, places=12)

    def test_saturated_quantile(self):
        big = np.finfo(float).max
        report = calibration_report([CompositeTriplet(1.0, big, big)] * 3, [1.0, 2.0, 3.0], 0.9)
        self.assertEqual(report.coverage, 1.0)

    def test_truth_is_calibrated(self):
        rng = np.random.default_rng(10)
        n, shape, tau = 10**5, 2.0, 0.9
        mu = np.exp(0.5 + rng.uniform(size=n))
        y = rng.gamma(shape, mu / shape)
        truth = gamma_triplets(mu, shape, tau)
        report = calibration_report(truth, y, tau)
        self.assertAlmostEqual(report.coverage, tau, delta=0.01)
        self.assertLess(abs(report.v_minus), 3 * report.v_minus_se)
        self.assertLess(abs(report.v_plus), 3 * report.v_plus_se)

        scaled = TripletBatch(truth.e_minus, truth.v, 1.5 * truth.e_plus)
        shifted = calibration_report(scaled, y, tau)
        self.assertAlmostEqual(shifted.v_plus - report.v_plus, 0.5 * truth.e_plus.mean(), places=8)

    def test_standard_errors_shrink(self):
        rng = np.random.default_rng(12)
        shape, tau = 2.0, 0.9
        errors = []
        for n in (10**3, 10**4, 10**5):
            mu = np.exp(rng.uniform(size=n))
            y = rng.gamma(shape, mu / shape)
            errors.append(calibration_report(gamma_triplets(mu, shape, tau), y, tau).v_plus_se)
        for larger, smaller in zip(errors, errors[1:]):
            self.assertAlmostEqual(larger / smaller, math.sqrt(10), delta=1.0)

    def test_length_mismatch(self):
        with self.assertRaises(DomainError):
            calibration_report([CompositeTriplet(1.0, 2.0, 3.0)], [1.0, 2.0], 0.5)
        with self.assertRaises(DomainError):
            calibration_report([], [], 0.5)

    def test_quantile_coverage(self):
        quantiles = np.column_stack([np.full(10, 2.0), np.full(10, 5.0), np.full(10, 9.0)])
        np.testing.assert_allclose(quantile_coverage(quantiles, ONE_TO_TEN), [0.2, 0.5, 0.9])


class ScoringSerializerTests(SimpleTestCase):
    def test_builds_spec(self):
        serializer = ScoreSpecSerializer(
            data={"form": "revelation_plus", "tau": 0.9, "phi_b": 0.338, "phi_plus_b": 0.401, "phi_plus_c": 3.0}
        )
        self.assertTrue(serializer.is_valid(), serializer.errors)
        spec = serializer.validated_data["spec"]
        self.assertEqual(spec.form, ScoreForm.REVELATION_PLUS)
        self.assertEqual(spec.phi_plus, PhiIndex(0.401, 3.0))

    def test_default_scales(self):
        serializer = ScoreSpecSerializer(data={"form": "additive", "tau": 0.9, "phi_minus_b": 2.0, "phi_plus_b": 0.0})
        self.assertTrue(serializer.is_valid(), serializer.errors)
        spec = serializer.validated_data["spec"]
        self.assertEqual(spec.phi_minus, PhiIndex(2.0, 2.0))
        self.assertEqual(spec.phi_plus, PhiIndex(0.0))
        self.assertEqual(spec.g_scale, 1.0)
        self.assertEqual(spec.describe()["phi_plus_c"], 2.0)

    def test_reports_sign_violation(self):
        serializer = ScoreSpecSerializer(
            data={"form": "additive", "tau": 0.9, "phi_minus_b": 0.5, "phi_plus_b": 0.0}
        )
        self.assertFalse(serializer.is_valid())

    def test_strict_config_rejects_unknown_keys(self):
        class Config(StrictConfigSerializer):
            tau = serializers.FloatField()

        serializer = Config(data={"TAU": "0.9", "TUA": "0.9"})
        self.assertFalse(serializer.is_valid())
        self.assertIn("tua", serializer.errors)
        self.assertTrue(Config(data={"TAU": "0.9"}).is_valid())

    def test_calibration_representation(self):
        report = calibration_report([CompositeTriplet(1.0, 2.0, 3.0)] * 2, [1.0, 2.5], 0.5)
        data = CalibrationReportSerializer(report).data
        self.assertEqual(data["n"], 2)
        self.assertEqual(data["coverage"], 0.5)
