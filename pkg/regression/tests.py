import io
import json
import math
import tempfile
from dataclasses import replace
from pathlib import Path
from types import SimpleNamespace
from unittest import mock

import numpy as np
import pandas as pd
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase, tag
from hypothesis import given, settings, strategies as st
from scipy import stats

from claims.datasets import INTERCEPT, Dataset, FeatureEncoder, split_stratified
from claims.loaders import write_truth_csv
from claims.simulate import simulate_gamma
from scoring.domain import PhiIndex, ScoreForm, ScoreSpec
from scoring.exceptions import ConfigurationError, DomainError, InfeasibleSpecError, TrainingError
from scoring.functionals import gamma_triplets
from scoring.scores import pinball_loss

from .benchmark import deviance_dispersion, gamma_benchmark
from .network import (
    HeadType,
    NetworkConfig,
    NetworkParams,
    forward_representation,
    head_bias_from_sample,
    head_composite,
    head_multi_quantile_additive,
    head_multi_quantile_multiplicative,
    init_params,
    loss_and_gradient,
    predict_outputs,
)
from .objectives import BregmanObjective, CompositeObjective, PinballObjective, objective_from_dict
from .phi_select import (
    LogLogFit,
    assemble_spec,
    fit_mean_model,
    fit_quantile_model,
    residual_loglog_regression,
    select_composite_spec,
)
from .reports import Report, format_value, load_model, save_model
from .serializers import (
    EvaluateConfigSerializer,
    FitCompositeConfigSerializer,
    FitQuantilesConfigSerializer,
    PhiSelectionSerializer,
)
from .train import AdaptiveMomentOptimizer, FittedModel, StartResult, TrainConfig, auto_eta, fit, split_learn

settings.register_profile("deepcomposite", deadline=None)
settings.load_profile("deepcomposite")

ADDITIVE_90 = ScoreSpec(ScoreForm.ADDITIVE, 0.9, phi_minus=PhiIndex(2.0), phi_plus=PhiIndex(0.0))
REVELATION_PLUS_90 = ScoreSpec(ScoreForm.REVELATION_PLUS, 0.9, phi=PhiIndex(0.0), phi_plus=PhiIndex(0.0))


def random_params(cfg, rng, scale=0.5):
    vector = scale * rng.standard_normal(cfg.parameter_count)
    return NetworkParams.from_vector(vector, cfg)


def random_features(rng, n, input_dim):
    return np.hstack([np.ones((n, 1)), rng.uniform(0.0, 1.0, size=(n, input_dim))])


def intercept_dataset(values, repeats):
    y = np.repeat(np.asarray(values, dtype=float), repeats)
    return Dataset(y, np.ones((len(y), 1)), (INTERCEPT,))


def planted_fit(b, intercept=0.0):
    return LogLogFit(b=b, c=2.0 * math.exp(intercept), intercept=intercept, slope=2.0 - b)


class NetworkConfigTests(SimpleTestCase):
    def test_parameter_count(self):
        cfg = NetworkConfig(input_dim=5)
        self.assertEqual(cfg.parameter_count, 20 * 6 + 15 * 21 + 10 * 16 + 3 * 11)
        self.assertEqual(cfg.shape_header, [(20, 6), (15, 21), (10, 16), (3, 11)])

    def test_head_level_rules(self):
        with self.assertRaises(ConfigurationError):
            NetworkConfig(input_dim=2, levels=(0.5, 0.9))
        with self.assertRaises(ConfigurationError):
            NetworkConfig(input_dim=2, head=HeadType.MEAN, levels=(0.5,))
        with self.assertRaises(ConfigurationError):
            NetworkConfig(input_dim=2, head=HeadType.MULTI_QUANTILE_ADDITIVE, levels=())
        with self.assertRaises(DomainError):
            NetworkConfig(input_dim=2, head=HeadType.MULTI_QUANTILE_ADDITIVE, levels=(0.5, 0.5))
        with self.assertRaises(DomainError):
            NetworkConfig(input_dim=2, hidden_dims=())

    def test_dict_round_trip(self):
        cfg = NetworkConfig(input_dim=3, hidden_dims=(4, 2), head="multi_quantile_multiplicative", levels=(0.1, 0.5))
        self.assertEqual(NetworkConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))), cfg)

    def test_vector_round_trip(self):
        cfg = NetworkConfig(input_dim=3, hidden_dims=(4, 2))
        params = init_params(cfg, np.random.default_rng(1))
        again = NetworkParams.from_vector(params.to_vector(), cfg)
        np.testing.assert_array_equal(again.to_vector(), params.to_vector())
        self.assertEqual(again.shapes, cfg.shape_header)
        with self.assertRaises(DomainError):
            NetworkParams.from_vector(np.zeros(cfg.parameter_count + 1), cfg)

    def test_initialisation_is_seeded(self):
        cfg = NetworkConfig(input_dim=3, hidden_dims=(4, 2))
        np.testing.assert_array_equal(
            init_params(cfg, np.random.default_rng(7)).to_vector(), init_params(cfg, np.random.default_rng(7)).to_vector()
        )
        self.assertFalse(
            np.array_equal(init_params(cfg, np.random.default_rng(8)).to_vector(), init_params(cfg, np.random.default_rng(7)).to_vector())
        )
        first = init_params(cfg)
        self.assertTrue(all(np.all(w[:, 0] == 0) for w in first.layers))
        self.assertTrue(np.all(first.heads[:, 0] == 0))

    def test_intercept_only_zeros_every_weight(self):
        cfg = NetworkConfig(input_dim=3, hidden_dims=(4,), intercept_only=True)
        params = init_params(cfg, head_bias=[0.0, 1.0, 2.0])
        self.assertEqual(np.count_nonzero(params.to_vector()), 2)
        np.testing.assert_array_equal(forward_representation([1.0, 0.3, 0.2, 0.1], params, cfg), [1, 0, 0, 0, 0])


class HeadTests(SimpleTestCase):
    def test_composite_head(self):
        z = [1.0, 0.0]
        t = head_composite(z, [math.log(2.0), 5.0], [math.log(3.0), 1.0], [0.0, -4.0])
        self.assertAlmostEqual(t.e_minus, 2.0, places=12)
        self.assertAlmostEqual(t.v, 5.0, places=12)
        self.assertAlmostEqual(t.e_plus, 6.0, places=12)

    def test_additive_quantile_head(self):
        q = head_multi_quantile_additive([1.0, 0.5], [[0.0, 0.0], [math.log(2.0), 0.0], [math.log(3.0), 0.0]], (0.1, 0.5, 0.9))
        np.testing.assert_allclose(q, [1.0, 3.0, 6.0], rtol=1e-12)

    def test_multiplicative_quantile_head(self):
        q = head_multi_quantile_multiplicative([1.0], [[0.0], [math.log(4.0)]], (0.5, 0.9))
        np.testing.assert_allclose(q, [2.0, 4.0], rtol=1e-12)

    def test_head_count_must_match_levels(self):
        with self.assertRaises(DomainError):
            head_multi_quantile_additive([1.0], [[0.0]], (0.1, 0.5))

    def test_head_bias_reproduces_sample_functionals(self):
        y = np.arange(1.0, 11.0)
        cfg = NetworkConfig(input_dim=0, hidden_dims=(2,), intercept_only=True, levels=(0.5,))
        params = init_params(cfg, head_bias=head_bias_from_sample(cfg, y))
        np.testing.assert_allclose(predict_outputs(np.ones((1, 1)), params, cfg)[0], [3.0, 5.5, 8.0], rtol=1e-12)

        mean_cfg = replace(cfg, head=HeadType.MEAN, levels=())
        params = init_params(mean_cfg, head_bias=head_bias_from_sample(mean_cfg, y))
        self.assertAlmostEqual(predict_outputs(np.ones((1, 1)), params, mean_cfg)[0, 0], 5.5, places=12)


class MonotonicityTests(SimpleTestCase):
    def _check(self, head, levels):
        rng = np.random.default_rng(2024)
        cfg = NetworkConfig(input_dim=3, hidden_dims=(5, 4), head=head, levels=levels)
        X = random_features(rng, 4, 3)
        violations = 0
        for _ in range(10_000):
            out = predict_outputs(X, random_params(cfg, rng, scale=1.0), cfg)
            violations += int(not (np.all(out > 0) and np.all(np.diff(out, axis=1) > 0)))
        self.assertEqual(violations, 0)

    def test_composite_outputs_are_ordered(self):
        self._check(HeadType.COMPOSITE_ADDITIVE, (0.9,))

    def test_additive_quantiles_are_ordered(self):
        self._check(HeadType.MULTI_QUANTILE_ADDITIVE, (0.1, 0.5, 0.9))

    def test_multiplicative_quantiles_are_ordered(self):
        self._check(HeadType.MULTI_QUANTILE_MULTIPLICATIVE, (0.1, 0.5, 0.9))


class GradientTests(SimpleTestCase):
    """Backpropagated gradients against central finite differences."""

    def _check(self, head, levels, objective, cases=50, seed=0):
        rng = np.random.default_rng(seed)
        cfg = NetworkConfig(input_dim=2, hidden_dims=(4, 3), head=head, levels=levels)
        h = 1e-6
        for _ in range(cases):
            params = random_params(cfg, rng)
            X = random_features(rng, 12, 2)
            outputs = predict_outputs(X, params, cfg)
            y = outputs.mean(axis=1) * rng.uniform(0.3, 2.5, size=12)
            kink_column = outputs[:, 1:2] if head == HeadType.COMPOSITE_ADDITIVE else outputs
            keep = np.all(np.abs(y[:, None] - kink_column) > 1e-3, axis=1)
            X, y = X[keep], y[keep]
            if not len(y):
                continue

            _, grads = loss_and_gradient(X, y, params, cfg, objective)
            theta = params.to_vector()
            numeric = np.empty_like(theta)
            for i in range(theta.size):
                up, down = theta.copy(), theta.copy()
                up[i] += h
                down[i] -= h
                numeric[i] = (
                    objective.loss(y, predict_outputs(X, NetworkParams.from_vector(up, cfg), cfg))
                    - objective.loss(y, predict_outputs(X, NetworkParams.from_vector(down, cfg), cfg))
                ) / (2 * h)
            np.testing.assert_allclose(grads.to_vector(), numeric, rtol=1e-4, atol=1e-6)

    def test_additive_quantile_head(self):
        levels = (0.1, 0.5, 0.9)
        self._check(HeadType.MULTI_QUANTILE_ADDITIVE, levels, PinballObjective(levels, [1.0, 2.0, 0.5]))

    def test_multiplicative_quantile_head(self):
        levels = (0.1, 0.5, 0.9)
        self._check(HeadType.MULTI_QUANTILE_MULTIPLICATIVE, levels, PinballObjective(levels, [1.0, 2.0, 0.5]))

    def test_composite_head_additive_score(self):
        self._check(HeadType.COMPOSITE_ADDITIVE, (0.9,), CompositeObjective(ADDITIVE_90))

    def test_composite_head_revelation_score(self):
        self._check(HeadType.COMPOSITE_ADDITIVE, (0.9,), CompositeObjective(REVELATION_PLUS_90), seed=1)

    def test_mean_head(self):
        self._check(HeadType.MEAN, (), BregmanObjective(0.0))
        self._check(HeadType.MEAN, (), BregmanObjective(1.5), cases=10, seed=2)

    def test_intercept_only_gradient_touches_head_biases_only(self):
        cfg = NetworkConfig(input_dim=2, hidden_dims=(3,), intercept_only=True)
        rng = np.random.default_rng(3)
        X, y = random_features(rng, 20, 2), rng.uniform(1.0, 10.0, size=20)
        _, grads = loss_and_gradient(X, y, init_params(cfg), cfg, CompositeObjective(ADDITIVE_90))
        self.assertTrue(all(np.all(w == 0) for w in grads.layers))
        self.assertTrue(np.all(grads.heads[:, 1:] == 0))
        self.assertTrue(np.any(grads.heads[:, 0] != 0))

    def test_head_bias_gradient_vanishes_at_the_empirical_functionals(self):
        data = intercept_dataset(range(1, 11), 3)
        levels = (0.1, 0.5, 0.9)
        cases = [
            (HeadType.COMPOSITE_ADDITIVE, (0.9,), CompositeObjective(ADDITIVE_90)),
            (HeadType.COMPOSITE_ADDITIVE, (0.9,), CompositeObjective(REVELATION_PLUS_90)),
            (HeadType.MULTI_QUANTILE_ADDITIVE, levels, PinballObjective(levels, [1.0, 2.0, 0.5])),
            (HeadType.MULTI_QUANTILE_MULTIPLICATIVE, levels, PinballObjective(levels)),
            (HeadType.MEAN, (), BregmanObjective(0.0)),
        ]
        for head, head_levels, objective in cases:
            with self.subTest(head=head, objective=objective.describe()):
                cfg = NetworkConfig(input_dim=0, hidden_dims=(3,), head=head, levels=head_levels, intercept_only=True)
                params = init_params(cfg, head_bias=head_bias_from_sample(cfg, data.responses))
                _, grads = loss_and_gradient(data.features, data.responses, params, cfg, objective)
                np.testing.assert_allclose(grads.heads[:, 0], 0.0, atol=1e-6)


class ObjectiveTests(SimpleTestCase):
    def test_objective_must_fit_the_head(self):
        composite = NetworkConfig(input_dim=1, levels=(0.9,))
        quantile = NetworkConfig(input_dim=1, head=HeadType.MULTI_QUANTILE_ADDITIVE, levels=(0.5, 0.9))
        with self.assertRaises(ConfigurationError):
            PinballObjective((0.5, 0.9)).check(composite)
        with self.assertRaises(ConfigurationError):
            PinballObjective((0.1, 0.9)).check(quantile)
        with self.assertRaises(ConfigurationError):
            CompositeObjective(replace(ADDITIVE_90, tau=0.8)).check(composite)
        with self.assertRaises(ConfigurationError):
            BregmanObjective().check(composite)

    def test_weighted_pinball(self):
        objective = PinballObjective((0.5, 0.9), [2.0, 1.0])
        outputs = np.array([[4.0, 8.0]])
        # 2 * 0.5 * (6 - 4) + 1 * 0.1 * (8 - 6)
        self.assertAlmostEqual(objective.loss([6.0], outputs), 2.2, places=12)

    def test_describe_round_trip(self):
        for objective in (PinballObjective((0.1, 0.9), [1.0, 3.0]), BregmanObjective(0.5), CompositeObjective(REVELATION_PLUS_90)):
            again = objective_from_dict(json.loads(json.dumps(objective.describe())))
            self.assertEqual(again.describe(), objective.describe())
        self.assertEqual(objective_from_dict(CompositeObjective(ADDITIVE_90).describe()).spec, ADDITIVE_90)


class OptimizerTests(SimpleTestCase):
    def test_first_step(self):
        for nesterov, size in ((False, 0.1), (True, 0.1 * (1 + 0.09 / 0.19))):
            optimizer = AdaptiveMomentOptimizer(2, learning_rate=0.1, nesterov=nesterov, epsilon=0.0)
            theta = optimizer.step(np.zeros(2), np.array([3.0, -0.5]))
            np.testing.assert_allclose(theta, [-size, size], rtol=1e-12)

    def test_minimises_a_quadratic(self):
        optimizer = AdaptiveMomentOptimizer(2, learning_rate=0.05)
        theta = np.array([3.0, -2.0])
        for _ in range(2000):
            theta = optimizer.step(theta, 2 * (theta - [1.0, 0.5]))
        np.testing.assert_allclose(theta, [1.0, 0.5], atol=1e-2)


class TrainTests(SimpleTestCase):
    def test_train_config_validation(self):
        with self.assertRaises(DomainError):
            TrainConfig(patience=0)
        with self.assertRaises(DomainError):
            TrainConfig(val_fraction=1.0)
        with self.assertRaises(DomainError):
            TrainConfig(moment_decays=(0.9, 1.0))
        with self.assertRaises(DomainError):
            TrainConfig(eta_weights=(1.0, -1.0))

    def test_split_learn(self):
        train, val = split_learn(intercept_dataset(range(1, 11), 10), 0.2, seed=0)
        self.assertEqual((train.n, val.n), (80, 20))
        self.assertEqual(sorted(np.unique(val.responses, return_counts=True)[1]), [2] * 10)
        self.assertEqual(len(set(train.row_ids) | set(val.row_ids)), 100)
        with self.assertRaises(DomainError):
            split_learn(intercept_dataset(range(1, 10), 1), 0.2, seed=0)

    def test_auto_eta(self):
        np.testing.assert_allclose(auto_eta(np.arange(1.0, 11.0), (0.5,)), [0.8], rtol=1e-12)
        np.testing.assert_array_equal(auto_eta(np.full(5, 3.0), (0.1, 0.9)), [1.0, 1.0])

    def test_auto_eta_matches_the_minimal_pinball_losses(self):
        levels = (0.1, 0.9)
        sample = np.arange(1.0, 11.0)
        grid = np.linspace(1.0, 10.0, 901)
        minimal = [min(np.mean(pinball_loss(sample, a, tau)) for a in grid) for tau in levels]
        np.testing.assert_allclose(auto_eta(sample, levels), 1.0 / np.array(minimal), rtol=1e-10)

        # a piecewise linear loss is minimal at one of the sample points
        sample = np.random.default_rng(11).gamma(2.0, 3.0, size=400)
        minimal = [min(np.mean(pinball_loss(sample, a, tau)) for a in sample) for tau in levels]
        np.testing.assert_allclose(auto_eta(sample, levels), 1.0 / np.array(minimal), rtol=1e-10)

    def test_auto_eta_is_inverse_homogeneous(self):
        sample = np.random.default_rng(12).lognormal(1.0, 0.8, size=500)
        levels = (0.1, 0.5, 0.9)
        np.testing.assert_allclose(auto_eta(10.0 * sample, levels), auto_eta(sample, levels) / 10.0, rtol=1e-10)

    def _intercept_fit(self, head, levels, objective, **train):
        data = intercept_dataset(range(1, 11), 10)
        cfg = NetworkConfig(input_dim=0, hidden_dims=(3,), head=head, levels=levels, intercept_only=True)
        options = dict(batch_size=512, n_starts=1, init_from_data=False, **train)
        return fit(data, cfg, TrainConfig(**options), objective, n_jobs=1)

    def test_intercept_only_quantile_reaches_the_quantile_set(self):
        report = self._intercept_fit(
            HeadType.MULTI_QUANTILE_ADDITIVE, (0.5,), PinballObjective((0.5,)), learning_rate=0.05, max_epochs=400, patience=400
        )
        q = report.model.predict(np.ones((1, 1)))[0, 0]
        self.assertGreaterEqual(q, 5.0)
        self.assertLessEqual(q, 6.0)

    def test_intercept_only_composite_reaches_the_empirical_triplet(self):
        spec = ScoreSpec(ScoreForm.ADDITIVE, 0.5, phi_minus=PhiIndex(2.0), phi_plus=PhiIndex(0.0))
        report = self._intercept_fit(
            HeadType.COMPOSITE_ADDITIVE, (0.5,), CompositeObjective(spec), learning_rate=0.02, max_epochs=1500, patience=1500
        )
        t = report.model.predict_triplets(np.ones((1, 1)))[0]
        self.assertAlmostEqual(t.e_minus, 3.0, delta=0.1)
        self.assertGreaterEqual(t.v, 4.9)
        self.assertLessEqual(t.v, 6.1)
        self.assertAlmostEqual(t.e_plus, 8.0, delta=0.2)

    def test_early_stopping_keeps_the_best_validation_epoch(self):
        data = simulate_gamma(600, 5, [1.0, 0.5, -0.5], 2.0, 0.9)
        cfg = NetworkConfig(input_dim=2, hidden_dims=(6, 4))
        train_cfg = TrainConfig(batch_size=64, max_epochs=25, patience=3, learning_rate=0.01, n_starts=2, seed=4)
        objective = CompositeObjective(ADDITIVE_90)
        report = fit(data, cfg, train_cfg, objective, n_jobs=1)
        _, val = split_learn(data, train_cfg.val_fraction, train_cfg.seed)

        self.assertEqual(len(report.starts), 2)
        for start, params in zip(report.starts, report.model.params):
            val_losses = [entry[2] for entry in start.trace]
            self.assertEqual(start.trace[0][0], 0)
            self.assertEqual(start.best_val_loss, min(val_losses))
            self.assertEqual(start.trace[start.best_epoch][2], start.best_val_loss)
            self.assertAlmostEqual(objective.loss(val.responses, predict_outputs(val.features, params, cfg)), start.best_val_loss, places=10)

        frame = report.traces_frame()
        self.assertEqual(list(frame.columns), ["start", "epoch", "train_loss", "val_loss"])
        self.assertEqual(len(frame), sum(len(s.trace) for s in report.starts))

    def test_smoothed_training_loss_does_not_increase(self):
        data = simulate_gamma(1500, 8, [0.7, 0.8, -0.4], 2.0, 0.9)
        cfg = NetworkConfig(input_dim=2, hidden_dims=(8,), head=HeadType.MEAN, levels=())
        train_cfg = TrainConfig(
            batch_size=10_000, max_epochs=80, patience=80, learning_rate=1e-3, n_starts=2, init_from_data=False
        )
        report = fit(data, cfg, train_cfg, BregmanObjective(0.0), n_jobs=1)
        frame = report.traces_frame()
        for start, trace in frame.groupby("start"):
            moving = trace["train_loss"].rolling(10).mean().dropna().to_numpy()
            self.assertGreater(len(moving), 50, start)
            self.assertTrue(np.all(np.diff(moving) <= 1e-12 * moving[:-1]), start)

    def test_fit_is_reproducible(self):
        data = simulate_gamma(300, 6, [1.0, 0.5], 2.0, 0.9)
        cfg = NetworkConfig(input_dim=1, hidden_dims=(4,), head=HeadType.MULTI_QUANTILE_ADDITIVE, levels=(0.5, 0.9))
        train_cfg = TrainConfig(batch_size=32, max_epochs=5, n_starts=2)
        first = fit(data, cfg, train_cfg, PinballObjective((0.5, 0.9)), n_jobs=1)
        second = fit(data, cfg, train_cfg, PinballObjective((0.5, 0.9)), n_jobs=1)
        for a, b in zip(first.model.params, second.model.params):
            np.testing.assert_array_equal(a.to_vector(), b.to_vector())
        np.testing.assert_allclose(first.objective.weights, auto_eta(split_learn(data, 0.2, 0)[0], (0.5, 0.9)))

    def test_network_seed_draws_the_initial_weights(self):
        data = simulate_gamma(300, 6, [1.0, 0.5], 2.0, 0.9)
        cfg = NetworkConfig(input_dim=1, hidden_dims=(4,), seed=11)
        train_cfg = TrainConfig(batch_size=32, max_epochs=2, n_starts=2, init_from_data=False, seed=3)
        objective = CompositeObjective(ADDITIVE_90)
        report = fit(data, cfg, train_cfg, objective, n_jobs=1)
        train, _ = split_learn(data, train_cfg.val_fraction, train_cfg.seed)
        for start in report.starts:
            initial = init_params(cfg, np.random.default_rng(cfg.seed + start.index))
            expected = objective.loss(train.responses, predict_outputs(train.features, initial, cfg))
            self.assertAlmostEqual(start.trace[0][1], expected, places=12)

        other = fit(data, replace(cfg, seed=12), train_cfg, objective, n_jobs=1)
        self.assertNotEqual(other.starts[0].trace[0][1], report.starts[0].trace[0][1])

    def test_test_statistics(self):
        data = simulate_gamma(500, 7, [1.0, 0.5], 2.0, 0.9)
        learn, test = split_stratified(data, 0.2, seed=0)
        cfg = NetworkConfig(input_dim=1, hidden_dims=(4,))
        report = fit(learn, cfg, TrainConfig(batch_size=64, max_epochs=3, n_starts=1), CompositeObjective(ADDITIVE_90), test=test, n_jobs=1)
        self.assertEqual(report.calibration.n, test.n)
        self.assertEqual(report.test_predictions.shape, (test.n, 3))
        np.testing.assert_allclose(report.model.predict_mean(test.features), 0.9 * report.test_predictions[:, 0] + 0.1 * report.test_predictions[:, 2])

    def test_feature_count_must_match(self):
        data = simulate_gamma(100, 8, [1.0, 0.5], 2.0, 0.9)
        with self.assertRaises(DomainError):
            fit(data, NetworkConfig(input_dim=3), TrainConfig(), CompositeObjective(ADDITIVE_90), n_jobs=1)

    def test_all_starts_failing(self):
        failed = StartResult(index=0, params=None, failure="non-finite loss at epoch 1")
        data = intercept_dataset(range(1, 11), 2)
        cfg = NetworkConfig(input_dim=0, hidden_dims=(2,))
        with mock.patch("regression.train._fit_start", return_value=failed):
            with self.assertRaises(TrainingError):
                fit(data, cfg, TrainConfig(n_starts=2), CompositeObjective(ADDITIVE_90), n_jobs=1)

    def test_fitted_model_averages_starts(self):
        cfg = NetworkConfig(input_dim=0, hidden_dims=(2,), head=HeadType.MEAN, levels=(), intercept_only=True)
        model = FittedModel(cfg, BregmanObjective(), [init_params(cfg, head_bias=[math.log(2.0)]), init_params(cfg, head_bias=[math.log(4.0)])])
        self.assertAlmostEqual(model.predict_mean(np.ones((1, 1)))[0], 3.0, places=12)
        with self.assertRaises(DomainError):
            model.predict_triplets(np.ones((1, 1)))
        with self.assertRaises(TrainingError):
            FittedModel(cfg, BregmanObjective(), [])


class PhiSelectTests(SimpleTestCase):
    def test_recovers_planted_loglog_line(self):
        mu = np.exp(np.linspace(0.0, 3.0, 50))
        y = mu + np.sqrt(np.exp(4.592 + 1.662 * np.log(mu)))
        fit_ = residual_loglog_regression(mu, y)
        self.assertAlmostEqual(fit_.b, 0.338, delta=1e-6)
        self.assertAlmostEqual(fit_.slope, 1.662, delta=1e-8)
        self.assertAlmostEqual(fit_.intercept, 4.592, delta=1e-8)
        self.assertAlmostEqual(fit_.c / (2.0 * math.exp(4.592)), 1.0, delta=1e-8)
        self.assertEqual(fit_.b, 2.0 - fit_.slope)
        self.assertEqual(fit_.c, 2.0 * math.exp(fit_.intercept))

    @given(st.floats(min_value=-5.0, max_value=5.0), st.floats(min_value=-3.0, max_value=3.0))
    def test_planted_lines_are_recovered(self, intercept, slope):
        mu = np.exp(np.linspace(0.0, 2.0, 20))
        y = mu + np.exp(0.5 * (intercept + slope * np.log(mu)))
        fit_ = residual_loglog_regression(mu, y)
        self.assertAlmostEqual(fit_.slope, slope, delta=1e-6)
        self.assertAlmostEqual(fit_.intercept, intercept, delta=1e-6)

    def test_gamma_residuals_give_b_near_zero(self):
        rng = np.random.default_rng(31)
        mu = np.exp(rng.uniform(0.0, 2.0, size=50_000))
        y = rng.gamma(2.0, mu / 2.0)
        self.assertAlmostEqual(residual_loglog_regression(mu, y).b, 0.0, delta=0.1)

    def test_gaussian_residuals_give_b_near_two(self):
        rng = np.random.default_rng(32)
        mu = np.exp(rng.uniform(3.0, 6.0, size=50_000))
        y = mu + rng.standard_normal(mu.size)
        self.assertAlmostEqual(residual_loglog_regression(mu, y).b, 2.0, delta=0.1)

    def test_regression_errors(self):
        with self.assertRaises(DomainError):
            residual_loglog_regression([1.0, 2.0], [1.0, 2.0])
        with self.assertRaises(DomainError):
            residual_loglog_regression([2.0, 2.0, 2.0], [1.0, 2.0, 3.0])
        with self.assertRaises(DomainError):
            residual_loglog_regression([1.0, -2.0, 3.0], [1.0, 2.0, 3.0])
        with self.assertRaises(DomainError):
            residual_loglog_regression([1.0, 2.0, 3.0], [1.0, 2.0])

    def test_exact_fit_residuals_are_floored(self):
        fit_ = residual_loglog_regression([1.0, 2.0, 3.0, 4.0], [1.0, 2.0, 3.0, 4.0])
        self.assertAlmostEqual(fit_.slope, 0.0, places=12)
        self.assertAlmostEqual(fit_.intercept, math.log(1e-12), places=9)

    def test_planted_values_select_revelation_plus(self):
        selection = assemble_spec(planted_fit(0.338, 4.592), planted_fit(0.401, 5.0), planted_fit(0.313, 4.0), 0.9)
        self.assertEqual(selection.chosen_form, ScoreForm.REVELATION_PLUS)
        self.assertEqual(selection.spec.phi.b, 0.338)
        self.assertEqual(selection.spec.phi_plus.b, 0.401)
        self.assertIsNone(selection.spec.phi_minus)

    def test_form_selection(self):
        self.assertEqual(assemble_spec(planted_fit(1.0), planted_fit(0.0), planted_fit(2.0), 0.9).chosen_form, ScoreForm.ADDITIVE)
        self.assertEqual(assemble_spec(planted_fit(1.0), planted_fit(1.5), planted_fit(1.5), 0.9).chosen_form, ScoreForm.REVELATION_MINUS)
        with self.assertRaises(InfeasibleSpecError) as ctx:
            assemble_spec(planted_fit(1.0), planted_fit(1.5), planted_fit(0.5), 0.9)
        self.assertIn("1.5", str(ctx.exception))
        self.assertIn("0.5", str(ctx.exception))

    def test_table_and_representation(self):
        selection = assemble_spec(planted_fit(0.338, 4.592), planted_fit(0.401), planted_fit(0.313), 0.9)
        table = selection.as_table()
        self.assertIn("intercept", table.splitlines()[1])
        self.assertTrue(table.endswith("form: revelation_plus"))
        data = PhiSelectionSerializer(selection).data
        self.assertEqual(data["chosen_form"], "revelation_plus")
        self.assertAlmostEqual(data["all_claims"]["slope"], 1.662, places=12)

    def test_selection_with_true_gamma_models(self):
        data = simulate_gamma(20_000, 9, [1.0, 1.5], 2.0, 0.9)
        mu = data.truth.mean_recombination(0.9)
        models = SimpleNamespace(
            predict_mean=lambda X: mu,
            predict_quantile=lambda X, tau: data.truth.v,
        )
        spec, selection = select_composite_spec(data, 0.9, models, models, refit=False)
        self.assertEqual(selection.chosen_form, ScoreForm.REVELATION_PLUS)
        self.assertAlmostEqual(selection.all_claims.b, 0.0, delta=0.15)
        self.assertLess(spec.phi_plus.b, 1.0)
        with self.assertRaises(DomainError):
            select_composite_spec(data, 0.9, models, models, refit=True)


class BenchmarkTests(SimpleTestCase):
    def test_deviance_dispersion(self):
        expected = 2.0 * (math.log(0.5) + 1.0) / 2.0
        self.assertAlmostEqual(deviance_dispersion([1.0, 2.0], [1.0, 1.0], 0), expected, places=12)
        self.assertAlmostEqual(deviance_dispersion([1.0, 2.0, 3.0], [1.0, 1.0, 3.0], 1), expected, places=12)
        with self.assertRaises(DomainError):
            deviance_dispersion([1.0, 2.0], [1.0, 1.0], 2)

    def test_gamma_benchmark(self):
        data = simulate_gamma(4_000, 10, [1.0, 0.5], 2.0, 0.9)
        learn, test = split_stratified(data, 0.25, seed=0)
        model = SimpleNamespace(
            config=SimpleNamespace(parameter_count=2),
            predict_mean=lambda X: np.exp(X @ np.array([1.0, 0.5])),
        )
        result = gamma_benchmark(model, learn, test, 0.9)
        self.assertAlmostEqual(result["gamma_shape"], 1.0 / result["dispersion"], places=12)
        expected = gamma_triplets(model.predict_mean(test.features), result["gamma_shape"], 0.9)
        np.testing.assert_allclose(result["triplets"].as_matrix(), expected.as_matrix())
        self.assertAlmostEqual(result["calibration"].coverage, 0.9, delta=0.03)


class ReportTests(SimpleTestCase):
    def test_format_value(self):
        self.assertEqual(format_value(1 / 3, 4), "0.3333")
        self.assertEqual(format_value(np.float64(2.5), 4), "2.5")
        self.assertEqual(format_value(True), "true")
        self.assertEqual(format_value(None), "")
        self.assertEqual(format_value([0.1, 0.9], 3), "0.1,0.9")

    def test_render(self):
        report = Report("demo", precision=4)
        report.section("run", {"n": 3, "fit": {"loss": 1 / 3, "starts": [{"epoch": 2}]}})
        report.table("coverage", pd.DataFrame([["additive", 0.12345678]], columns=["head", "tau_0.1"]))
        self.assertEqual(
            report.render(),
            "# demo\n\n[run]\nn=3\nfit.loss=0.3333\nfit.starts.0.epoch=2\n\n[coverage]\nhead,tau_0.1\nadditive,0.1235\n",
        )

    def test_model_file_round_trip(self):
        frame = pd.DataFrame({"y": [1.0, 2.0, 3.0], "age": [20.0, 40.0, 60.0], "kind": ["a", "b", "a"]})
        encoder = FeatureEncoder({"y": "response", "age": "continuous", "kind": "categorical"}).fit(frame)
        cfg = NetworkConfig(input_dim=3, hidden_dims=(4, 2))
        rng = np.random.default_rng(12)
        model = FittedModel(cfg, CompositeObjective(ADDITIVE_90), [random_params(cfg, rng), random_params(cfg, rng)], encoder)
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "model.json"
            save_model(path, model)
            again = load_model(path)
            text = path.read_text()
            path.write_text(text.replace('"shape_header": [', '"shape_header": [[1, 1], ', 1))
            with self.assertRaises(DomainError):
                load_model(path)
        self.assertEqual(again.config, cfg)
        self.assertEqual(again.objective.spec, ADDITIVE_90)
        for a, b in zip(again.params, model.params):
            np.testing.assert_array_equal(a.to_vector(), b.to_vector())
        X = encoder.transform(frame)[1]
        np.testing.assert_array_equal(again.predict(X), model.predict(X))
        np.testing.assert_array_equal(again.encoder.transform(frame)[1], X)

    def test_missing_model_file(self):
        with self.assertRaises(FileNotFoundError):
            load_model("/nonexistent/model.json")


class RegressionSerializerTests(SimpleTestCase):
    def test_fit_quantiles_config(self):
        serializer = FitQuantilesConfigSerializer(data={"DATA": "a.csv", "LEVELS": "0.1,0.5,0.9", "HEADS": "additive,multiplicative"})
        self.assertTrue(serializer.is_valid(), serializer.errors)
        self.assertEqual(serializer.validated_data["heads"], ["additive", "multiplicative"])
        self.assertEqual(serializer.validated_data["hidden_dims"], [20, 15, 10])
        self.assertFalse(FitQuantilesConfigSerializer(data={"data": "a.csv", "levels": "0.5,0.1"}).is_valid())
        self.assertFalse(FitQuantilesConfigSerializer(data={"data": "a.csv", "levels": "0.5", "heads": "quadratic"}).is_valid())
        self.assertFalse(FitQuantilesConfigSerializer(data={"data": "a.csv", "levels": "0.5", "eta_weights": "1,2"}).is_valid())
        self.assertFalse(FitQuantilesConfigSerializer(data={"data": "a.csv", "levels": "0.5", "epochs": "3"}).is_valid())

    def test_fit_composite_config(self):
        base = {"data": "a.csv", "tau": "0.9"}
        self.assertFalse(FitCompositeConfigSerializer(data=base).is_valid())
        self.assertTrue(FitCompositeConfigSerializer(data={**base, "select_phi": "true"}).is_valid())
        serializer = FitCompositeConfigSerializer(data={**base, "form": "additive", "phi_minus_b": "2", "phi_plus_b": "0"})
        self.assertTrue(serializer.is_valid(), serializer.errors)
        self.assertEqual(serializer.validated_data["spec"], ADDITIVE_90)
        bad = FitCompositeConfigSerializer(data={**base, "form": "additive", "phi_minus_b": "0.5", "phi_plus_b": "0"})
        self.assertFalse(bad.is_valid())

    def test_evaluate_config(self):
        self.assertTrue(EvaluateConfigSerializer(data={"data": "a.csv", "model": "m.json"}).is_valid())
        self.assertFalse(EvaluateConfigSerializer(data={"data": "a.csv", "model": "m.json", "predictions": "p.csv"}).is_valid())
        self.assertFalse(EvaluateConfigSerializer(data={"data": "a.csv", "predictions": "p.csv"}).is_valid())
        self.assertTrue(EvaluateConfigSerializer(data={"data": "a.csv", "predictions": "p.csv", "tau": "0.9"}).is_valid())


class CommandTests(SimpleTestCase):
    TRAINING = "HIDDEN_DIMS=4\nMAX_EPOCHS=3\nN_STARTS=2\nBATCH_SIZE=64\n"

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)
        self.data = self.dir / "claims.csv"
        self.write_config("sim.env", "GENERATOR=gamma\nN=2000\nTAU=0.9\nCOEFF_MU=1.0,2.0\nGAMMA_SHAPE=2\nSEED=3\n")
        call_command("simulate", config=str(self.dir / "sim.env"), out=str(self.data), stdout=io.StringIO())

    def tearDown(self):
        self.tmp.cleanup()

    def write_config(self, name, text):
        path = self.dir / name
        path.write_text(text)
        return str(path)

    def call(self, command, config, out):
        call_command(command, config=config, out=str(self.dir / out), stdout=io.StringIO())
        return (self.dir / out).read_text()

    def test_fit_quantiles(self):
        config = self.write_config("q.env", f"DATA={self.data}\nLEVELS=0.1,0.5,0.9\nHEADS=additive,multiplicative\n{self.TRAINING}")
        text = self.call("fit_quantiles", config, "q.txt")
        self.assertIn("[pinball_loss]\nhead,tau_0.1,tau_0.5,tau_0.9\nadditive,", text)
        self.assertIn("\nmultiplicative,", text)
        self.assertTrue((self.dir / "q.additive.model.json").is_file())
        traces = pd.read_csv(self.dir / "q.multiplicative.traces.csv")
        self.assertEqual(sorted(traces["start"].unique()), [0, 1])
        self.assertEqual(self.call("fit_quantiles", config, "q2.txt"), text)

    def test_fit_composite_then_evaluate(self):
        config = self.write_config(
            "c.env",
            f"DATA={self.data}\nTRUTH={self.dir / 'claims.truth.csv'}\nTAU=0.9\nFORM=additive\n"
            f"PHI_MINUS_B=2\nPHI_PLUS_B=0\nBENCHMARK_GAMMA=true\n{self.TRAINING}",
        )
        text = self.call("fit_composite", config, "c.txt")
        for key in ("fit.calibration.coverage=", "score", "truth_relative_error", "benchmark_gamma", "mean_prediction="):
            self.assertIn(key, text)
        predictions = pd.read_csv(self.dir / "c.predictions.csv")
        self.assertEqual(list(predictions.columns), ["e_minus", "v", "e_plus"])
        self.assertEqual(self.call("fit_composite", config, "c2.txt"), text)

        evaluation = self.write_config("e.env", f"DATA={self.data}\nMODEL={self.dir / 'c.model.json'}\n")
        first = self.call("evaluate", evaluation, "e.txt")
        self.assertIn("[calibration]\ntau=0.9\nn=2000\n", first)
        self.assertEqual(self.call("evaluate", evaluation, "e2.txt"), first)

    def test_evaluate_truth_is_calibrated(self):
        config = self.write_config("e.env", f"DATA={self.data}\nPREDICTIONS={self.dir / 'claims.truth.csv'}\nTAU=0.9\n")
        text = self.call("evaluate", config, "e.txt")
        values = dict(line.split("=", 1) for line in text.splitlines() if "=" in line)
        self.assertAlmostEqual(float(values["coverage"]), 0.9, delta=0.05)
        self.assertLess(abs(float(values["v_plus"])), 4 * float(values["v_plus_se"]))

    def test_evaluate_empty_file(self):
        empty = self.dir / "empty.csv"
        empty.write_text("")
        config = self.write_config("e.env", f"DATA={empty}\nSCHEMA={self.dir / 'claims.schema'}\nPREDICTIONS={self.dir / 'claims.truth.csv'}\nTAU=0.9\n")
        with self.assertRaises(CommandError) as ctx:
            call_command("evaluate", config=config, out=str(self.dir / "e.txt"))
        self.assertEqual(ctx.exception.returncode, 1)

    def test_select_phi(self):
        config = self.write_config(
            "p.env",
            f"DATA={self.data}\nTAU=0.9\nREFIT=false\nHIDDEN_DIMS=4\nMAX_EPOCHS=150\nPATIENCE=30\nBATCH_SIZE=64\nN_STARTS=1\nLEARNING_RATE=0.02\n",
        )
        text = self.call("select_phi", config, "p.txt")
        self.assertIn("[phi_selection]", text)
        self.assertIn("chosen_form=revelation_plus", text)

    def test_invalid_score_is_a_user_error(self):
        config = self.write_config("c.env", f"DATA={self.data}\nTAU=0.9\nFORM=additive\nPHI_MINUS_B=0.5\nPHI_PLUS_B=0\n")
        with self.assertRaises(CommandError) as ctx:
            call_command("fit_composite", config=config, out=str(self.dir / "c.txt"))
        self.assertEqual(ctx.exception.returncode, 1)
        self.assertIn("phi_minus requires b > 1", str(ctx.exception))

    @tag("slow")
    def test_valid_scores_agree_on_the_ranking_of_means(self):
        training = "HIDDEN_DIMS=8\nMAX_EPOCHS=200\nPATIENCE=20\nBATCH_SIZE=128\nN_STARTS=2\nLEARNING_RATE=0.01\n"
        additive = self.write_config("a.env", f"DATA={self.data}\nTAU=0.9\nFORM=additive\nPHI_MINUS_B=2\nPHI_PLUS_B=0\n{training}")
        revelation = self.write_config("r.env", f"DATA={self.data}\nTAU=0.9\nFORM=revelation_plus\nPHI_B=0\nPHI_PLUS_B=0\n{training}")
        self.call("fit_composite", additive, "a.txt")
        self.call("fit_composite", revelation, "r.txt")

        means = []
        for name in ("a", "r"):
            triplets = pd.read_csv(self.dir / f"{name}.predictions.csv")
            means.append(0.9 * triplets["e_minus"] + 0.1 * triplets["e_plus"])
        self.assertEqual(len(means[0]), len(means[1]))
        self.assertGreater(stats.spearmanr(means[0], means[1]).correlation, 0.95)

    @tag("slow")
    def test_misspecified_constant_model_is_miscalibrated(self):
        # lognormal claims with log-sd 1 scored by a constant gamma model with matching mean and variance
        data = self.dir / "lognormal.csv"
        self.write_config("ln.env", f"GENERATOR=lognormal\nN=200000\nTAU=0.9\nCOEFF_M=0\nCOEFF_S={math.log(math.e - 1)}\nSEED=5\n")
        call_command("simulate", config=str(self.dir / "ln.env"), out=str(data), stdout=io.StringIO())
        constant = gamma_triplets(np.full(200_000, math.exp(0.5)), 1.0 / (math.e - 1.0), 0.9)
        write_truth_csv(self.dir / "constant.csv", constant)

        config = self.write_config("e.env", f"DATA={data}\nPREDICTIONS={self.dir / 'constant.csv'}\nTAU=0.9\n")
        text = self.call("evaluate", config, "e.txt")
        values = dict(line.split("=", 1) for line in text.splitlines() if "=" in line)
        self.assertGreater(float(values["coverage"]), 0.915)
        self.assertGreater(abs(float(values["v_plus"])), 0.05 * float(values["mean_observation"]))
        self.assertGreater(abs(float(values["v_plus"])), 3 * float(values["v_plus_se"]))


@tag("slow")
class EndToEndTests(SimpleTestCase):
    """Synthetic gamma fits at n = 50,000 with default settings."""

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        data = simulate_gamma(50_000, 2024, [0.5, 1.0, -0.5, 0.5], 2.0, 0.9)
        cls.learn, cls.test = split_stratified(data, 0.2, seed=0)

    def test_composite_regression(self):
        cfg = NetworkConfig(input_dim=self.learn.input_dim)
        report = fit(self.learn, cfg, TrainConfig(), CompositeObjective(ADDITIVE_90), test=self.test)
        calibration = report.calibration
        self.assertGreaterEqual(calibration.coverage, 0.89)
        self.assertLessEqual(calibration.coverage, 0.91)
        self.assertLess(abs(calibration.v_minus), 0.02 * calibration.mean_observation)
        self.assertLess(abs(calibration.v_plus), 0.02 * calibration.mean_observation)
        predictions = report.model.predict_triplets(self.test.features)
        truth = self.test.truth
        relative = {name: np.mean(np.abs(getattr(predictions, name) - getattr(truth, name)) / getattr(truth, name)) for name in ("e_minus", "v", "e_plus")}
        self.assertLess(relative["v"], 0.05)
        self.assertLess(relative["e_plus"], 0.05)
        self.assertLess(relative["e_minus"], 0.08)

    def test_quantile_regression(self):
        levels = (0.1, 0.5, 0.9)
        losses = {}
        for head in (HeadType.MULTI_QUANTILE_ADDITIVE, HeadType.MULTI_QUANTILE_MULTIPLICATIVE):
            cfg = NetworkConfig(input_dim=self.learn.input_dim, head=head, levels=levels)
            report = fit(self.learn, cfg, TrainConfig(), PinballObjective(levels), test=self.test)
            self.assertTrue(np.all(np.diff(report.test_predictions, axis=1) >= 0))
            self.assertTrue(np.all(np.diff(report.model.predict(self.learn.features), axis=1) >= 0))
            np.testing.assert_allclose(report.coverage, levels, atol=0.01)
            losses[head] = report.level_losses
        np.testing.assert_allclose(
            losses[HeadType.MULTI_QUANTILE_ADDITIVE], losses[HeadType.MULTI_QUANTILE_MULTIPLICATIVE], rtol=0.02
        )

    def test_phi_selection_on_fitted_models(self):
        cfg = NetworkConfig(input_dim=self.learn.input_dim, head=HeadType.MEAN, levels=())
        mean_model = fit_mean_model(self.learn, cfg, TrainConfig()).model
        quantile_model = fit_quantile_model(self.learn, cfg, TrainConfig(), 0.9).model
        spec, selection = select_composite_spec(self.learn, 0.9, mean_model, quantile_model, refit=False)
        self.assertAlmostEqual(selection.all_claims.b, 0.0, delta=0.1)
        self.assertEqual(spec.form, ScoreForm.REVELATION_PLUS)
