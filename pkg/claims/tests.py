import io
import math
import tempfile
from pathlib import Path

import numpy as np
import pandas as pd
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase, tag

from scoring.exceptions import DomainError, ParseError

from .datasets import FeatureEncoder, FeatureKind, split_stratified, stratified_indices
from .loaders import (
    load_csv,
    load_learn_test,
    read_schema,
    read_truth_csv,
    write_csv,
    write_schema,
    write_truth_csv,
)
from .serializers import SimulateConfigSerializer
from .simulate import lognormal_triplets, simulate_gamma, simulate_lognormal

# softplus(SOFTPLUS_ONE) == 1
SOFTPLUS_ONE = math.log(math.e - 1.0)


class SimulateGammaTests(SimpleTestCase):
    def test_unit_mean(self):
        data = simulate_gamma(10**5, 1, [0.0, 0.0, 0.0], 2.0, 0.9)
        se = data.responses.std() / math.sqrt(data.n)
        self.assertLess(abs(data.responses.mean() - 1.0), 3 * se)
        np.testing.assert_allclose(data.truth.mean_recombination(0.9), 1.0, rtol=1e-10)

    def test_recombination_rowwise(self):
        data = simulate_gamma(500, 7, [0.5, 1.0, -0.5], 1.5, 0.75)
        mu = np.exp(data.features @ np.array([0.5, 1.0, -0.5]))
        np.testing.assert_allclose(data.truth.mean_recombination(0.75), mu, rtol=1e-10)
        self.assertTrue(np.all(data.truth.e_minus <= data.truth.v))
        self.assertTrue(np.all(data.truth.v <= data.truth.e_plus))

    def test_same_seed_same_data(self):
        first = simulate_gamma(200, 3, [0.1, 0.2], 2.0, 0.9)
        second = simulate_gamma(200, 3, [0.1, 0.2], 2.0, 0.9)
        np.testing.assert_array_equal(first.responses, second.responses)
        np.testing.assert_array_equal(first.features, second.features)

    def test_design(self):
        data = simulate_gamma(50, 0, [0.0, 1.0, 1.0], 2.0, 0.5)
        self.assertEqual(data.features.shape, (50, 3))
        self.assertEqual(data.input_dim, 2)
        np.testing.assert_array_equal(data.features[:, 0], 1.0)
        self.assertEqual(data.feature_names, ["x1", "x2"])

    def test_invalid_parameters(self):
        with self.assertRaises(DomainError):
            simulate_gamma(10, 0, [0.0], -1.0, 0.9)
        with self.assertRaises(DomainError):
            simulate_gamma(0, 0, [0.0], 1.0, 0.9)
        with self.assertRaises(DomainError):
            simulate_gamma(10, 0, [], 1.0, 0.9)


class SimulateLognormalTests(SimpleTestCase):
    def test_standard_lognormal_quantile(self):
        truth = lognormal_triplets([0.0], [1.0], 0.9)
        self.assertAlmostEqual(truth.v[0], 3.60222, places=4)
        data = simulate_lognormal(20, 0, [0.0], [SOFTPLUS_ONE], 0.9)
        self.assertAlmostEqual(data.truth.v[0], 3.60222, places=4)

    def test_recombination_rowwise(self):
        data = simulate_lognormal(300, 2, [0.2, 0.5], [-0.3, 0.8], 0.9)
        m = data.features @ np.array([0.2, 0.5])
        s = np.logaddexp(0.0, data.features @ np.array([-0.3, 0.8]))
        np.testing.assert_allclose(data.truth.mean_recombination(0.9), np.exp(m + s**2 / 2), rtol=1e-10)

    def _monte_carlo(self, n):
        data = simulate_lognormal(n, 9, [0.0], [SOFTPLUS_ONE], 0.9)
        t = data.truth[0]
        y = data.responses
        low, high = y[y <= t.v], y[y > t.v]
        self.assertLess(abs(low.mean() - t.e_minus), 3 * low.std() / math.sqrt(low.size))
        self.assertLess(abs(high.mean() - t.e_plus), 3 * high.std() / math.sqrt(high.size))

    def test_monte_carlo_agreement(self):
        self._monte_carlo(10**6)

    @tag("slow")
    def test_monte_carlo_agreement_ten_million(self):
        self._monte_carlo(10**7)

    def test_coefficient_lengths(self):
        with self.assertRaises(DomainError):
            simulate_lognormal(10, 0, [0.0, 1.0], [0.0], 0.9)


class StratifiedSplitTests(SimpleTestCase):
    def test_sizes(self):
        learn, test = stratified_indices(np.arange(1.0, 101.0), 0.2, 0)
        self.assertEqual((len(learn), len(test)), (80, 20))
        learn, test = stratified_indices(np.random.default_rng(0).gamma(2.0, size=10_000), 0.1, 0)
        self.assertEqual((len(learn), len(test)), (9_000, 1_000))

    def test_disjoint_exhaustive_and_reproducible(self):
        y = np.random.default_rng(1).lognormal(size=537)
        learn, test = stratified_indices(y, 0.1, 42)
        self.assertEqual(set(learn) & set(test), set())
        self.assertEqual(sorted(np.concatenate([learn, test])), list(range(537)))
        again_learn, again_test = stratified_indices(y, 0.1, 42)
        np.testing.assert_array_equal(learn, again_learn)
        np.testing.assert_array_equal(test, again_test)

    def test_decile_proportions(self):
        y = np.random.default_rng(2).gamma(1.5, 3.0, size=10_000)
        _, test = stratified_indices(y, 0.1, 5)
        deciles = pd.qcut(pd.Series(y).rank(method="first"), 10, labels=False).to_numpy()
        counts = np.bincount(deciles[test], minlength=10)
        for count in counts:
            self.assertLessEqual(abs(count - 100), 1)

    def test_degenerate(self):
        with self.assertRaises(DomainError):
            stratified_indices([1.0, 2.0], 0.1, 0)
        with self.assertRaises(DomainError):
            stratified_indices([1.0, 2.0, 3.0], 1.0, 0)

    def test_split_keeps_truth(self):
        data = simulate_gamma(100, 0, [0.0, 1.0], 2.0, 0.9)
        learn, test = split_stratified(data, 0.1, 0)
        self.assertEqual((learn.n, test.n), (90, 10))
        np.testing.assert_array_equal(test.truth.v, data.truth.v[test.row_ids])


class LoaderTests(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)
        self.schema = {"claim": "response", "age": "continuous", "injury": "categorical", "female": "binary"}

    def tearDown(self):
        self.tmp.cleanup()

    def write(self, name, text):
        path = self.dir / name
        path.write_text(text, encoding="utf-8")
        return path

    def test_toy_encoding(self):
        path = self.write("toy.csv", "claim,age,injury,female\n120.5,30,hand,0\n80,50,foot,1\n3000.25,40,hand,1\n")
        data, encoder = load_csv(path, self.schema)
        self.assertEqual(data.features.shape, (3, 1 + 1 + 2 + 1))
        self.assertEqual(data.input_dim, 4)
        np.testing.assert_allclose(data.features[:, 1], [0.0, 1.0, 0.5])
        onehot = [m for m in data.feature_meta if m.kind == FeatureKind.ONEHOT]
        self.assertEqual([m.name for m in onehot], ["injury=foot", "injury=hand"])
        np.testing.assert_array_equal(data.features[:, 2:4].sum(axis=1), 1.0)
        np.testing.assert_array_equal(data.responses, [120.5, 80.0, 3000.25])

    def test_nonpositive_response_names_row(self):
        path = self.write("bad.csv", "claim,age,injury,female\n120.5,30,hand,0\n0,50,foot,1\n")
        with self.assertRaises(ParseError) as ctx:
            load_csv(path, self.schema)
        self.assertEqual(ctx.exception.row, 1)
        self.assertIn("row 1", str(ctx.exception))

    def test_unparsable_and_missing(self):
        path = self.write("bad.csv", "claim,age,injury,female\n120.5,old,hand,0\n")
        with self.assertRaises(ParseError) as ctx:
            load_csv(path, self.schema)
        self.assertEqual(ctx.exception.column, "age")
        path = self.write("short.csv", "claim,age,female\n120.5,30,0\n")
        with self.assertRaises(ParseError):
            load_csv(path, self.schema)
        path = self.write("empty.csv", "claim,age,injury,female\n")
        with self.assertRaises(ParseError):
            load_csv(path, self.schema)
        path = self.write("binary.csv", "claim,age,injury,female\n120.5,30,hand,2\n")
        with self.assertRaises(ParseError):
            load_csv(path, self.schema)

    def test_unknown_category(self):
        path = self.write("learn.csv", "claim,age,injury,female\n120.5,30,hand,0\n80,50,foot,1\n")
        _, encoder = load_csv(path, self.schema)
        other = self.write("other.csv", "claim,age,injury,female\n99,35,knee,0\n")
        with self.assertRaises(ParseError):
            load_csv(other, self.schema, encoder=encoder)

    def test_encoder_state_round_trip(self):
        path = self.write("toy.csv", "claim,age,injury,female\n120.5,30,hand,0\n80,50,foot,1\n3000.25,40,hand,1\n")
        data, encoder = load_csv(path, self.schema)
        restored = FeatureEncoder.from_dict(encoder.to_dict())
        again, _ = load_csv(path, self.schema, encoder=restored)
        np.testing.assert_array_equal(data.features, again.features)

    def test_write_then_load_is_exact(self):
        data = simulate_gamma(250, 4, [1.0, 0.3, -0.2], 2.0, 0.9)
        path = self.dir / "sim.csv"
        write_csv(path, data)
        write_schema(self.dir / "sim.schema", {"x1": "continuous", "x2": "continuous", "y": "response"})
        loaded, _ = load_csv(path, read_schema(self.dir / "sim.schema"))
        np.testing.assert_array_equal(loaded.responses, data.responses)

        write_truth_csv(self.dir / "truth.csv", data.truth)
        truth = read_truth_csv(self.dir / "truth.csv")
        np.testing.assert_array_equal(truth.as_matrix(), data.truth.as_matrix())

    def test_learn_test_scaling_uses_learn_rows(self):
        data = simulate_gamma(400, 4, [1.0, 0.3], 2.0, 0.9)
        write_csv(self.dir / "sim.csv", data)
        write_truth_csv(self.dir / "sim.truth.csv", data.truth)
        learn, test, encoder = load_learn_test(
            self.dir / "sim.csv", {"x1": "continuous", "y": "response"}, 0.1, 0, self.dir / "sim.truth.csv"
        )
        self.assertEqual((learn.n, test.n), (360, 40))
        self.assertAlmostEqual(learn.features[:, 1].min(), 0.0, places=12)
        self.assertAlmostEqual(learn.features[:, 1].max(), 1.0, places=12)
        raw = data.features[learn.row_ids, 1]
        self.assertEqual(encoder.to_dict()["continuous_min"], [raw.min()])
        np.testing.assert_array_equal(test.truth.e_plus, data.truth.e_plus[test.row_ids])

    def test_schema_validation(self):
        with self.assertRaises(ParseError):
            write_schema(self.dir / "s.schema", {"a": "continuous"})
        with self.assertRaises(ParseError):
            write_schema(self.dir / "s.schema", {"a": "response", "b": "ordinal"})


class SimulateConfigTests(SimpleTestCase):
    def test_gamma_requires_shape(self):
        serializer = SimulateConfigSerializer(data={"generator": "gamma", "n": "10", "tau": "0.9", "coeff_mu": "0,1"})
        self.assertFalse(serializer.is_valid())
        self.assertIn("gamma_shape", serializer.errors)

    def test_comma_lists(self):
        serializer = SimulateConfigSerializer(
            data={"GENERATOR": "lognormal", "N": "10", "TAU": "0.9", "COEFF_M": "0, 1", "COEFF_S": "0.5,0.5"}
        )
        self.assertTrue(serializer.is_valid(), serializer.errors)
        self.assertEqual(serializer.validated_data["coeff_m"], [0.0, 1.0])


class SimulateCommandTests(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)
        self.config = self.dir / "run.env"
        self.config.write_text("GENERATOR=gamma\nN=1000\nTAU=0.9\nCOEFF_MU=1.0,0.5,-0.5\nGAMMA_SHAPE=2\nSEED=11\n")

    def tearDown(self):
        self.tmp.cleanup()

    def test_writes_data_truth_and_schema(self):
        out = self.dir / "claims.csv"
        call_command("simulate", config=str(self.config), out=str(out), stdout=io.StringIO())
        data = pd.read_csv(out)
        truth = read_truth_csv(self.dir / "claims.truth.csv")
        self.assertEqual(len(data), 1000)
        self.assertEqual(len(truth), 1000)
        self.assertEqual(read_schema(self.dir / "claims.schema")["y"], "response")
        mu = np.exp(1.0 + 0.5 * data["x1"] - 0.5 * data["x2"]).to_numpy()
        np.testing.assert_allclose(truth.mean_recombination(0.9), mu, rtol=1e-10)

    def test_deterministic_under_seed(self):
        first, second = self.dir / "a.csv", self.dir / "b.csv"
        call_command("simulate", config=str(self.config), out=str(first), stdout=io.StringIO())
        call_command("simulate", config=str(self.config), out=str(second), stdout=io.StringIO())
        self.assertEqual(first.read_bytes(), second.read_bytes())
        self.assertEqual((self.dir / "a.truth.csv").read_bytes(), (self.dir / "b.truth.csv").read_bytes())

    def test_seed_flag_overrides(self):
        first, second = self.dir / "a.csv", self.dir / "b.csv"
        call_command("simulate", config=str(self.config), out=str(first), stdout=io.StringIO())
        call_command(
            "simulate", config=str(self.config), seed=12, out=str(second), stdout=io.StringIO()
        )
        self.assertNotEqual(first.read_bytes(), second.read_bytes())

    def test_unknown_key_is_a_user_error(self):
        self.config.write_text("GENERATOR=gamma\nN=10\nTAU=0.9\nCOEFF_MU=1\nGAMMA_SHAPE=2\nSHAPE=3\n")
        with self.assertRaises(CommandError) as ctx:
            call_command("simulate", config=str(self.config), out=str(self.dir / "x.csv"))
        self.assertEqual(ctx.exception.returncode, 1)
        self.assertIn("shape", str(ctx.exception))

    def test_missing_config_file(self):
        with self.assertRaises(CommandError) as ctx:
            call_command("simulate", config=str(self.dir / "missing.env"), out=str(self.dir / "x.csv"))
        self.assertEqual(ctx.exception.returncode, 1)
