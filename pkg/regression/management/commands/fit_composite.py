"""
fit_composite.py

manage.py fit_composite --config composite.env --out reports/composite.txt

Fits the composite triplet network under a given score, or under the score
chosen by phi selection (SELECT_PHI=true), and reports the out-of-sample
coverage, the lower and upper ES identifications and the recombined mean.
Optionally also reports the gamma reference model (BENCHMARK_GAMMA=true)
and, for synthetic data with a truth file, relative errors against truth.

Next to the report: <out>.model.json, <out>.traces.csv and
<out>.predictions.csv (test triplets).
"""

from claims.loaders import sidecar, write_truth_csv
from regression.benchmark import gamma_benchmark
from regression.management.base import TrainingCommand, truth_errors
from regression.network import HeadType
from regression.objectives import CompositeObjective
from regression.phi_select import fit_mean_model, fit_quantile_model, select_composite_spec
from regression.reports import Report, save_model
from regression.serializers import FitCompositeConfigSerializer, PhiSelectionSerializer, network_config, train_config
from regression.train import fit
from scoring.serializers import CalibrationReportSerializer, ScoreSpecReadSerializer


class Command(TrainingCommand):
    help = "Fit the composite (lower ES, quantile, upper ES) network."
    config_serializer = FitCompositeConfigSerializer

    def run(self, config, out):
        learn, test, encoder = self.load_data(config)
        tau = config["tau"]
        cfg = network_config(config, learn.input_dim, HeadType.COMPOSITE_ADDITIVE, (tau,))
        training = train_config(config)
        report = Report("fit_composite")
        report.section("run", {**self.run_section(config, learn, test), "tau": tau})

        mean_model = None
        if config["select_phi"]:
            mean_model = fit_mean_model(learn, cfg, training, b=config["mean_b"]).model
            quantile_model = fit_quantile_model(learn, cfg, training, tau).model
            spec, selection = select_composite_spec(
                learn, tau, mean_model, quantile_model, cfg, training, refit=config["refit"], g_scale=config["g_scale"]
            )
            report.section("phi_selection", PhiSelectionSerializer(selection).data)
            report.text("phi_selection_table", selection.as_table())
        else:
            spec = config["spec"]
        report.section("score", ScoreSpecReadSerializer(spec).data)

        result = fit(learn, cfg, training, CompositeObjective(spec), test=test, encoder=encoder)
        report.section("fit", self.fit_section(result))
        predictions = result.model.predict_triplets(test.features)
        report.section(
            "prediction",
            {"mean_prediction": float(predictions.mean_recombination(tau).mean()), "mean_response": float(test.responses.mean())},
        )
        if test.truth is not None:
            report.section("truth_relative_error", truth_errors(predictions, test.truth))

        if config["benchmark_gamma"]:
            if mean_model is None or config["mean_b"] != 0.0:
                mean_model = fit_mean_model(learn, cfg, training, b=0.0).model
            benchmark = gamma_benchmark(mean_model, learn, test, tau)
            report.section(
                "benchmark_gamma",
                {
                    "dispersion": benchmark["dispersion"],
                    "gamma_shape": benchmark["gamma_shape"],
                    "calibration": CalibrationReportSerializer(benchmark["calibration"]).data,
                },
            )

        model_path = save_model(sidecar(out, ".model.json"), result.model)
        traces_path = self.write_traces(sidecar(out, ".traces.csv"), result)
        predictions_path = sidecar(out, ".predictions.csv")
        write_truth_csv(predictions_path, predictions)
        report.write(out)
        self.done(out, model_path, traces_path, predictions_path)
