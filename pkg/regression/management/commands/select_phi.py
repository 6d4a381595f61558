"""
select_phi.py

manage.py select_phi --config phi.env --out reports/phi.txt

Pre-fits a mean and a tau-quantile network on the learn split, regresses the
squared Pearson residuals on the fitted means (all claims, claims above and
at or below the quantile) and reports the fitted (b, c) and the score form
they allow.
"""

from regression.management.base import TrainingCommand
from regression.network import HeadType
from regression.phi_select import fit_mean_model, fit_quantile_model, select_composite_spec
from regression.reports import Report
from regression.serializers import PhiSelectionSerializer, SelectPhiConfigSerializer, network_config, train_config
from scoring.serializers import ScoreSpecReadSerializer


class Command(TrainingCommand):
    help = "Select the phi family members of the composite score from residual regressions."
    config_serializer = SelectPhiConfigSerializer

    def run(self, config, out):
        learn, test, _ = self.load_data(config)
        tau = config["tau"]
        cfg = network_config(config, learn.input_dim, HeadType.MEAN, ())
        training = train_config(config)
        mean_model = fit_mean_model(learn, cfg, training, b=config["mean_b"]).model
        quantile_model = fit_quantile_model(learn, cfg, training, tau).model
        spec, selection = select_composite_spec(
            learn, tau, mean_model, quantile_model, cfg, training, refit=config["refit"], g_scale=config["g_scale"]
        )

        report = Report("select_phi")
        report.section("run", {**self.run_section(config, learn, test), "tau": tau, "mean_b": config["mean_b"]})
        report.section("phi_selection", PhiSelectionSerializer(selection).data)
        report.text("phi_selection_table", selection.as_table())
        report.section("score", ScoreSpecReadSerializer(spec).data)
        report.write(out)
        self.stdout.write(selection.as_table())
        self.done(out)
