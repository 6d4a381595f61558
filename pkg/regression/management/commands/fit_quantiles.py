"""
fit_quantiles.py

manage.py fit_quantiles --config quantiles.env --out reports/quantiles.txt

Fits one multi-quantile network per requested head on the learn split and
reports the out-of-sample pinball losses and coverage ratios per level.
Next to the report: <out>.<head>.model.json and <out>.<head>.traces.csv.
"""

import pandas as pd

from claims.loaders import sidecar
from regression.management.base import TrainingCommand
from regression.objectives import PinballObjective
from regression.reports import Report, save_model
from regression.serializers import HEAD_CHOICES, FitQuantilesConfigSerializer, network_config, train_config
from regression.train import fit


class Command(TrainingCommand):
    help = "Fit additive and/or multiplicative multi-quantile networks."
    config_serializer = FitQuantilesConfigSerializer

    def run(self, config, out):
        learn, test, encoder = self.load_data(config)
        levels = config["levels"]
        weights = config.get("eta_weights")
        report = Report("fit_quantiles")
        report.section("run", {**self.run_section(config, learn, test), "levels": levels, "heads": config["heads"]})

        losses, coverage, written = [], [], []
        for name in config["heads"]:
            cfg = network_config(config, learn.input_dim, HEAD_CHOICES[name], levels)
            result = fit(learn, cfg, train_config(config, weights), PinballObjective(levels), test=test, encoder=encoder)
            losses.append([name, *result.level_losses])
            coverage.append([name, *result.coverage])
            report.section(f"fit.{name}", {**self.fit_section(result), "weights": list(result.objective.weights)})
            written.append(save_model(sidecar(out, f".{name}.model.json"), result.model))
            written.append(self.write_traces(sidecar(out, f".{name}.traces.csv"), result))

        columns = ["head", *(f"tau_{tau:g}" for tau in levels)]
        report.table("pinball_loss", pd.DataFrame(losses, columns=columns))
        report.table("coverage", pd.DataFrame(coverage, columns=columns))
        report.write(out)
        self.done(out, *written)
