"""
base.py

Data loading and report blocks shared by the fitting commands.
"""

import numpy as np

from claims.loaders import load_learn_test, read_schema, sidecar
from regression.serializers import FitReportSerializer, train_config
from scoring.management.base import RunCommand


def schema_path(config):
    if config.get("schema"):
        return config["schema"]
    return sidecar(config["data"], ".schema")


class TrainingCommand(RunCommand):
    """Base of fit_quantiles, fit_composite and select_phi."""

    def load_data(self, config):
        """(learn, test, encoder) for the data, schema and truth keys of `config`."""
        return load_learn_test(
            config["data"],
            read_schema(schema_path(config)),
            config["test_fraction"],
            config["seed"],
            truth_path=config.get("truth"),
        )

    def run_section(self, config, learn, test):
        return {
            "data": config["data"],
            "learn_rows": learn.n,
            "test_rows": test.n,
            "features": learn.input_dim,
            "seed": config["seed"],
            "hidden_dims": list(config["hidden_dims"]),
            "training": train_config(config).to_dict(),
        }

    def fit_section(self, report):
        return FitReportSerializer(report).data

    def write_traces(self, path, report):
        report.traces_frame().to_csv(path, index=False, lineterminator="\n")
        return path


def truth_errors(predictions, truth):
    """Mean relative errors of predicted triplets against the true ones, per component."""
    return {
        name: float(np.mean(np.abs(getattr(predictions, name) - getattr(truth, name)) / getattr(truth, name)))
        for name in ("e_minus", "v", "e_plus")
    }
