"""
evaluate.py

manage.py evaluate --config evaluate.env --out reports/evaluation.txt

Scores a claims table with a saved model (MODEL=...) or with a CSV of
predicted triplets (PREDICTIONS=..., TAU=...), e.g. the truth file of
simulated data, and reports the calibration statistics.
"""

import pandas as pd

from claims.loaders import load_csv, read_schema, read_truth_csv
from regression.management.base import schema_path
from regression.reports import Report, load_model
from regression.serializers import EvaluateConfigSerializer
from regression.train import evaluate_model
from scoring.exceptions import DomainError
from scoring.identification import calibration_report
from scoring.management.base import RunCommand
from scoring.serializers import CalibrationReportSerializer


class Command(RunCommand):
    help = "Calibration report of a saved model or of predicted triplets on a claims table."
    config_serializer = EvaluateConfigSerializer

    def run(self, config, out):
        report = Report("evaluate")
        if "model" in config:
            model = load_model(config["model"])
            if model.encoder is None:
                raise DomainError(f"model file {config['model']} carries no feature encoder")
            schema = read_schema(config["schema"]) if config.get("schema") else model.encoder.schema
            data, _ = load_csv(config["data"], schema, model.encoder)
            if data.input_dim != model.config.input_dim:
                raise DomainError(f"data have {data.input_dim} features, the model expects {model.config.input_dim}")
            stats = evaluate_model(model, data)
            report.section("run", {"data": config["data"], "model": config["model"], "rows": data.n, "head": model.config.head.value})
            report.section("loss", {"objective": model.objective.name, "mean_loss": stats["loss"]})
            if "calibration" in stats:
                report.section("calibration", CalibrationReportSerializer(stats["calibration"]).data)
            elif "coverage" in stats:
                columns = [f"tau_{tau:g}" for tau in model.config.levels]
                report.table("pinball_loss", pd.DataFrame([stats["level_losses"]], columns=columns))
                report.table("coverage", pd.DataFrame([stats["coverage"]], columns=columns))
        else:
            data, _ = load_csv(config["data"], read_schema(schema_path(config)))
            predictions = read_truth_csv(config["predictions"])
            calibration = calibration_report(predictions, data.responses, config["tau"])
            report.section("run", {"data": config["data"], "predictions": config["predictions"], "rows": data.n})
            report.section("calibration", CalibrationReportSerializer(calibration).data)
        report.write(out)
        self.done(out)
