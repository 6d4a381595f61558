"""
simulate.py

manage.py simulate --config run.env --out data/claims.csv

Writes a synthetic claims table, its truth file (<out>.truth.csv with
e_minus, v, e_plus per row) and a schema sidecar (<out>.schema).
"""

from claims.loaders import sidecar, write_csv, write_schema, write_truth_csv
from claims.serializers import SimulateConfigSerializer
from claims.simulate import simulate_gamma, simulate_lognormal
from scoring.management.base import RunCommand


class Command(RunCommand):
    help = "Simulate gamma or lognormal claims with closed-form composite triplets."
    config_serializer = SimulateConfigSerializer

    def run(self, config, out):
        if config["generator"] == "gamma":
            dataset = simulate_gamma(
                config["n"], config["seed"], config["coeff_mu"], config["gamma_shape"], config["tau"]
            )
        else:
            dataset = simulate_lognormal(
                config["n"], config["seed"], config["coeff_m"], config["coeff_s"], config["tau"]
            )
        truth_path = sidecar(out, ".truth.csv")
        schema_path = sidecar(out, ".schema")
        write_csv(out, dataset)
        write_truth_csv(truth_path, dataset.truth)
        write_schema(
            schema_path,
            {**{name: "continuous" for name in dataset.feature_names}, dataset.response_name: "response"},
        )
        self.done(out, truth_path, schema_path)
