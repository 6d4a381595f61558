"""
serializers.py

Run configuration of the `simulate` command.
"""

from rest_framework import serializers

from scoring.serializers import FloatListField, StrictConfigSerializer


class SimulateConfigSerializer(StrictConfigSerializer):
    """
    Validates a simulate run configuration.

    Fields:
        generator (str): gamma or lognormal.
        n (int): Number of rows.
        seed (int): Seed of the generator.
        tau (float): Level of the truth triplets.
        coeff_mu (list[float]): Gamma log-mean coefficients, intercept first.
        gamma_shape (float): Gamma shape.
        coeff_m, coeff_s (list[float]): Lognormal location and softplus-scale coefficients.
    """

    generator = serializers.ChoiceField(choices=["gamma", "lognormal"])
    n = serializers.IntegerField(min_value=1)
    seed = serializers.IntegerField(default=0)
    tau = serializers.FloatField(min_value=0.0, max_value=1.0)
    coeff_mu = FloatListField(required=False, allow_empty=False)
    gamma_shape = serializers.FloatField(required=False, min_value=0.0)
    coeff_m = FloatListField(required=False, allow_empty=False)
    coeff_s = FloatListField(required=False, allow_empty=False)

    def validate_tau(self, value):
        if not 0.0 < value < 1.0:
            raise serializers.ValidationError("Must lie strictly between 0 and 1.")
        return value

    def validate(self, attrs):
        needed = {"gamma": ("coeff_mu", "gamma_shape"), "lognormal": ("coeff_m", "coeff_s")}[attrs["generator"]]
        missing = {key: f"Required for the {attrs['generator']} generator." for key in needed if key not in attrs}
        if missing:
            raise serializers.ValidationError(missing)
        if attrs["generator"] == "lognormal" and len(attrs["coeff_m"]) != len(attrs["coeff_s"]):
            raise serializers.ValidationError({"coeff_s": "Must have as many entries as coeff_m."})
        if attrs["generator"] == "gamma" and not attrs["gamma_shape"] > 0:
            raise serializers.ValidationError({"gamma_shape": "Must be positive."})
        return attrs
