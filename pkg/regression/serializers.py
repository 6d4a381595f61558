"""
Serializers of the regression app: run configurations of the fitting
commands, and representations of fit reports, phi selections and model
files. Run configurations are validated before any computation starts;
report and model files are written from `serializer.data`.
"""

from rest_framework import serializers

from claims.datasets import FeatureEncoder
from scoring.domain import ScoreForm
from scoring.exceptions import ConfigurationError, DomainError
from scoring.serializers import (
    CalibrationReportSerializer,
    FloatListField,
    IntegerListField,
    ScoreSpecSerializer,
    StrictConfigSerializer,
)

from .network import HeadType, NetworkConfig, NetworkParams
from .objectives import objective_from_dict
from .train import FittedModel, TrainConfig

HEAD_CHOICES = {
    "additive": HeadType.MULTI_QUANTILE_ADDITIVE,
    "multiplicative": HeadType.MULTI_QUANTILE_MULTIPLICATIVE,
}


class HeadListField(FloatListField):
    """Comma separated head names ("additive,multiplicative")."""

    child = serializers.ChoiceField(choices=list(HEAD_CHOICES))


def strictly_inside_unit_interval(value):
    if not 0.0 < value < 1.0:
        raise serializers.ValidationError("Must lie strictly between 0 and 1.")
    return value


class TrainingConfigSerializer(StrictConfigSerializer):
    """
    Keys shared by every command that trains networks.

    Fields:
        data (str): Claims CSV.
        schema (str): Schema sidecar; defaults to <data stem>.schema.
        truth (str): Optional truth CSV of synthetic data (e_minus, v, e_plus per row).
        test_fraction (float): Share of rows held out for the out-of-sample report.
        seed (int): Seed of the splits and starting points.
        hidden_dims (list[int]): Hidden layer widths.
        batch_size, max_epochs, patience, n_starts (int): Optimisation settings.
        learning_rate, beta_1, beta_2, val_fraction (float): Optimisation settings.
        nesterov, init_from_data (bool): Optimisation settings.
    """

    data = serializers.CharField()
    schema = serializers.CharField(required=False)
    truth = serializers.CharField(required=False)
    test_fraction = serializers.FloatField(default=0.2, validators=[strictly_inside_unit_interval])
    seed = serializers.IntegerField(default=0)
    hidden_dims = IntegerListField(default=[20, 15, 10], allow_empty=False)
    batch_size = serializers.IntegerField(default=512, min_value=1)
    max_epochs = serializers.IntegerField(default=500, min_value=1)
    patience = serializers.IntegerField(default=15, min_value=1)
    learning_rate = serializers.FloatField(default=1e-3, min_value=0.0)
    beta_1 = serializers.FloatField(default=0.9, validators=[strictly_inside_unit_interval])
    beta_2 = serializers.FloatField(default=0.999, validators=[strictly_inside_unit_interval])
    n_starts = serializers.IntegerField(default=5, min_value=1)
    val_fraction = serializers.FloatField(default=0.2, validators=[strictly_inside_unit_interval])
    nesterov = serializers.BooleanField(default=True)
    init_from_data = serializers.BooleanField(default=True)

    def validate_learning_rate(self, value):
        if not value > 0:
            raise serializers.ValidationError("Must be positive.")
        return value


def train_config(config, eta_weights=None):
    """TrainConfig from validated training keys."""
    return TrainConfig(
        batch_size=config["batch_size"],
        max_epochs=config["max_epochs"],
        patience=config["patience"],
        learning_rate=config["learning_rate"],
        moment_decays=(config["beta_1"], config["beta_2"]),
        n_starts=config["n_starts"],
        val_fraction=config["val_fraction"],
        eta_weights=eta_weights,
        seed=config["seed"],
        nesterov=config["nesterov"],
        init_from_data=config["init_from_data"],
    )


def network_config(config, input_dim, head, levels):
    return NetworkConfig(
        input_dim=input_dim,
        hidden_dims=tuple(config["hidden_dims"]),
        head=head,
        levels=tuple(levels),
        seed=config["seed"],
    )


class FitQuantilesConfigSerializer(TrainingConfigSerializer):
    """
    Fields:
        levels (list[float]): Strictly increasing quantile levels.
        heads (list[str]): additive and/or multiplicative; one model per head.
        eta_weights (list[float]): Pinball weights; chosen automatically when absent.
    """

    levels = FloatListField(allow_empty=False)
    heads = HeadListField(default=["additive"])
    eta_weights = FloatListField(required=False)

    def validate_levels(self, value):
        for tau in value:
            strictly_inside_unit_interval(tau)
        if any(b <= a for a, b in zip(value, value[1:])):
            raise serializers.ValidationError("Must be strictly increasing.")
        return value

    def validate_heads(self, value):
        if not value or len(set(value)) != len(value):
            raise serializers.ValidationError("Must name each head at most once.")
        return value

    def validate(self, attrs):
        weights = attrs.get("eta_weights")
        if weights is not None:
            if len(weights) != len(attrs["levels"]):
                raise serializers.ValidationError({"eta_weights": "Must have one weight per level."})
            if not all(w > 0 for w in weights):
                raise serializers.ValidationError({"eta_weights": "Must be positive."})
        return attrs


class PhiSelectionKeysMixin(serializers.Serializer):
    tau = serializers.FloatField(validators=[strictly_inside_unit_interval])
    g_scale = serializers.FloatField(default=1.0, min_value=0.0)
    mean_b = serializers.FloatField(default=0.0)
    refit = serializers.BooleanField(default=True)


class SelectPhiConfigSerializer(TrainingConfigSerializer, PhiSelectionKeysMixin):
    """
    Fields:
        tau (float): Level of the composite triplet.
        g_scale (float): c_tau of g(y) = c_tau y in the assembled spec.
        mean_b (float): Bregman index of the mean pre-fit (0 = gamma deviance).
        refit (bool): Refit the mean model on each side of the quantile.
    """


class FitCompositeConfigSerializer(TrainingConfigSerializer, PhiSelectionKeysMixin):
    """
    Fields:
        select_phi (bool): Choose the score by phi selection before training.
        form, phi_b, phi_c, phi_minus_b, ...: Score keys, required without select_phi.
        benchmark_gamma (bool): Also report the gamma reference model.
    """

    select_phi = serializers.BooleanField(default=False)
    benchmark_gamma = serializers.BooleanField(default=False)
    form = serializers.ChoiceField(choices=[f.value for f in ScoreForm], required=False)
    phi_b = serializers.FloatField(required=False)
    phi_c = serializers.FloatField(required=False)
    phi_minus_b = serializers.FloatField(required=False)
    phi_minus_c = serializers.FloatField(required=False)
    phi_plus_b = serializers.FloatField(required=False)
    phi_plus_c = serializers.FloatField(required=False)

    def validate(self, attrs):
        if attrs["select_phi"]:
            return attrs
        if "form" not in attrs:
            raise serializers.ValidationError({"form": "Required unless select_phi is set."})
        spec = ScoreSpecSerializer(
            data={
                key: attrs[key]
                for key in ("form", "tau", "g_scale", "phi_b", "phi_c", "phi_minus_b", "phi_minus_c", "phi_plus_b", "phi_plus_c")
                if key in attrs
            }
        )
        if not spec.is_valid():
            raise serializers.ValidationError(spec.errors)
        attrs["spec"] = spec.validated_data["spec"]
        return attrs


class EvaluateConfigSerializer(StrictConfigSerializer):
    """
    Fields:
        data (str): Claims CSV to evaluate on.
        schema (str): Schema sidecar; defaults to the schema stored in the model.
        model (str): Model file written by fit_composite or fit_quantiles.
        predictions (str): Alternatively, a CSV of predicted triplets (e_minus, v, e_plus).
        tau (float): Level of the predictions; taken from the model when a model is given.
        seed (int): Accepted for symmetry with the other commands; unused.
    """

    data = serializers.CharField()
    schema = serializers.CharField(required=False)
    model = serializers.CharField(required=False)
    predictions = serializers.CharField(required=False)
    tau = serializers.FloatField(required=False, validators=[strictly_inside_unit_interval])
    seed = serializers.IntegerField(default=0)

    def validate(self, attrs):
        if ("model" in attrs) == ("predictions" in attrs):
            raise serializers.ValidationError("Give exactly one of model and predictions.")
        if "predictions" in attrs and "tau" not in attrs:
            raise serializers.ValidationError({"tau": "Required with predictions."})
        return attrs


class LogLogFitSerializer(serializers.Serializer):
    intercept = serializers.FloatField()
    slope = serializers.FloatField()
    b = serializers.FloatField()
    c = serializers.FloatField()


class PhiSelectionSerializer(serializers.Serializer):
    """Representation of a PhiSelection: the three fits and the chosen spec."""

    all_claims = LogLogFitSerializer()
    large_claims = LogLogFitSerializer()
    small_claims = LogLogFitSerializer()
    chosen_form = serializers.SerializerMethodField()

    def get_chosen_form(self, instance):
        return instance.chosen_form.value


class StartSummarySerializer(serializers.Serializer):
    index = serializers.IntegerField()
    best_epoch = serializers.IntegerField()
    best_val_loss = serializers.FloatField()
    epochs = serializers.SerializerMethodField()
    failure = serializers.CharField(allow_null=True)

    def get_epochs(self, instance):
        return instance.trace[-1][0]


class FitReportSerializer(serializers.Serializer):
    """Summary of a FitReport: sizes, per-start results and test statistics."""

    train_size = serializers.IntegerField()
    val_size = serializers.IntegerField()
    test_loss = serializers.FloatField(allow_null=True)
    starts = StartSummarySerializer(many=True)
    calibration = CalibrationReportSerializer(allow_null=True)


class FittedModelSerializer(serializers.Serializer):
    """
    Model file representation: network configuration, objective, encoder
    state, shape header and one flat parameter vector per start.
    Floats are kept as Python floats so JSON round-trips them exactly.
    """

    def to_representation(self, instance):
        cfg = instance.config
        return {
            "network": cfg.to_dict(),
            "objective": instance.objective.describe(),
            "encoder": None if instance.encoder is None else instance.encoder.to_dict(),
            "shape_header": [list(shape) for shape in cfg.shape_header],
            "starts": [[float(w) for w in params.to_vector()] for params in instance.params],
        }

    def to_internal_value(self, data):
        try:
            cfg = NetworkConfig.from_dict(data["network"])
            header = [tuple(shape) for shape in data["shape_header"]]
            if header != cfg.shape_header:
                raise serializers.ValidationError({"shape_header": "Does not match the network configuration."})
            params = [NetworkParams.from_vector(vector, cfg) for vector in data["starts"]]
            objective = objective_from_dict(data["objective"])
            encoder = None if data.get("encoder") is None else FeatureEncoder.from_dict(data["encoder"])
        except KeyError as exc:
            raise serializers.ValidationError({str(exc.args[0]): "Missing from the model file."})
        except (TypeError, DomainError, ConfigurationError) as exc:
            raise serializers.ValidationError(str(exc))
        return {"model": FittedModel(cfg, objective, params, encoder)}
