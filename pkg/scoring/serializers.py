"""
serializers.py

DRF serializers for the scoring app: the strict base class every run
configuration derives from, the score specification and the calibration
report.
"""

from rest_framework import serializers

from .domain import DEFAULT_PHI_SCALE, PhiIndex, ScoreForm, ScoreSpec
from .exceptions import DomainError


class FloatListField(serializers.ListField):
    """
    List of floats that also accepts a comma separated string, as written in
    KEY=VALUE configuration files ("0.1,0.5,0.9").
    """

    child = serializers.FloatField()

    def to_internal_value(self, data):
        if isinstance(data, str):
            data = [part.strip() for part in data.split(",") if part.strip()]
        return super().to_internal_value(data)


class IntegerListField(FloatListField):
    """Comma separated list of integers ("20,15,10")."""

    child = serializers.IntegerField(min_value=1)


class StrictConfigSerializer(serializers.Serializer):
    """
    Base serializer for KEY=VALUE run configurations.

    Keys are compared case-insensitively and keys without a matching field
    are rejected, so a typo never silently falls back to a default.
    """

    def to_internal_value(self, data):
        data = {str(key).lower(): value for key, value in data.items()}
        unknown = sorted(set(data) - set(self.fields))
        if unknown:
            raise serializers.ValidationError(
                {key: "Unknown configuration key." for key in unknown}
            )
        return super().to_internal_value(data)


class ScoreSpecSerializer(serializers.Serializer):
    """
    Validates the flat description of a composite score and builds a ScoreSpec.

    Fields:
        form (str): additive, revelation_plus or revelation_minus.
        tau (float): Probability level.
        phi_b, phi_c / phi_minus_b, phi_minus_c / phi_plus_b, phi_plus_c:
            Indices of the phi family members used by the form.
        g_scale (float): c_tau of g(y) = c_tau y.
    """

    form = serializers.ChoiceField(choices=[f.value for f in ScoreForm])
    tau = serializers.FloatField(min_value=0.0, max_value=1.0)
    phi_b = serializers.FloatField(required=False, allow_null=True, default=None)
    phi_c = serializers.FloatField(required=False, default=DEFAULT_PHI_SCALE)
    phi_minus_b = serializers.FloatField(required=False, allow_null=True, default=None)
    phi_minus_c = serializers.FloatField(required=False, default=DEFAULT_PHI_SCALE)
    phi_plus_b = serializers.FloatField(required=False, allow_null=True, default=None)
    phi_plus_c = serializers.FloatField(required=False, default=DEFAULT_PHI_SCALE)
    g_scale = serializers.FloatField(required=False, default=1.0, min_value=0.0)

    def validate(self, attrs):
        form = ScoreForm(attrs["form"])
        used = {
            ScoreForm.ADDITIVE: ("phi_minus", "phi_plus"),
            ScoreForm.REVELATION_PLUS: ("phi", "phi_plus"),
            ScoreForm.REVELATION_MINUS: ("phi", "phi_minus"),
        }[form]
        indices = {}
        for name in used:
            b = attrs.get(f"{name}_b")
            if b is None:
                raise serializers.ValidationError({f"{name}_b": f"Required for the {form.value} form."})
            indices[name] = (b, attrs.get(f"{name}_c", DEFAULT_PHI_SCALE))
        try:
            attrs["spec"] = ScoreSpec(
                form=form,
                tau=attrs["tau"],
                g_scale=attrs.get("g_scale", 1.0),
                **{name: PhiIndex(b, c) for name, (b, c) in indices.items()},
            )
        except DomainError as exc:
            raise serializers.ValidationError(str(exc))
        return attrs


class ScoreSpecReadSerializer(serializers.Serializer):
    """Read-only representation of a ScoreSpec for reports and model files."""

    def to_representation(self, instance):
        return instance.describe()


class CalibrationReportSerializer(serializers.Serializer):
    """Representation of a CalibrationReport (the evaluation block of reports)."""

    tau = serializers.FloatField()
    n = serializers.IntegerField()
    coverage = serializers.FloatField()
    v_minus = serializers.FloatField()
    v_minus_se = serializers.FloatField()
    v_plus = serializers.FloatField()
    v_plus_se = serializers.FloatField()
    mean_prediction = serializers.FloatField()
    mean_observation = serializers.FloatField()
