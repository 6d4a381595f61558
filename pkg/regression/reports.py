"""
reports.py

Structured text reports and JSON model files.

A report is a sequence of sections. Key-value sections are written as
KEY=VALUE lines, table sections as CSV. Floats are written with
DEEPCOMPOSITE_REPORT_PRECISION significant digits and nothing
time-dependent is written, so equal runs give byte-identical files.
"""

import json
import logging
from pathlib import Path

import numpy as np
from django.conf import settings

from scoring.exceptions import DomainError

from .serializers import FittedModelSerializer

logger = logging.getLogger(__name__)


def report_precision():
    return getattr(settings, "DEEPCOMPOSITE_REPORT_PRECISION", 12)


def format_value(value, precision=None):
    precision = report_precision() if precision is None else precision
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.{precision}g}"
    if isinstance(value, (list, tuple, np.ndarray)):
        return ",".join(format_value(item, precision) for item in value)
    return str(value)


def flatten(data, prefix=""):
    """Flatten nested mappings into dotted keys; lists of mappings are numbered."""
    out = {}
    for key, value in data.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            out.update(flatten(value, f"{name}."))
        elif isinstance(value, (list, tuple)) and value and isinstance(value[0], dict):
            for i, item in enumerate(value):
                out.update(flatten(item, f"{name}.{i}."))
        else:
            out[name] = value
    return out


class Report:
    """
    Builder of a structured text report.

    Methods:
        section(name, data): Add KEY=VALUE lines (nested data is flattened).
        table(name, frame): Add a pandas DataFrame as CSV.
        render(): The report text.
        write(path): Write the report as UTF-8.
    """

    def __init__(self, title, precision=None):
        self.title = title
        self.precision = report_precision() if precision is None else precision
        self.blocks = []

    def section(self, name, data):
        lines = [f"{key}={format_value(value, self.precision)}" for key, value in flatten(dict(data)).items()]
        self.blocks.append((name, "\n".join(lines)))
        return self

    def table(self, name, frame):
        text = frame.to_csv(index=False, float_format=f"%.{self.precision}g", lineterminator="\n")
        self.blocks.append((name, text.rstrip("\n")))
        return self

    def text(self, name, body):
        self.blocks.append((name, body))
        return self

    def render(self):
        parts = [f"# {self.title}"]
        parts.extend(f"[{name}]\n{body}" if body else f"[{name}]" for name, body in self.blocks)
        return "\n\n".join(parts) + "\n"

    def write(self, path):
        Path(path).write_text(self.render(), encoding="utf-8")
        logger.info("wrote report %s", path)
        return path


def save_model(path, model):
    """Write a FittedModel as JSON; floats round-trip exactly."""
    data = FittedModelSerializer(model).data
    Path(path).write_text(json.dumps(data, indent=1) + "\n", encoding="utf-8")
    logger.info("wrote model %s (%d starts)", path, len(model.params))
    return path


def load_model(path):
    """
    Read a model file written by `save_model`.

    Raises:
        FileNotFoundError: missing file.
        DomainError: unreadable or inconsistent content.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"model file {path} does not exist")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DomainError(f"model file {path} is not valid JSON: {exc}")
    serializer = FittedModelSerializer(data=data)
    if not serializer.is_valid():
        raise DomainError(f"model file {path} is invalid: {serializer.errors}")
    return serializer.validated_data["model"]
