"""
base.py

Base class of the workflow commands (simulate, fit_quantiles, fit_composite,
select_phi, evaluate).

Each command reads a flat KEY=VALUE run configuration given by --config,
validates it with its serializer before doing any work, and writes its
results next to --out. User errors end with exit code 1 and internal errors
with exit code 2, each with a single-line message.
"""

import logging
from pathlib import Path

from django.core.management.base import BaseCommand, CommandError
from dotenv import dotenv_values
from rest_framework import serializers

from scoring.exceptions import ConfigurationError, DomainError

logger = logging.getLogger(__name__)

USER_ERRORS = (serializers.ValidationError, DomainError, ConfigurationError, OSError)


def flatten_errors(detail, prefix=""):
    """Flatten a DRF error structure into "key: message; key: message"."""
    if isinstance(detail, dict):
        parts = [
            flatten_errors(value, prefix if key == "non_field_errors" else f"{prefix}{key}: ")
            for key, value in detail.items()
        ]
        return "; ".join(part for part in parts if part)
    if isinstance(detail, (list, tuple)):
        return "; ".join(flatten_errors(item, prefix) for item in detail)
    return f"{prefix}{detail}"


def read_config(path):
    """
    Read a KEY=VALUE configuration file with lower-cased keys.

    Raises:
        OSError: if the file does not exist.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"configuration file {path} does not exist")
    return {str(key).lower(): value for key, value in dotenv_values(path, interpolate=False).items()}


class RunCommand(BaseCommand):
    """
    Shared argument handling, configuration validation and error mapping.

    Attributes:
        config_serializer (type[serializers.Serializer]): Validates the run configuration.

    Methods:
        run(config, out): Subclasses do the work; `config` is the validated data
            and `out` the output Path.
    """

    config_serializer = None

    def add_arguments(self, parser):
        parser.add_argument("--config", required=True, help="KEY=VALUE run configuration file.")
        parser.add_argument("--seed", type=int, default=None, help="Overrides SEED of the configuration.")
        parser.add_argument("--out", required=True, help="Output path; related files are written next to it.")

    def load_config(self, path, seed=None):
        data = read_config(path)
        if seed is not None:
            data["seed"] = seed
        serializer = self.config_serializer(data=data)
        if not serializer.is_valid():
            raise serializers.ValidationError(serializer.errors)
        return serializer.validated_data

    def handle(self, *args, **options):
        try:
            config = self.load_config(options["config"], options.get("seed"))
            out = Path(options["out"])
            if out.parent and not out.parent.exists():
                out.parent.mkdir(parents=True)
            self.run(config, out)
        except CommandError:
            raise
        except serializers.ValidationError as exc:
            raise CommandError(f"invalid configuration: {flatten_errors(exc.detail)}", returncode=1)
        except USER_ERRORS as exc:
            raise CommandError(str(exc), returncode=1)
        except Exception as exc:
            logger.exception("%s failed", self.__class__.__module__)
            raise CommandError(f"internal error: {exc}", returncode=2)

    def run(self, config, out):
        raise NotImplementedError

    def done(self, *paths):
        for path in paths:
            self.stdout.write(self.style.SUCCESS(f"wrote {path}"))
