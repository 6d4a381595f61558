"""
Django settings for the deepcomposite project.

The project has no web surface. Django provides the management command
framework, the logging configuration and the test runner; Django REST
Framework provides the serializers used to validate run configurations and to
render reports.

Process-level knobs are read from the environment (optionally from a `.env`
file next to manage.py).
"""

import os
from pathlib import Path

from dotenv import load_dotenv

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

load_dotenv(BASE_DIR / ".env")

# SECURITY WARNING: only used because Django refuses to start without one.
SECRET_KEY = os.environ.get(
    "DJANGO_SECRET_KEY",
    "django-insecure-deepcomposite-local-development-key",
)

DEBUG = os.environ.get("DEBUG", "False") == "True"

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    "scoring",
    "claims",
    "regression",
    "rest_framework",
    "django.contrib.contenttypes",
    "django.contrib.auth",
]

MIDDLEWARE = []

# Never opened: every test is a SimpleTestCase and the commands work on files.
DATABASES = {
    "default": {
        "ENGINE": "django.db.backends.sqlite3",
        "NAME": BASE_DIR / "db.sqlite3",
    }
}

REST_FRAMEWORK = {
    "COERCE_DECIMAL_TO_STRING": False,
}


# Internationalization

LANGUAGE_CODE = "en-us"

TIME_ZONE = "UTC"

USE_I18N = True

USE_TZ = True

DEFAULT_AUTO_FIELD = "django.db.models.BigAutoField"


# Logging

LOG_LEVEL = os.environ.get("LOG_LEVEL", "INFO")

LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "verbose": {
            "format": "{asctime} {levelname} {name} {message}",
            "style": "{",
        },
    },
    "handlers": {
        "console": {
            "class": "logging.StreamHandler",
            "formatter": "verbose",
        },
    },
    "loggers": {
        "scoring": {"handlers": ["console"], "level": LOG_LEVEL, "propagate": False},
        "claims": {"handlers": ["console"], "level": LOG_LEVEL, "propagate": False},
        "regression": {"handlers": ["console"], "level": LOG_LEVEL, "propagate": False},
    },
}


# deepcomposite

# Number of joblib workers for the multi-start loop. Results do not depend on it.
DEEPCOMPOSITE_N_JOBS = int(os.environ.get("DEEPCOMPOSITE_N_JOBS", "1"))

# Significant digits for floats written into report files.
DEEPCOMPOSITE_REPORT_PRECISION = int(os.environ.get("DEEPCOMPOSITE_REPORT_PRECISION", "12"))
