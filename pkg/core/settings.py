"""
Django settings for the cylinder-torsion project.

The project has no web surface: Django provides configuration, the
management-command CLI and the run ledger. Numerical defaults live in the
``CYLINDERS`` dict at the bottom; library functions read it at call time.
"""

import os
from pathlib import Path

from dotenv import load_dotenv

load_dotenv(override=True)

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent


# No request handling happens here, but Django still refuses to start without a key.
SECRET_KEY = os.getenv("DJANGO_SECRET_KEY", "cylinder-torsion-local-only")

DEBUG = os.getenv("DJANGO_DEBUG", "0") == "1"

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    "core",
    "cylinders",
]


# Database
# https://docs.djangoproject.com/en/5.2/ref/settings/#databases

DATABASES = {
    "default": {
        "ENGINE": "django.db.backends.sqlite3",
        "NAME": os.getenv("CYLINDERS_DB_PATH", str(BASE_DIR / "db.sqlite3")),
    }
}


# Internationalization
# https://docs.djangoproject.com/en/5.2/topics/i18n/

TIME_ZONE = "UTC"

USE_TZ = True


# Default primary key field type
# https://docs.djangoproject.com/en/5.2/ref/settings/#default-auto-field

DEFAULT_AUTO_FIELD = "django.db.models.BigAutoField"


LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "plain": {"format": "%(asctime)s %(levelname)s %(name)s: %(message)s"},
    },
    "handlers": {
        "console": {"class": "logging.StreamHandler", "formatter": "plain"},
    },
    "loggers": {
        "cylinders": {
            "handlers": ["console"],
            "level": os.getenv("CYLINDERS_LOG_LEVEL", "WARNING"),
        },
    },
}


CYLINDERS = {
    # Container and grid
    "A": 1.0,
    "L": 1.5,
    "RESOLUTION": 128,
    "MODE": "full",
    # Torsion solver
    "SOLVER_TOL": 1e-10,
    "SOLVER_ITERS_PER_SQRT_N": 50,
    "SOLVER_MAX_ITERS": 200_000,
    "LAMBDA1_NODES": 1024,
    # Level-set optimizer
    "CFL": 0.5,
    "MAX_ITERS": 400,
    "VOLUME_TOL": 1e-3,
    "SYMMETRIZE_EVERY": 25,
    "REINIT_EVERY": 5,
    "CONVERGENCE_WINDOW": 20,
    "CONVERGENCE_TOL": 1e-4,
    "BAND": (1.0, 3.0),
    "PERTURBATION": 2.0,
    "NOISE": 0.0,
    "MIN_CELLS": 8,
    "LOG_EVERY": 25,
    "OPTIMIZER_SOLVER_TOL": 1e-8,
    "EXTENSION_CELLS": 4,
    # Volumes used when no --c / --c-values is given
    "C": 0.5,
    "SWEEP_C_VALUES": (0.3, 0.5, 0.8, 1.2),
    # Discrete search
    "ENUMERATION_CAP": 5_000_000,
    "ENUMERATE": {
        "RESOLUTION": 4,
        "L": 1.5,
        "MODE": "half",
        "K": 5,
        "STARTS": 20,
    },
    # Runs
    "SEED": 0,
    "SWEEP_WORKERS": 4,
    "VTK_EVERY": 0,
    "PERSIST_RUNS": os.getenv("CYLINDERS_PERSIST_RUNS", "0") == "1",
}
