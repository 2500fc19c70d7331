"""
Django settings for the pnslearn pipeline.

The project has no web surface and no database: Django provides the
configuration layer, the app registry, the management-command CLI and the
test runner.

For the full list of settings and their values, see
https://docs.djangoproject.com/en/5.2/ref/settings/
"""

from pathlib import Path
from decouple import config

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent.parent

# Django insists on a key; nothing here is signed.
SECRET_KEY = config("SECRET_KEY", default="pnslearn-offline-pipeline")

DEBUG = config("DEBUG", default=False, cast=bool)

# Application definition

INSTALLED_APPS = [
    # Local apps
    "core",
    "scm",
    "bounds",
    "informer",
    "datagen",
    "learning",
    "evaluation",
]

DATABASES = {}

# Internationalization
# https://docs.djangoproject.com/en/5.2/topics/i18n/

LANGUAGE_CODE = "en-us"

TIME_ZONE = "UTC"

USE_I18N = False

USE_TZ = True


# Pipeline settings

# Default root for every artifact a command writes; overridable per command
# with --output.
PNSLEARN_OUTPUT_ROOT = config("PNSLEARN_OUTPUT_ROOT", default=str(BASE_DIR / "runs"))

# Worker cap for stages with order-independent merges. Never affects outputs.
PNSLEARN_WORKERS = config("PNSLEARN_WORKERS", default=1, cast=int)

# Upper limit on informer rows held in memory (2**n_observed must fit).
PNSLEARN_INFORMER_MAX_ROWS = config(
    "PNSLEARN_INFORMER_MAX_ROWS", default=1 << 20, cast=int
)

# Reference-scale and desk-scale presets used by `reproduce`.
PNSLEARN_PRESETS = {
    "paper": {"n_exp": 50_000_000, "n_obs": 50_000_000, "threshold": 1300},
    "desk": {
        "n_exp": 2_000_000,
        "n_obs": 2_000_000,
        "threshold": 400,
        # smaller MLPs for the ~700 records this scale yields
        "model_configs": {
            name: {"hidden_sizes": [16, 8], "epochs": 300}
            for name in ("mlp_relu", "mlp_leaky_relu", "mlp_mish")
        },
    },
}

PNSLEARN_REPORT_BINS = config("PNSLEARN_REPORT_BINS", default=10, cast=int)

# Logging
LOG_LEVEL = config("PNSLEARN_LOG_LEVEL", default="INFO")

LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "verbose": {
            "format": "{levelname} {asctime} {module} {message}",
            "style": "{",
        },
    },
    "handlers": {
        "console": {
            # StreamHandler writes to stderr; data streams stay on stdout.
            "class": "logging.StreamHandler",
            "formatter": "verbose",
        },
    },
    "root": {
        "handlers": ["console"],
        "level": LOG_LEVEL,
    },
    "loggers": {
        "django": {
            "handlers": ["console"],
            "level": "WARNING",
            "propagate": False,
        },
    },
}
