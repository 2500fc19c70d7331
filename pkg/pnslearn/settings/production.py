from .base import *  # noqa: F401,F403
from decouple import config
from monitoring.sentry_config import configure_sentry

DEBUG = False

# Batch hosts run several stages side by side
PNSLEARN_WORKERS = config("PNSLEARN_WORKERS", default=4, cast=int)

# Sentry configuration
configure_sentry()
