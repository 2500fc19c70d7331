from .base import *  # noqa: F401,F403
from decouple import config

DEBUG = True

# Keep local runs out of the repository root unless asked otherwise
PNSLEARN_OUTPUT_ROOT = config(
    "PNSLEARN_OUTPUT_ROOT", default=str(BASE_DIR / "runs" / "dev")  # noqa: F405
)
