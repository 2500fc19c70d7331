"""
Sentry monitoring configuration for pnslearn pipeline runs.
"""

import logging

import sentry_sdk
from decouple import config
from sentry_sdk.integrations.logging import LoggingIntegration

logger = logging.getLogger(__name__)


def configure_sentry() -> bool:
    """Configure Sentry for error tracking of batch runs. Returns True if enabled."""

    sentry_dsn = config("SENTRY_DSN", default="")
    environment = config("SENTRY_ENVIRONMENT", default="production")
    release = config("SENTRY_RELEASE", default="unknown")

    if not sentry_dsn:
        logger.warning("SENTRY_DSN not configured. Sentry monitoring disabled.")
        return False

    # Configure logging integration
    sentry_logging = LoggingIntegration(
        level=logging.INFO,  # Capture info and above as breadcrumbs
        event_level=logging.ERROR,  # Send errors as events
    )

    sentry_sdk.init(
        dsn=sentry_dsn,
        environment=environment,
        release=release,
        integrations=[sentry_logging],
        traces_sample_rate=0.0,
        before_send=filter_errors,
        attach_stacktrace=True,
        send_default_pii=False,
        max_breadcrumbs=50,
    )

    sentry_sdk.set_tag("component", "pnslearn")
    sentry_sdk.set_tag("server", config("SERVER_NAME", default="unknown"))
    return True


def filter_errors(event, hint):
    """Drop usage errors; they are operator mistakes, not pipeline failures."""

    if "exc_info" in hint:
        exc_type, exc_value, tb = hint["exc_info"]

        if exc_type.__name__ == "CommandError" and getattr(
            exc_value, "returncode", None
        ) == 1:
            return None

    return event


def set_stage_context(stage: str, seed=None, output_dir=None):
    """Attach the running pipeline stage to subsequent Sentry events."""
    sentry_sdk.set_tag("stage", stage)
    sentry_sdk.set_context(
        "pipeline",
        {"stage": stage, "seed": seed, "output_dir": str(output_dir or "")},
    )

