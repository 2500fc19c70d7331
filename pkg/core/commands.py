"""
Shared base for the pipeline management commands.

Exit codes: 0 success, 1 usage error, 2 data or validation error,
3 resource error. Django reports CommandError.returncode as the process
exit status.
"""

import logging
import sys
from enum import IntEnum
from pathlib import Path

from django.conf import settings
from django.core.exceptions import ValidationError
from django.core.management.base import BaseCommand, CommandError

from monitoring.sentry_config import set_stage_context

from .exceptions import (
    CacheMismatchError,
    EstimationError,
    ResourceBudgetError,
    SpecMismatchError,
    UndefinedQuantityError,
)
from .seeding import check_seed

logger = logging.getLogger(__name__)


class ExitCode(IntEnum):
    OK = 0
    USAGE = 1
    DATA = 2
    RESOURCE = 3


DATA_ERRORS = (
    ValidationError,
    EstimationError,
    SpecMismatchError,
    UndefinedQuantityError,
    CacheMismatchError,
    ValueError,
    KeyError,
)


def error_message(exc: Exception) -> str:
    if isinstance(exc, ValidationError):
        return "; ".join(exc.messages)
    if isinstance(exc, FileNotFoundError):
        return f"No such file: {exc.filename or exc}"
    return str(exc)


def install_usage_exit(parser):
    """Make argument errors exit with status 1 instead of argparse's 2."""

    def usage_error(message):
        if parser.called_from_command_line:
            parser.print_usage(sys.stderr)
            parser.exit(ExitCode.USAGE, f"{parser.prog}: error: {message}\n")
        raise CommandError(f"Error: {message}", returncode=ExitCode.USAGE)

    parser.error = usage_error
    return parser


class PipelineCommand(BaseCommand):
    """Base class translating pipeline failures into exit codes."""

    stage = ""

    def create_parser(self, prog_name, subcommand, **kwargs):
        parser = super().create_parser(prog_name, subcommand, **kwargs)
        return install_usage_exit(parser)

    def add_output_argument(self, parser, help_text=None):
        parser.add_argument(
            "--output",
            help=help_text
            or "Output directory (default: PNSLEARN_OUTPUT_ROOT)",
        )

    def add_seed_argument(self, parser, default=0):
        parser.add_argument(
            "--seed",
            type=int,
            default=default,
            help=f"Master seed (default: {default})",
        )

    def add_workers_argument(self, parser):
        parser.add_argument(
            "--workers",
            type=int,
            help="Worker processes; never changes results (default: PNSLEARN_WORKERS)",
        )

    def add_force_argument(self, parser):
        parser.add_argument(
            "--force",
            action="store_true",
            help="Recompute even when the stage manifest is up to date",
        )

    def usage_error(self, message) -> CommandError:
        return CommandError(message, returncode=ExitCode.USAGE)

    def output_dir(self, options) -> Path:
        return Path(options.get("output") or settings.PNSLEARN_OUTPUT_ROOT)

    def workers(self, options) -> int:
        workers = options.get("workers")
        if workers is None:
            workers = settings.PNSLEARN_WORKERS
        if workers < 1:
            raise self.usage_error("--workers must be at least 1")
        return workers

    def seed(self, options) -> int:
        try:
            return check_seed(options.get("seed", 0))
        except ValidationError as exc:
            raise self.usage_error(error_message(exc)) from exc

    def execute(self, *args, **options):
        if self.stage:
            set_stage_context(
                self.stage, seed=options.get("seed"), output_dir=options.get("output")
            )
        try:
            return super().execute(*args, **options)
        except CommandError:
            raise
        except FileNotFoundError as exc:
            logger.error(f"{self.stage or 'command'} failed: {exc}")
            raise CommandError(error_message(exc), returncode=ExitCode.DATA) from exc
        except (ResourceBudgetError, MemoryError, OSError) as exc:
            logger.error(f"{self.stage or 'command'} ran out of resources: {exc}")
            raise CommandError(
                error_message(exc), returncode=ExitCode.RESOURCE
            ) from exc
        except DATA_ERRORS as exc:
            logger.error(f"{self.stage or 'command'} rejected its input: {exc}")
            raise CommandError(error_message(exc), returncode=ExitCode.DATA) from exc
