"""
Shared plumbing for the road anomaly management commands.

Exit codes: 2 configuration or parse error, 3 I/O error, 4 misaligned
inputs, 5 label or class problems, 6 degenerate model fit.
"""

import json
import logging
from pathlib import Path

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError

from core.exceptions import (
    ConfigError,
    DegenerateFit,
    DomainError,
    EmptyTrack,
    FormatError,
    LengthMismatch,
    MissingSequence,
    SeriesTooShort,
    SingleClassError,
    TooFewEvents,
    UndefinedResponse,
)

logger = logging.getLogger("road_anomaly.commands")

# first match wins; LengthMismatch is a ValueError and must precede the config errors
EXIT_CODES = (
    (LengthMismatch, 4),
    ((SingleClassError, TooFewEvents, MissingSequence, UndefinedResponse), 5),
    (DegenerateFit, 6),
    ((ConfigError, FormatError, DomainError, SeriesTooShort, EmptyTrack, json.JSONDecodeError), 2),
    (OSError, 3),
)


def exit_code(error: BaseException) -> int | None:
    for types, code in EXIT_CODES:
        if isinstance(error, types):
            return code
    return None


def describe(error: BaseException) -> str:
    if isinstance(error, OSError) and error.filename:
        return f"{error.strerror or error}: {error.filename}"
    if isinstance(error, json.JSONDecodeError):
        return f"invalid JSON: {error}"
    return str(error)


def load_json(path) -> dict:
    """JSON document from a file; an absent path gives an empty document"""
    if not path:
        return {}
    with Path(path).open(encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a JSON object")
    return data


class RoadAnomalyCommand(BaseCommand):
    """Runs `run()` and turns library errors into CommandError exit codes"""

    def add_workers_argument(self, parser):
        parser.add_argument(
            "--workers",
            type=int,
            default=settings.ROAD_ANOMALY["WORKERS"],
            help="Process sequences in this many worker processes",
        )

    def handle(self, *args, **options):
        try:
            self.run(**options)
        except CommandError:
            raise
        except Exception as e:
            code = exit_code(e)
            if code is None:
                raise
            logger.debug("command failed", exc_info=True)
            raise CommandError(describe(e), returncode=code) from e

    def run(self, **options):
        raise NotImplementedError

    def emit(self, *fields):
        """One tab-separated data line on stdout"""
        self.stdout.write("\t".join(str(f) for f in fields))
