import functools
import sys
from typing import Callable, Optional

from pydantic import ValidationError

from src.models.run_config import config_error_from_validation
from src.utils.exceptions import FoliageEchoError
from src.utils.logger import setup_logger

logger = setup_logger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_INPUT_ERROR = 2


def _report(message: str) -> None:
    print(f"error: {message}", file=sys.stderr)


def handle_cli_errors(command: Callable[..., Optional[int]]) -> Callable[..., int]:
    """
    Map exceptions raised by a CLI command to an exit status.

    Input and configuration problems exit with 2, I/O and anything else with
    1. The message names the offending field or path where known.
    """

    @functools.wraps(command)
    def wrapper(*args, **kwargs) -> int:
        try:
            status = command(*args, **kwargs)
            return EXIT_OK if status is None else status
        except ValidationError as e:
            error = config_error_from_validation(e)
            logger.error("validation_failed", command=command.__name__, field=error.field)
            _report(str(error))
            return EXIT_INPUT_ERROR
        except FoliageEchoError as e:
            logger.error("command_rejected", command=command.__name__, error=str(e))
            _report(str(e))
            return EXIT_INPUT_ERROR
        except ValueError as e:
            logger.error("invalid_argument", command=command.__name__, error=str(e))
            _report(str(e))
            return EXIT_INPUT_ERROR
        except OSError as e:
            logger.error("io_failed", command=command.__name__, path=getattr(e, "filename", None))
            _report(f"{e.filename}: {e.strerror}" if e.filename else str(e))
            return EXIT_FAILURE
        except Exception as e:
            logger.exception("command_failed", command=command.__name__)
            _report(str(e))
            return EXIT_FAILURE

    return wrapper
