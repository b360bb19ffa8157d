import functools
import logging
from typing import Any, Callable

import typer

logger = logging.getLogger(__name__)


class AppException(Exception):
    def __init__(
        self,
        message: str,
        exit_code: int = 1,
        details: dict | None = None,
    ):
        super().__init__(message)
        self.message = message
        self.exit_code = exit_code
        self.details = details or {}


class ConfigError(AppException):
    def __init__(self, key: str, message: str):
        super().__init__(f"config key '{key}': {message}", details={"key": key})
        self.key = key


class ShapeError(AppException):
    pass


class NonFiniteError(AppException):
    pass


class InvalidMDPError(AppException):
    pass


class SegmentError(AppException):
    pass


class SamplingError(AppException):
    pass


class BudgetExceededError(AppException):
    pass


class SingularSystemError(AppException):
    pass


class RunAborted(AppException):
    def __init__(self, message: str, checkpoint: str | None = None):
        super().__init__(message, details={"checkpoint": checkpoint})
        self.checkpoint = checkpoint


def _handle(func: Callable[..., Any]) -> Callable[..., Any]:
    @functools.wraps(func)
    def wrapper(*args: Any, **kwargs: Any) -> Any:
        try:
            return func(*args, **kwargs)
        except AppException as exc:
            logger.debug("command failed", exc_info=True)
            typer.echo(f"error: {exc.message}", err=True)
            raise typer.Exit(code=exc.exit_code)

    return wrapper


def attach_exception_handlers(app: typer.Typer) -> None:
    """
    Wrap every registered command so an ``AppException`` becomes a message on
    stderr and a nonzero exit status instead of a traceback.
    """
    for command in app.registered_commands:
        if command.callback is not None:
            command.callback = _handle(command.callback)
