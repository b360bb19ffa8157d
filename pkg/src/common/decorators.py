from functools import wraps
from typing import Callable, Any, TypeVar
import logging

from src.common.exceptions import NonFiniteError

logger = logging.getLogger(__name__)

T = TypeVar("T")


def skip_non_finite(name: str) -> Callable[[Callable[..., T]], Callable[..., T | None]]:
    """
    Turn a ``NonFiniteError`` raised inside an update into a logged skip.

    The wrapped update returns ``None`` when skipped, so callers can count
    skipped steps without a try/except at every call site.
    """

    def decorator(func: Callable[..., T]) -> Callable[..., T | None]:
        @wraps(func)
        def wrapper(*args: Any, **kwargs: Any) -> T | None:
            try:
                return func(*args, **kwargs)
            except NonFiniteError as exc:
                logger.warning("%s skipped: %s", name, exc.message)
                return None

        return wrapper

    return decorator
