import logging
import sys

from src.core.config import settings

LOG_FORMAT = "%(asctime)s %(levelname)-7s %(name)s: %(message)s"


def configure_logging(level: str | None = None) -> None:
    """
    Configure the root logger once for the whole process.

    Args:
        level: Level name overriding ``settings.LOG_LEVEL``.
    """
    root = logging.getLogger()
    root.setLevel((level or settings.LOG_LEVEL).upper())

    # re-configuring replaces our handler instead of stacking another
    for handler in list(root.handlers):
        if getattr(handler, "_agd_handler", False):
            root.removeHandler(handler)

    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    handler._agd_handler = True  # type: ignore[attr-defined]
    root.addHandler(handler)
