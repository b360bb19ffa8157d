from typing import Optional

import typer

from src.common.exceptions import attach_exception_handlers
from src.core.logging import configure_logging
from src.routes.commands import cli as app


@app.callback()
def main(
    log_level: Optional[str] = typer.Option(None, "--log-level", help="Overrides AGD_LOG_LEVEL."),
):
    configure_logging(log_level)


# Attach exception handlers
attach_exception_handlers(app)
