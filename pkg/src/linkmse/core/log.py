import logging
from typing import Optional

from rich.logging import RichHandler

_handler: Optional[RichHandler] = None


def configure_logging(level: str = "INFO") -> None:
    """Attach a Rich handler to the `linkmse` logger tree (idempotent)."""
    global _handler
    root = logging.getLogger("linkmse")
    if _handler is None:
        _handler = RichHandler(show_path=False, markup=False)
        _handler.setFormatter(logging.Formatter("%(name)s: %(message)s"))
        root.addHandler(_handler)
        root.propagate = False
    root.setLevel(level)


def get_logger(name: str) -> logging.Logger:
    return logging.getLogger(name)
