from __future__ import annotations

import logging
import os

from termcolor import colored

_LEVEL_COLORS = {
    logging.DEBUG: 'blue',
    logging.INFO: 'green',
    logging.WARNING: 'yellow',
    logging.ERROR: 'red',
    logging.CRITICAL: 'red',
}


class ColoredLevelFormatter(logging.Formatter):
    def format(self, record: logging.LogRecord) -> str:
        color = _LEVEL_COLORS.get(record.levelno)
        levelname = record.levelname
        if color is not None:
            record.levelname = colored(levelname, color, attrs=['bold'] if record.levelno >= logging.ERROR else None)
        try:
            return super().format(record)
        finally:
            record.levelname = levelname


def debug_from_env() -> bool:
    return os.environ.get('DEBUG') is not None and os.environ.get('DEBUG').lower() == 'true'


def setup_logging(debug: bool = False) -> None:
    debug = debug or debug_from_env()
    handler = logging.StreamHandler()
    handler.setFormatter(ColoredLevelFormatter('%(asctime)s %(levelname)s %(name)s - %(message)s'))

    root = logging.getLogger('fbrag')
    root.handlers.clear()
    root.addHandler(handler)
    root.setLevel(logging.DEBUG if debug else logging.INFO)
    root.propagate = False

    logging.getLogger('httpx').setLevel(logging.WARNING)
    logging.getLogger('httpcore').setLevel(logging.WARNING)
    logging.getLogger('openai').setLevel(logging.WARNING)
