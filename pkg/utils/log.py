import logging
import os
import sys
from typing import Optional

from dotenv import load_dotenv

LOG_ENV = "SONIC_KIT_LOG"
LOG_FORMAT = "%(asctime)s %(name)s %(levelname)s: %(message)s"

_handler: Optional[logging.StreamHandler] = None


def configure_logging(level: Optional[str] = None) -> int:
    """Configure the root logger from `level` or SONIC_KIT_LOG (default INFO).

    Repeated calls reuse one stderr handler, pointed at the current
    sys.stderr. An unknown level name falls back to INFO with a warning.
    """
    global _handler
    load_dotenv()
    name = (level or os.getenv(LOG_ENV) or "INFO").strip().upper()
    resolved = logging.getLevelName(name)
    unknown = not isinstance(resolved, int)
    if unknown:
        resolved = logging.INFO
    root = logging.getLogger()
    if _handler is None:
        _handler = logging.StreamHandler(sys.stderr)
        _handler.setFormatter(logging.Formatter(LOG_FORMAT))
        root.addHandler(_handler)
    elif _handler.stream is not sys.stderr:
        _handler.setStream(sys.stderr)
    root.setLevel(resolved)
    if unknown:
        logging.getLogger(__name__).warning("Unknown log level %r in %s, using INFO", name, LOG_ENV)
    return resolved
