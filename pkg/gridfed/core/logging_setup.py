"""
Logging setup - console plus rotating file handler
"""

import logging
from logging.handlers import RotatingFileHandler
from pathlib import Path

from gridfed.core.settings import LoggingConfig

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


def configure_logging(config: LoggingConfig) -> logging.Logger:
    root = logging.getLogger()
    level = getattr(logging, config.level.upper(), logging.INFO)
    root.setLevel(level)
    for handler in list(root.handlers):
        root.removeHandler(handler)

    formatter = logging.Formatter(LOG_FORMAT)
    console = logging.StreamHandler()
    console.setFormatter(formatter)
    root.addHandler(console)

    if config.file:
        log_path = Path(config.file)
        log_path.parent.mkdir(parents=True, exist_ok=True)
        file_handler = RotatingFileHandler(
            log_path, maxBytes=config.max_size * 1024 * 1024,
            backupCount=config.backup_count, encoding="utf-8")
        file_handler.setFormatter(formatter)
        root.addHandler(file_handler)
    return root
