import logging
import sys

_configured = False


def get_logger(name: str) -> logging.Logger:
    """Логгер пакета: один обработчик stderr, настраивается один раз"""
    global _configured
    root = logging.getLogger('src')
    if not _configured:
        handler = logging.StreamHandler(sys.stderr)
        handler.setFormatter(logging.Formatter('%(asctime)s %(levelname)s %(name)s: %(message)s'))
        root.addHandler(handler)
        root.setLevel(logging.INFO)
        root.propagate = False
        _configured = True
    return logging.getLogger(name)


def set_verbosity(level: int):
    logging.getLogger('src').setLevel(level)
