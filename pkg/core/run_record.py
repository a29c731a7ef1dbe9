"""
Run record logging

Collects the warnings emitted while a command runs so they can be echoed
into the run metadata record.
"""
import logging
from contextlib import contextmanager
from typing import Iterator, List

LOGGER_NAMESPACES = ('core', 'optics', 'ghost')


class RunRecordHandler(logging.Handler):
    """Keeps formatted WARNING+ records in memory"""

    def __init__(self, level=logging.WARNING):
        super().__init__(level=level)
        self.records: List[dict] = []
        self.setFormatter(logging.Formatter('{message}', style='{'))

    def emit(self, record):
        self.records.append({
            'level': record.levelname,
            'logger': record.name,
            'message': self.format(record),
        })


@contextmanager
def capture_warnings() -> Iterator[RunRecordHandler]:
    """Attach a RunRecordHandler to the simulator loggers for the block"""
    handler = RunRecordHandler()
    loggers = [logging.getLogger(name) for name in LOGGER_NAMESPACES]
    for logger in loggers:
        logger.addHandler(handler)
    try:
        yield handler
    finally:
        for logger in loggers:
            logger.removeHandler(handler)
