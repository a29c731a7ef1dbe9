"""
Local development settings for the ghost_lab project.
"""
from .base import *

DEBUG = True

# Debug-level records from the simulator packages during development
for _logger_name in ('core', 'optics', 'ghost'):
    LOGGING['loggers'][_logger_name]['level'] = 'DEBUG'
