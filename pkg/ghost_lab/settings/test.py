"""
Test settings for the ghost_lab project.
"""
from .base import *

# Tests run the ensemble in-process; worker pools are exercised explicitly
GHOST_LAB['WORKERS'] = 1
GHOST_LAB['BLOCK_SIZE'] = 16

# Keep pytest output readable; caplog still sees every record
LOGGING['handlers']['console']['formatter'] = 'simple'
for _logger_name in ('core', 'optics', 'ghost'):
    LOGGING['loggers'][_logger_name]['level'] = 'DEBUG'
