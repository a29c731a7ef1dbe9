"""
Access to the GHOST_LAB settings dict with fallbacks for unset keys.
"""
from pathlib import Path

from django.conf import settings

DEFAULTS = {
    'WORKERS': 1,
    'BLOCK_SIZE': 50,
    'ORACLE_MAX_SAMPLES': 10**7,
    'FRAUNHOFER_MAX_PAIRS': 10**8,
    'OUTPUT_ROOT': Path('runs'),
    'CONFIG_DIR': Path('configs'),
    'LOG_FILE': '',
}


def lab_setting(name: str):
    """Return GHOST_LAB[name], falling back to the built-in default"""
    return getattr(settings, 'GHOST_LAB', {}).get(name, DEFAULTS[name])
