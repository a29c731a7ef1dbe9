"""
Base settings for the ghost_lab project.
"""
import os
from pathlib import Path
from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent.parent

# Only used by Django internals; nothing in this project is signed.
SECRET_KEY = os.getenv('SECRET_KEY', 'ghost-lab-insecure-4k2#v0=q3m9!x1d7t8@u5w6e')

DEBUG = os.getenv('DEBUG', 'False') == 'True'

ALLOWED_HOSTS = []

# Application definition
LOCAL_APPS = [
    'core',
    'optics',
    'ghost',
]

INSTALLED_APPS = LOCAL_APPS

# No models; the simulator keeps its state in run directories.
DATABASES = {}

# Internationalization
LANGUAGE_CODE = 'en-us'
TIME_ZONE = 'UTC'
USE_I18N = False
USE_TZ = True

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'

# Simulator settings
GHOST_LAB = {
    'WORKERS': int(os.getenv('GHOST_LAB_WORKERS', os.cpu_count() or 1)),
    'BLOCK_SIZE': int(os.getenv('GHOST_LAB_BLOCK_SIZE', 50)),
    'ORACLE_MAX_SAMPLES': 10**7,
    'FRAUNHOFER_MAX_PAIRS': 10**8,
    'OUTPUT_ROOT': Path(os.getenv('GHOST_LAB_OUTPUT_ROOT', BASE_DIR / 'runs')),
    'CONFIG_DIR': BASE_DIR / 'configs',
    'LOG_FILE': os.getenv('GHOST_LAB_LOG_FILE', ''),
}

# Logging
LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'verbose': {
            'format': '{levelname} {asctime} {module} {process:d} {thread:d} {message}',
            'style': '{',
        },
        'simple': {
            'format': '{levelname} {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'verbose',
        },
    },
    'loggers': {
        'django': {
            'handlers': ['console'],
            'level': 'WARNING',
            'propagate': True,
        },
        'core': {
            'handlers': ['console'],
            'level': 'INFO',
            'propagate': True,
        },
        'optics': {
            'handlers': ['console'],
            'level': 'INFO',
            'propagate': True,
        },
        'ghost': {
            'handlers': ['console'],
            'level': 'INFO',
            'propagate': True,
        },
    },
}

if GHOST_LAB['LOG_FILE']:
    LOGGING['handlers']['file'] = {
        'class': 'logging.FileHandler',
        'filename': GHOST_LAB['LOG_FILE'],
        'formatter': 'verbose',
    }
    for logger_name in ('core', 'optics', 'ghost'):
        LOGGING['loggers'][logger_name]['handlers'].append('file')
