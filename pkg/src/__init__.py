"""Toolkit initialization"""

import logging.config
from os import getenv
from pathlib import Path
from typing import Any

# paths
WORK_DIR = Path(__file__).parent
LOCALES_DIR = WORK_DIR / 'i18n' / 'locales'

# toolkit config
IS_DEBUG: bool = getenv('DEBUG', '').lower() in ('true', '1')
THREADS_ENV_VAR = 'REJECTKIT_THREADS'
LOG_FILE = getenv('REJECTKIT_LOG_FILE')
LANGUAGE = getenv('REJECTKIT_LANGUAGE', 'en_US')

# Logging
log_level = 'DEBUG' if IS_DEBUG else 'INFO'
logging_config: dict[str, Any] = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'detailed': {
            'format': '%(asctime)s [%(levelname)s] %(name)s [%(module)s.%(funcName)s:%(lineno)d]: %(message)s',
            'datefmt': '%Y-%m-%d %H:%M:%S',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'level': log_level,
            'formatter': 'detailed',
            'stream': 'ext://sys.stderr',
        },
    },
    'loggers': {
        'src': {
            'handlers': ['console'],
            'level': log_level,
            'propagate': True,
        },
    },
}
if LOG_FILE:
    logging_config['handlers']['file'] = {
        'class': 'logging.handlers.TimedRotatingFileHandler',
        'level': log_level,
        'formatter': 'detailed',
        'filename': LOG_FILE,
        'when': 'midnight',
        'interval': 1,
        'backupCount': 7,
    }
    logging_config['loggers']['src']['handlers'].append('file')
logging.config.dictConfig(logging_config)
