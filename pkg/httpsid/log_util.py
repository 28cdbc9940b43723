import logging
import sys
from logging import config


def init(log_level, use_color: bool | None = None):
    """Configure the ``httpsid`` logger tree.

    Diagnostics go to stderr so that sub-commands writing data to stdout stay
    pipeable; the ``no_color`` logger prints aligned report tables to stdout.
    """
    if use_color is None:
        use_color = sys.stderr.isatty()

    LOGGING = {
        'version': 1,
        'disable_existing_loggers': False,
        'formatters': {
            'default': {
                'format': '%(asctime)s | %(levelname)s |%(message)s (%(filename)s:%(lineno)s)',
            },
            'colorful_console': {
                'format': '%(asctime)s | %(levelname)s: %(message)s (%(filename)s:%(lineno)s) (%(process)s)',
                '()': ColorfulFormatter,
            },
            'table': {
                'format': '%(message)s',
            },
        },
        'handlers': {
            'console': {
                'class': 'logging.StreamHandler',
                'formatter': 'colorful_console' if use_color else 'default',
                'stream': 'ext://sys.stderr',
            },
            'table_console': {
                'class': 'logging.StreamHandler',
                'formatter': 'table',
                'stream': 'ext://sys.stdout',
            },
        },
        'loggers': {
            'httpsid': {
                'handlers': ['console'],
                'level': log_level,
                'propagate': False
            },
            'no_color': {
                'handlers': ['table_console'],
                'level': 'INFO',
                'propagate': False
            },
        },
    }

    config.dictConfig(LOGGING)


def set_level(log_level: str):
    logging.getLogger('httpsid').setLevel(log_level)


class colors:
    INFO = '\033[92m'
    DEBUG = '\033[94m'
    WARNING = '\033[93m'
    ERROR = '\033[95m'
    CRITICAL = '\033[91m'
    ENDC = '\033[0m'


COLORS = {
    'INFO': colors.INFO,
    'DEBUG': colors.DEBUG,
    'WARNING': colors.WARNING,
    'CRITICAL': colors.CRITICAL,
    'ERROR': colors.ERROR,
}


class ColorfulLogRecordProxy(logging.LogRecord):
    def __init__(self, record):
        self._record = record
        color = COLORS.get(record.levelname, '')
        end = colors.ENDC if color else ''
        self.msg = f"{color}{record.msg}{end}"
        self.filename = record.filename
        self.lineno = f'{record.lineno}'
        self.process = f'{record.process}'
        self.levelname = f"{color}{record.levelname}{end}"

    def __getattr__(self, attr):
        if attr not in self.__dict__:
            return getattr(self._record, attr)
        return getattr(self, attr)


class ColorfulFormatter(logging.Formatter):
    def format(self, record):
        return super().format(ColorfulLogRecordProxy(record))
