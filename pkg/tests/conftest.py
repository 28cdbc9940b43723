import logging
import sys

from os.path import dirname, abspath
sys.path.append(dirname(dirname(abspath(__file__))))

import pytest

from httpsid import config


@pytest.fixture
def result_dir(tmp_path, monkeypatch):
    """keep result files of a test inside its tmp_path"""
    d = tmp_path / "results"
    monkeypatch.setattr(config, "RESULTS_LOCAL_DIR", d)
    return d


class _Collect(logging.Handler):
    def __init__(self):
        super().__init__(logging.DEBUG)
        self.records: list[logging.LogRecord] = []

    def emit(self, record):
        self.records.append(record)


@pytest.fixture
def table_records():
    """records of the no_color table logger, which does not propagate"""
    handler = _Collect()
    logger = logging.getLogger("no_color")
    logger.addHandler(handler)
    yield handler.records
    logger.removeHandler(handler)
