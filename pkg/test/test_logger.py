import pytest

import logger
from logger import Logger


def test_level_lock():
    log = Logger('Test')
    log.setLevel("WARNING", True)
    assert not log.isEnabledFor("INFO")
    log.setLevel("DEBUG")
    assert not log.isEnabledFor("INFO")
    logger.resetLevel()
    assert log.isEnabledFor("INFO")


def test_level_names():
    assert logger.getLevelName(logger.VERBOSE) == "VERBOSE"
    assert logger.getLevelName("DEBUG") == "DEBUG"
    with pytest.raises(ValueError):
        Logger('Test').setLevel("LOUD")
    with pytest.raises(TypeError):
        Logger('Test').setLevel(1.5)
