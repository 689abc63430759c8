"""
 **********************************************************************************
 * Project: RobustCal - robust calibration of radio interferometers               *
 * Package: RobustCal                                                             *
 * Class  : logger                                                                *
 *                                                                                *
 * Description:                                                                   *
 *      output logger class producing nicely formatted log messages, with the     *
 *      VERBOSE ... ALWAYS level ladder and a global, lockable minimum level.     *
 *                                                                                *
 * Authors:                                                                       *
 *      RobustCal group                                                           *
 *                                                                                *
 * Redistribution and use in source and binary forms, with or without             *
 * modification, are permitted according to the terms listed in the file          *
 * LICENSE.                                                                       *
 **********************************************************************************
"""

import logging
import sys

# numeric values are the ones of the logging module, so that third-party
# handlers attached to the 'robustcal' logger see sensible levels
VERBOSE = 5
DEBUG   = logging.DEBUG
INFO    = logging.INFO
WARNING = logging.WARNING
ERROR   = logging.ERROR
FATAL   = logging.CRITICAL
ALWAYS  = 60

LEVELS = {"VERBOSE": VERBOSE, "DEBUG": DEBUG, "INFO": INFO, "WARNING": WARNING, "ERROR": ERROR,
          "FATAL": FATAL, "ALWAYS": ALWAYS}
_namesByValue = {v: k for k, v in LEVELS.items()}

for _lvl in (VERBOSE, FATAL, ALWAYS):
    logging.addLevelName(_lvl, _namesByValue[_lvl])

_ROOT_NAME = "robustcal"
_root = logging.getLogger(_ROOT_NAME)
_root.propagate = False
_root.setLevel(INFO)
if not _root.handlers:
    _handler = logging.StreamHandler(sys.stdout)
    _handler.setFormatter(logging.Formatter("%(shortname)-16s <%(levelname)s> %(message)s"))
    _root.addHandler(_handler)

_levelLock = False

def getLevelName(level):
    """
    @param level Numeric level or level name
    """
    return level if isinstance(level, str) else _namesByValue.get(level, str(level))

def _checkLevel(level):
    """
    Numeric value of a level given by number or name
    """
    if isinstance(level, int):
        return level
    if isinstance(level, str):
        if level not in LEVELS:
            raise ValueError(f"unknown log level {level!r}, choose from {list(LEVELS)}")
        return LEVELS[level]
    raise TypeError(f"log level must be an int or a level name, got {level!r}")

def resetLevel():
    """
    Drop a level lock and go back to INFO; used between test runs and by scripts
    that run several configurations in one process
    """
    global _levelLock
    _levelLock = False
    _root.setLevel(INFO)

class Logger:

    def __init__(self, name):
        """
        Initialise a logger

        @param name The name of the logger to initialise
        """
        self.name = name
        self._log = logging.LoggerAdapter(logging.getLogger(f"{_ROOT_NAME}.{name}"), {"shortname": name})

    def setLevel(self, level, lock=False):
        """
        Set the (global) minimum level for all loggers

        @param level The level to set
        @param lock Boolean that determines whether this method may be called again
        """
        global _levelLock
        if _levelLock:
            self.warning("Cannot set log level again, current setting is %s" % getLevelName(_root.level))
            return

        _root.setLevel(_checkLevel(level))
        _levelLock = lock
        self.always("Log level set to %s " % getLevelName(level))
        if lock:
            self.always("This log level is the final setting")

    def isEnabledFor(self, level):
        """
        Check whether messages at a level would be written; guards expensive diagnostics

        @param level The level to check
        """
        return _root.isEnabledFor(_checkLevel(level))

    def verbose(self, msg):
        """
        Write out a message at the verbose level

        @param msg The message to write out
        """
        self._log.log(VERBOSE, msg)

    def debug(self, msg):
        self._log.log(DEBUG, msg)

    def info(self, msg):
        self._log.log(INFO, msg)

    def warning(self, msg):
        self._log.log(WARNING, msg)

    def error(self, msg):
        self._log.log(ERROR, msg)

    def fatal(self, msg):
        """
        Write out a message at the fatal level; the caller decides whether to bail out

        @param msg The message to write out
        """
        self._log.log(FATAL, msg)

    def always(self, msg):
        self._log.log(ALWAYS, msg)
