#"""
# **********************************************************************************
# * Project: RobustCal - robust calibration of radio interferometers               *
# * Package: RobustCal                                                             *
# * Module : cmdLineUtils                                                          *
# *                                                                                *
# * Description:                                                                   *
# *        Functions to interpret command line arguments                           *
# *                                                                                *
# * Authors:                                                                       *
# *      RobustCal group                                                           *
# *                                                                                *
# * Redistribution and use in source and binary forms, with or without             *
# * modification, are permitted according to the terms listed in the file          *
# * LICENSE.                                                                       *
# **********************************************************************************
#

"""
@file   cmdLineUtils.py
@brief  Functions to interpret command line arguments

Compound arguments shared by RobustCal.py and the configuration reader:
SNR grids, frequency lists, estimator lists and tracked parameters.
"""

import numpy as np

from bench import TrackedParameter
from errors import ParameterError


def cmdStringToList(inputString):
    """
    Split a comma-separated argument, dropping blanks

    @param inputString A string of the format 'a, b,c'
    """
    return [s.strip() for s in inputString.split(",") if s.strip()]


def parseRange(inputString):
    """
    Numbers from 'start:stop:step' (stop included when on the grid) or a
    comma-separated list

    @param inputString e.g. '-10:30:5' or '0,10,20'
    """
    try:
        if ":" in inputString:
            parts = [float(s) for s in inputString.split(":")]
            if len(parts) != 3:
                raise ParameterError(f"range '{inputString}' must read start:stop:step")
            start, stop, step = parts
            if step <= 0 or stop < start:
                raise ParameterError(f"range '{inputString}' needs step > 0 and stop >= start")
            n = int(np.floor((stop - start) / step + 1e-9)) + 1
            return [start + k * step for k in range(n)]
        return [float(s) for s in cmdStringToList(inputString)]
    except ValueError:
        raise ParameterError(f"cannot decode numbers in '{inputString}'") from None


def parseSnrGrid(inputString):
    """
    SNR grid in dB; must be strictly increasing

    @param inputString e.g. '-10:30:5' or '0,10,20'
    """
    grid = parseRange(inputString)
    if not grid or np.any(np.diff(grid) <= 0):
        raise ParameterError(f"SNR grid '{inputString}' must be nonempty and strictly increasing")
    return grid


def parseFrequencies(inputString):
    """
    Channel frequencies in Hz, e.g. '130e6,140e6' or '130e6:160e6:10e6'
    """
    freqs = parseRange(inputString)
    if not freqs or any(f <= 0 for f in freqs):
        raise ParameterError(f"frequencies '{inputString}' must be positive")
    return freqs


def parseEstimators(inputString, known):
    """
    @param inputString e.g. 'imape-cauchy,gaussian-ls'
    @param known Accepted estimator ids
    """
    names = cmdStringToList(inputString)
    unknown = [n for n in names if n not in known]
    if unknown or not names:
        raise ParameterError(f"unknown estimators {unknown} in '{inputString}', choose from {list(known)}")
    return names


def parseTracked(inputString):
    """
    Tracked parameters, 1-based, e.g. 'gain_imag:3:1,phase:1:2'
    """
    return [TrackedParameter.parse(s) for s in cmdStringToList(inputString)]


def parseBool(value):
    s = str(value).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ParameterError(f"cannot interpret '{value}' as a boolean")
