"""
 **********************************************************************************
 * Project: RobustCal - robust calibration of radio interferometers               *
 * Package: RobustCal                                                             *
 * Module : errors                                                                *
 *                                                                                *
 * Description:                                                                   *
 *      Exception types raised by the calibration modules                         *
 *                                                                                *
 * Authors:                                                                       *
 *      RobustCal group                                                           *
 **********************************************************************************
"""


class RobustCalError(Exception):
    """
    Base class of all errors raised on purpose by RobustCal
    """


class ParameterError(RobustCalError, ValueError):
    """
    Invalid count, index, option or configuration value
    """


class DomainError(RobustCalError, ValueError):
    """
    Argument outside the domain of a density or special function (e.g. tau <= 0)
    """


class NumericalError(RobustCalError, ArithmeticError):
    """
    Singular or indefinite matrix met where a factorization was required
    """

    def __init__(self, msg, conditionNumber=None):
        if conditionNumber is not None:
            msg = f"{msg} (condition number {conditionNumber:.3e})"
        super().__init__(msg)
        self.conditionNumber = conditionNumber


class SolverError(RobustCalError, RuntimeError):
    """
    Abort of the parameter solver, e.g. on a non-finite objective
    """
