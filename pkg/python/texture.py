"""
 **********************************************************************************
 * Project: RobustCal - robust calibration of radio interferometers               *
 * Package: RobustCal                                                             *
 * Module : texture                                                               *
 *                                                                                *
 * Description:                                                                   *
 *      Closed-form MAP texture updates and maximum-likelihood hyperparameter     *
 *      updates of the five texture prior families, with the digamma kernel      *
 *      and the shape-parameter root solver they rely on.                         *
 *                                                                                *
 * Authors:                                                                       *
 *      RobustCal group                                                           *
 *                                                                                *
 * Redistribution and use in source and binary forms, with or without             *
 * modification, are permitted according to the terms listed in the file          *
 * LICENSE.                                                                       *
 **********************************************************************************
"""

from dataclasses import dataclass

import numpy as np
from scipy import optimize, special

from errors import DomainError, ParameterError
from logger import Logger
from noise import N_POL, TextureFamily, TexturePriorModel

log = Logger('Texture')

TAU_FLOOR = 1e-8

SHAPE_MIN = 1e-3
SHAPE_MAX = 1e3
SHAPE_XTOL = 1e-12
NEWTON_STEPS = 5

LAMBDA_MAX = 1e8

# warm start of the K and Student shape parameter
SHAPE_START = 2.0

# coefficients B_2k / (2k) of the asymptotic digamma series
_DIGAMMA_SERIES = (1 / 12, -1 / 120, 1 / 252, -1 / 240, 1 / 132, -691 / 32760, 1 / 12)


def digamma(x):
    """
    Psi(x) = d ln Gamma(x) / dx for x > 0.

    Upward recurrence Psi(x) = Psi(x + 1) - 1/x until x >= 6, then the
    asymptotic series ln x - 1/(2x) - sum_k B_2k / (2k x^2k).

    @param x Positive scalar or array
    """
    x = np.array(x, dtype=float)
    if np.any(~np.isfinite(x)) or np.any(x <= 0):
        raise DomainError("digamma is only defined here for finite x > 0")
    shift = np.zeros_like(x)
    small = x < 6.0
    while np.any(small):
        shift[small] -= 1.0 / x[small]
        x[small] += 1.0
        small = x < 6.0

    inv2 = 1.0 / (x * x)
    series = np.zeros_like(x)
    for c in reversed(_DIGAMMA_SERIES):
        series = (series + c) * inv2
    result = np.log(x) - 0.5 / x - series + shift
    return result if result.ndim else float(result)


def _positiveRoot(curvature, linear, constant):
    """
    Positive root of curvature * t^2 + linear * t - constant = 0 for
    curvature > 0 and constant >= 0, in the cancellation-free form
    """
    disc = np.sqrt(linear * linear + 4.0 * curvature * constant)
    withPositiveLinear = 2.0 * constant / np.where(linear + disc > 0, linear + disc, 1.0)
    withNegativeLinear = (disc - linear) / (2.0 * curvature)
    return np.where(linear >= 0, withPositiveLinear, withNegativeLinear)


def _floor(tau):
    tau = np.maximum(tau, TAU_FLOOR)
    return tau if np.ndim(tau) else float(tau)


def _checkQ(q):
    q = np.asarray(q, dtype=float)
    if np.any(q < 0) or not np.all(np.isfinite(q)):
        raise DomainError("quadratic forms must be finite and nonnegative")
    return q


def _checkPositive(**kwargs):
    for name, value in kwargs.items():
        if not (np.isfinite(value) and value > 0):
            raise ParameterError(f"{name} must be positive, got {value}")


def tau_k(a, b, q):
    """
    MAP texture under the gamma prior: positive root of
    t^2 + (5 - a) b t - b q = 0

    @param a Shape
    @param b Scale
    @param q Quadratic form(s)
    """
    _checkPositive(a=a, b=b)
    q = _checkQ(q)
    return _floor(_positiveRoot(1.0, (N_POL + 1 - a) * b, b * q))


def tau_student(a, b, q):
    """
    MAP texture under the inverse-gamma prior: (b + q) / (a + 5)
    """
    _checkPositive(a=a, b=b)
    q = _checkQ(q)
    return _floor((b + q) / (a + N_POL + 1))


def tau_cauchy(b, q):
    return tau_student(1.0, b, q)


def tau_laplace(lam, q):
    """
    MAP texture under the exponential prior: positive root of
    lam t^2 + 4 t - q = 0
    """
    _checkPositive(lam=lam)
    q = _checkQ(q)
    return _floor(_positiveRoot(lam, float(N_POL), q))


def tau_igcg(lam, q):
    """
    MAP texture under the unit-mean inverse Gaussian prior: positive root of
    lam t^2 + 11 t - (2 q + lam) = 0
    """
    _checkPositive(lam=lam)
    q = _checkQ(q)
    return _floor(_positiveRoot(lam, 2.0 * N_POL + 3, 2.0 * q + lam))


def shape_function(a):
    """
    g(a) = ln a - Psi(a), positive and decreasing to 0 on a > 0
    """
    return np.log(a) - digamma(a)


def solve_shape(statistic):
    """
    Shape a solving ln a - Psi(a) = statistic, by bisection on
    [SHAPE_MIN, SHAPE_MAX] followed by a few Newton steps. A statistic
    below g(SHAPE_MAX), which includes equal samples, returns SHAPE_MAX.

    @param statistic Nonnegative sample statistic
    @return (shape, clamped)
    """
    if not np.isfinite(statistic):
        raise DomainError(f"shape statistic must be finite, got {statistic}")
    if statistic <= shape_function(SHAPE_MAX):
        log.warning("texture variance collapsed; effectively Gaussian "
                    f"(statistic {statistic:.3e}, shape clamped to {SHAPE_MAX:g})")
        return SHAPE_MAX, True
    if statistic >= shape_function(SHAPE_MIN):
        log.warning(f"shape statistic {statistic:.3e} beyond the bracket, shape clamped to {SHAPE_MIN:g}")
        return SHAPE_MIN, True

    def residual(a):
        return shape_function(a) - statistic

    a = optimize.bisect(residual, SHAPE_MIN, SHAPE_MAX, xtol=SHAPE_XTOL, maxiter=200)
    r = residual(a)
    for _ in range(NEWTON_STEPS):
        slope = 1.0 / a - float(special.polygamma(1, a))
        if slope == 0:
            break
        trial = a - r / slope
        if not SHAPE_MIN <= trial <= SHAPE_MAX:
            break
        rTrial = residual(trial)
        if abs(rTrial) >= abs(r):
            break
        a, r = trial, rTrial
    return float(a), False


def _checkTau(tau):
    tau = np.asarray(tau, dtype=float).ravel()
    if tau.size == 0:
        raise ParameterError("no texture values to fit")
    if np.any(tau <= 0) or not np.all(np.isfinite(tau)):
        raise DomainError("texture values must be finite and strictly positive")
    return tau


def hyper_k(tau):
    """
    ML gamma hyperparameters: ln a - Psi(a) = ln mean(tau) - mean(ln tau),
    b = sum(tau) / (B a)

    @param tau Per-baseline textures
    @return (a, b)
    """
    tau = _checkTau(tau)
    statistic = np.log(np.mean(tau)) - np.mean(np.log(tau))
    a, _ = solve_shape(float(statistic))
    return a, float(np.sum(tau) / (tau.size * a))


def hyper_student(tau):
    """
    ML inverse-gamma hyperparameters: ln a - Psi(a) = mean(ln tau) - ln hm(tau),
    with hm the harmonic mean, and b = B a / sum(1/tau)

    @param tau Per-baseline textures
    @return (a, b)
    """
    tau = _checkTau(tau)
    inverseSum = np.sum(1.0 / tau)
    statistic = np.mean(np.log(tau)) + np.log(inverseSum / tau.size)
    a, _ = solve_shape(float(statistic))
    return a, float(tau.size * a / inverseSum)


def hyper_cauchy(tau):
    """
    b = B / sum(1/tau), the inverse-gamma scale with the shape pinned to 1
    """
    tau = _checkTau(tau)
    return float(tau.size / np.sum(1.0 / tau))


def hyper_laplace(tau):
    """
    lam = B / sum(tau)
    """
    tau = _checkTau(tau)
    return float(tau.size / np.sum(tau))


def hyper_igcg(tau):
    """
    lam = B / sum((tau - 1)^2 / tau), clamped to LAMBDA_MAX when every tau is 1
    """
    tau = _checkTau(tau)
    spread = float(np.sum((tau - 1.0)**2 / tau))
    if spread <= tau.size / LAMBDA_MAX:
        log.warning(f"textures all equal to 1: inverse Gaussian shape clamped to {LAMBDA_MAX:g}")
        return LAMBDA_MAX
    return float(tau.size / spread)


@dataclass
class TextureEstimate:
    """
    Per-baseline MAP textures and the prior they were computed with
    """
    tau: np.ndarray
    prior: TexturePriorModel


def estimate_texture(prior, q):
    """
    Family dispatch of the MAP texture update

    @param prior TexturePriorModel with the current hyperparameters
    @param q Quadratic forms of one frequency
    """
    family = prior.family
    if family is TextureFamily.KGAMMA:
        tau = tau_k(prior.a, prior.b, q)
    elif family is TextureFamily.STUDENT:
        tau = tau_student(prior.a, prior.b, q)
    elif family is TextureFamily.CAUCHY:
        tau = tau_cauchy(prior.b, q)
    elif family is TextureFamily.LAPLACE:
        tau = tau_laplace(prior.lam, q)
    elif family is TextureFamily.IGCG:
        tau = tau_igcg(prior.lam, q)
    else:
        tau = np.ones_like(np.asarray(q, dtype=float))
    return TextureEstimate(np.atleast_1d(np.asarray(tau, dtype=float)), prior)


def update_hyperparameters(prior, tau):
    """
    Family dispatch of the ML hyperparameter update; returns a new prior

    @param prior Current TexturePriorModel
    @param tau Textures of the previous iteration
    """
    family = prior.family
    if family is TextureFamily.KGAMMA:
        a, b = hyper_k(tau)
        updated = prior.withHyperparameters(a=a, b=b)
    elif family is TextureFamily.STUDENT:
        a, b = hyper_student(tau)
        updated = prior.withHyperparameters(a=a, b=b)
    elif family is TextureFamily.CAUCHY:
        updated = prior.withHyperparameters(b=hyper_cauchy(tau))
    elif family is TextureFamily.LAPLACE:
        updated = prior.withHyperparameters(lam=hyper_laplace(tau))
    elif family is TextureFamily.IGCG:
        updated = prior.withHyperparameters(lam=hyper_igcg(tau))
    else:
        return prior
    log.verbose(f"hyperparameters {family.value}: {prior.hyperparameters()} -> {updated.hyperparameters()}")
    return updated


def initial_prior(family, tau):
    """
    Starting prior of a calibration run: shape SHAPE_START with a
    method-of-moments scale for the K and Student families, the family
    defaults otherwise

    @param family TextureFamily
    @param tau Initial textures
    """
    family = TextureFamily(family)
    meanTau = float(np.mean(_checkTau(tau)))
    if family is TextureFamily.KGAMMA:
        return TexturePriorModel.kgamma(SHAPE_START, meanTau / SHAPE_START)
    if family is TextureFamily.STUDENT:
        return TexturePriorModel.student(SHAPE_START, meanTau * (SHAPE_START - 1.0))
    return TexturePriorModel.default(family)


def per_baseline_objective(tau, q, prior):
    """
    -q / tau - 4 ln tau + ln p(tau), the tau-dependent part of the joint
    log-likelihood of one baseline
    """
    tau = np.asarray(tau, dtype=float)
    return -np.asarray(q) / tau - N_POL * np.log(tau) + prior.logpdf(tau)
