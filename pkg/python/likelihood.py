"""
 **********************************************************************************
 * Project: RobustCal - robust calibration of radio interferometers               *
 * Package: RobustCal                                                             *
 * Module : likelihood                                                            *
 *                                                                                *
 * Description:                                                                   *
 *      Residuals, quadratic forms, conditional and joint log-likelihoods and     *
 *      the trace-normalized speckle covariance update.                           *
 *                                                                                *
 * Authors:                                                                       *
 *      RobustCal group                                                           *
 *                                                                                *
 * Redistribution and use in source and binary forms, with or without             *
 * modification, are permitted according to the terms listed in the file          *
 * LICENSE.                                                                       *
 **********************************************************************************
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import linalg

from errors import DomainError, NumericalError, ParameterError
from jones import predict_all
from logger import Logger, VERBOSE
from noise import N_POL

log = Logger('Likelihood')

RIDGE = 1e-10

# identity speckle covariance with unit trace
OMEGA_INIT = np.eye(N_POL, dtype=complex) / N_POL


def regularized(omega):
    """
    omega + eps I with eps = RIDGE * tr(omega)
    """
    omega = np.asarray(omega, dtype=complex)
    eps = RIDGE * max(float(np.real(np.trace(omega))), 0.0)
    return omega + eps * np.eye(omega.shape[0])


def speckle_factor(omega):
    """
    Lower Cholesky factor of the ridge-regularized speckle covariance

    @param omega Hermitian 4x4 matrix
    """
    omega = regularized(omega)
    try:
        return linalg.cholesky(omega, lower=True)
    except linalg.LinAlgError:
        raise NumericalError("speckle covariance is singular or indefinite", np.linalg.cond(omega)) from None


def whiten(u, factor):
    """
    L^{-1} u for each row of u (rows are 4-vectors)

    @param u Complex array (B, 4)
    @param factor Lower Cholesky factor of omega
    """
    return linalg.solve_triangular(factor, np.asarray(u).T, lower=True).T


def quadratic_forms(u, omega, method="cholesky"):
    """
    q_pq = u_pq^H omega^{-1} u_pq for every baseline

    @param u Complex residuals (B, 4)
    @param omega Speckle covariance
    @param method "cholesky" (triangular solves) or "inverse" (explicit inverse)
    """
    u = np.asarray(u, dtype=complex)
    if method == "cholesky":
        w = whiten(u, speckle_factor(omega))
        return np.sum(np.abs(w)**2, axis=1)
    if method == "inverse":
        inv = np.linalg.inv(regularized(omega))
        return np.real(np.einsum("bi,ij,bj->b", u.conj(), inv, u))
    raise ParameterError(f"unknown quadratic form method '{method}'")


@dataclass
class ResidualSet:
    """
    Residuals u_pq of one frequency and, once computed, their quadratic forms
    under a speckle covariance
    """
    u: np.ndarray
    q: Optional[np.ndarray] = None
    omega: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def nBaselines(self):
        return self.u.shape[0]

    def quadratic(self, omega):
        """
        Quadratic forms under omega, cached for the last omega used

        @param omega Speckle covariance
        """
        omega = np.asarray(omega, dtype=complex)
        if self.q is None or self.omega is None or not np.array_equal(self.omega, omega):
            self.q = quadratic_forms(self.u, omega)
            self.omega = omega.copy()
        return self.q


def residuals(x, theta, scene, frequency, omega=None):
    """
    u_pq = x_pq - sum_i s_i,pq(theta) for every baseline

    @param x VisibilitySet
    @param theta ThetaVector
    @param scene Scene
    @param frequency Frequency in Hz
    @param omega Optional speckle covariance; fills the cached quadratic forms
    """
    if x.nBaselines != scene.nBaselines:
        raise ParameterError(f"data has {x.nBaselines} baselines, scene has {scene.nBaselines}")
    model = predict_all(theta, scene, frequency)
    res = ResidualSet(x.data - model.data)
    if omega is not None:
        res.quadratic(omega)
    return res


def _checkTau(tau, nBaselines):
    tau = np.asarray(tau, dtype=float)
    if tau.shape != (nBaselines,):
        raise ParameterError(f"expected {nBaselines} texture values, got shape {tau.shape}")
    if np.any(tau <= 0) or not np.all(np.isfinite(tau)):
        raise DomainError("texture values must be finite and strictly positive")
    return tau


def log_det(omega):
    """
    ln|omega| from the Cholesky factor
    """
    factor = speckle_factor(omega)
    return 2.0 * float(np.sum(np.log(np.real(np.diag(factor)))))


def log_likelihood_conditional(res, tau, omega):
    """
    L_C = -sum_pq [ q_pq / tau_pq + N ln(pi) + N ln(tau_pq) + ln|omega| ], N = 4

    @param res ResidualSet
    @param tau Per-baseline textures
    @param omega Speckle covariance
    """
    tau = _checkTau(tau, res.nBaselines)
    q = res.quadratic(omega)
    B = res.nBaselines
    return float(-np.sum(q / tau) - N_POL * np.sum(np.log(tau)) - B * (N_POL * np.log(np.pi) + log_det(omega)))


def log_likelihood_joint(logLikelihoodConditional, tau, prior):
    """
    L_J = L_C + sum_pq ln p(tau_pq; phi)

    @param logLikelihoodConditional Value of L_C
    @param tau Per-baseline textures
    @param prior TexturePriorModel
    """
    tau = np.asarray(tau, dtype=float)
    if np.any(tau <= 0):
        raise DomainError("texture values must be strictly positive")
    return float(logLikelihoodConditional + np.sum(prior.logpdf(tau)))


def update_speckle(res, tau, normalize=True):
    """
    omega = (1/B) sum_pq u_pq u_pq^H / tau_pq, then divided by its trace

    @param res ResidualSet
    @param tau Per-baseline textures
    @param normalize If False, return the un-normalized maximum-likelihood estimate
    """
    tau = _checkTau(tau, res.nBaselines)
    weighted = res.u / np.sqrt(tau)[:, None]
    # fixed-order reduction: one BLAS product over the baseline axis
    omega = (weighted.T @ weighted.conj()) / res.nBaselines
    omega = 0.5 * (omega + omega.conj().T)
    trace = float(np.real(np.trace(omega)))
    if trace <= 0:
        log.warning("all residuals vanish: speckle covariance is rank 0, keeping the identity")
        return OMEGA_INIT.copy()
    if log.isEnabledFor(VERBOSE):
        log.verbose(f"speckle eigenvalues: {np.array2string(linalg.eigvalsh(omega / trace), precision=4)}")
    if not normalize:
        return omega
    return omega / trace


def condition_number(omega):
    w = linalg.eigvalsh(np.asarray(omega, dtype=complex))
    if w[0] <= 0:
        return np.inf
    return float(w[-1] / w[0])
