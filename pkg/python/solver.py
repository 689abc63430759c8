"""
 **********************************************************************************
 * Project: RobustCal - robust calibration of radio interferometers               *
 * Package: RobustCal                                                             *
 * Module : solver                                                                *
 *                                                                                *
 * Description:                                                                   *
 *      Per-frequency estimation of the calibration parameters for fixed          *
 *      textures and speckle covariance: damped Gauss-Newton on the whitened      *
 *      residual stack with an analytic Jacobian, and the consensus ADMM layer    *
 *      tying the frequencies to a polynomial model.                              *
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
from multiprocessing.pool import ThreadPool
from typing import List, Optional

import numpy as np
from numpy.polynomial import polynomial
from scipy import linalg

from errors import DomainError, ParameterError, SolverError
from jones import (ThetaVector, faraday_derivative, faraday_matrix, normalized_frequencies,
                   source_visibilities, vec)
from likelihood import speckle_factor
from logger import Logger
from scene import coherency_all, known_effects_all

log = Logger('Solver')

# damping is kept within [DAMPING_FLOOR, DAMPING_CEILING] x max diag(J^T J)
DAMPING_FLOOR = 1e-14
DAMPING_CEILING = 1e16


@dataclass
class SolverOptions:
    maxIterations: int = 100
    gradientTolerance: float = 1e-10
    initialDamping: float = 1e-3
    dampingUp: float = 10.0
    dampingDown: float = 0.1
    stepTolerance: float = 1e-12
    referenceAntenna: bool = False    # fix phase[i, 0] = its initial value

    def __post_init__(self):
        if int(self.maxIterations) != self.maxIterations or self.maxIterations < 0:
            raise ParameterError(f"maxIterations must be a nonnegative integer, got {self.maxIterations}")
        self.maxIterations = int(self.maxIterations)
        for name in ("gradientTolerance", "initialDamping", "stepTolerance"):
            if not getattr(self, name) > 0:
                raise ParameterError(f"{name} must be positive, got {getattr(self, name)}")
        if not self.dampingUp > 1.0 > self.dampingDown > 0.0:
            raise ParameterError(f"need dampingUp > 1 > dampingDown > 0, got {self.dampingUp}, {self.dampingDown}")


@dataclass
class SolverResult:
    """
    Outcome of one solve: the estimate, its objective and the iteration trace
    """
    theta: ThetaVector
    objective: float
    initialObjective: float
    iterations: int
    reason: str
    trace: List[dict] = field(default_factory=list, repr=False)

    @property
    def converged(self):
        return self.reason in ("gradient", "step", "exact")


def _herm(X):
    return np.conj(np.swapaxes(X, -1, -2))


class WeightedProblem:
    """
    Whitened residual stack r(theta) of one frequency: the rows of
    L^{-1} u_pq / sqrt(tau_pq), real and imaginary parts stacked, with
    L L^H = omega. Optionally extended by the proximal rows
    sqrt(rho/2) (theta - anchor).
    """

    def __init__(self, x, tau, omega, scene, frequency, anchor=None, rho=0.0):
        """
        @param x VisibilitySet
        @param tau Per-baseline textures
        @param omega Speckle covariance
        @param scene Scene
        @param frequency Frequency in Hz
        @param anchor Optional real parameter vector of the proximal term
        @param rho Penalty of the proximal term
        """
        if x.nBaselines != scene.nBaselines:
            raise ParameterError(f"data has {x.nBaselines} baselines, scene has {scene.nBaselines}")
        tau = np.asarray(tau, dtype=float)
        if tau.shape != (scene.nBaselines,):
            raise ParameterError(f"expected {scene.nBaselines} textures, got shape {tau.shape}")
        if np.any(tau <= 0) or not np.all(np.isfinite(tau)):
            raise DomainError("texture values must be finite and strictly positive")

        self.nSources = scene.nCalibrators
        self.nAntennas = scene.nAntennas
        self.nBaselines = scene.nBaselines
        self.size = 2 * self.nSources * self.nAntennas + 4 * self.nAntennas
        self.frequency = frequency
        self.data = x.data
        self.H = known_effects_all(scene, frequency)
        self.C = coherency_all(scene.calibrators)
        self.antenna1 = scene.array.antenna1
        self.antenna2 = scene.array.antenna2
        self.weights = 1.0 / np.sqrt(tau)
        self.factor = speckle_factor(omega)

        self.anchor = None
        self.rho = 0.0
        if anchor is not None and rho > 0:
            anchor = np.asarray(anchor, dtype=float)
            if anchor.shape != (self.size,):
                raise ParameterError(f"anchor must have size {self.size}, got {anchor.shape}")
            self.anchor = anchor
            self.rho = float(rho)

    def unpack(self, params):
        return ThetaVector.fromArray(params, self.nSources, self.nAntennas)

    def _whiten(self, u):
        return linalg.solve_triangular(self.factor, u.T, lower=True).T * self.weights[:, None]

    def residualVector(self, params):
        theta = self.unpack(params)
        J = theta.gains[None, :, :, None] * (self.H @ (np.exp(1j * theta.phase)[..., None, None]
                                                        * faraday_matrix(theta.faraday)))
        model = source_visibilities(J, self.C, self.antenna1, self.antenna2).sum(axis=0)
        w = self._whiten(self.data - model).ravel()
        r = np.concatenate([w.real, w.imag])
        if self.anchor is not None:
            r = np.concatenate([r, np.sqrt(self.rho / 2) * (params - self.anchor)])
        return r

    def dataObjective(self, params):
        """
        sum_pq q_pq / tau_pq, without the proximal term
        """
        r = self.residualVector(params)[:8 * self.nBaselines]
        return float(r @ r)

    def jacobian(self, params):
        """
        Analytic Jacobian of residualVector(), shape (8B [+ n], n)
        """
        theta = self.unpack(params)
        D, M, B, n = self.nSources, self.nAntennas, self.nBaselines, self.size
        a1, a2 = self.antenna1, self.antenna2

        Z = np.exp(1j * theta.phase)[..., None, None]
        A = self.H @ (Z * faraday_matrix(theta.faraday))
        Ad = self.H @ (Z * faraday_derivative(theta.faraday))
        G = theta.gains[None, :, :, None]
        J, Jd = G * A, G * Ad

        C = self.C[:, None]
        K = C @ _herm(J[:, a2])                 # C_i J_iq^H
        Lm = J[:, a1] @ C                       # J_ip C_i
        S = J[:, a1] @ K
        T = np.sum(A[:, a1] @ K, axis=0)        # sum_i A_ip C_i J_iq^H
        U = np.sum(Lm @ _herm(A[:, a2]), axis=0)  # sum_i J_ip C_i A_iq^H

        dS = np.zeros((B, n, 4), dtype=complex)
        rows = np.broadcast_to(np.arange(B), (D, B))
        farP = np.arange(D)[:, None] * M + a1[None, :]
        farQ = np.arange(D)[:, None] * M + a2[None, :]
        dS[rows, farP] = vec(Jd[:, a1] @ K)
        dS[rows, farQ] = vec(Lm @ _herm(Jd[:, a2]))
        dS[rows, D * M + farP] = vec(1j * S)
        dS[rows, D * M + farQ] = vec(-1j * S)

        b = np.arange(B)
        gainBase = 2 * D * M
        for c in range(2):
            rowC = np.zeros((B, 2, 2), dtype=complex)
            rowC[:, c, :] = T[:, c, :]
            colC = np.zeros((B, 2, 2), dtype=complex)
            colC[:, :, c] = U[:, :, c]
            dS[b, gainBase + 4 * a1 + 2 * c] = vec(rowC)
            dS[b, gainBase + 4 * a1 + 2 * c + 1] = vec(1j * rowC)
            dS[b, gainBase + 4 * a2 + 2 * c] = vec(colC)
            dS[b, gainBase + 4 * a2 + 2 * c + 1] = vec(-1j * colC)

        # u = x - s, so du = -ds
        X = np.moveaxis(-dS, 2, 0).reshape(4, B * n)
        Y = linalg.solve_triangular(self.factor, X, lower=True).reshape(4, B, n) * self.weights[None, :, None]
        Jw = np.moveaxis(Y, 0, 1).reshape(4 * B, n)
        jac = np.vstack([Jw.real, Jw.imag])
        if self.anchor is not None:
            jac = np.vstack([jac, np.sqrt(self.rho / 2) * np.eye(n)])
        return jac

    def freeMask(self, opts):
        free = np.ones(self.size, dtype=bool)
        if opts.referenceAntenna:
            DM = self.nSources * self.nAntennas
            free[DM + np.arange(self.nSources) * self.nAntennas] = False
        return free


class ThetaSolver:
    """
    Levenberg-Marquardt on a WeightedProblem. The damping is relative to the
    largest diagonal entry of J^T J, so a uniform rescaling of the textures
    leaves the iterates unchanged.
    """

    def __init__(self, problem, opts=None, context=""):
        self.problem = problem
        self.opts = opts if opts is not None else SolverOptions()
        self.context = context

    def _objective(self, params):
        r = self.problem.residualVector(params)
        return r, float(r @ r)

    def solve(self, thetaInit):
        """
        @param thetaInit Starting ThetaVector
        @return SolverResult
        """
        opts = self.opts
        params = np.asarray(thetaInit.toArray(), dtype=float)
        if not np.all(np.isfinite(params)):
            raise ParameterError(f"initial parameters are not finite{self.context}")
        free = self.problem.freeMask(opts)

        r, f = self._objective(params)
        if not np.isfinite(f):
            raise SolverError(f"non-finite objective at the initial point{self.context}")
        f0 = f
        trace = []
        reason = "maxIterations"
        mu = None
        jac = None
        iteration = 0
        while iteration < opts.maxIterations:
            if f == 0.0:
                reason = "exact"
                break
            if jac is None:
                jac = self.problem.jacobian(params)[:, free]
                if not np.all(np.isfinite(jac)):
                    raise SolverError(f"non-finite Jacobian at iteration {iteration}{self.context}")
                JtJ = jac.T @ jac
                Jtr = jac.T @ r
                scale = float(np.max(np.diag(JtJ))) if JtJ.size else 0.0
                gradNorm = 2.0 * float(np.max(np.abs(Jtr))) if Jtr.size else 0.0
                if gradNorm <= opts.gradientTolerance * (1.0 + f):
                    reason = "gradient"
                    break
                if scale == 0.0:
                    reason = "gradient"
                    break
                if mu is None:
                    mu = opts.initialDamping * scale
                mu = min(max(mu, DAMPING_FLOOR * scale), DAMPING_CEILING * scale)

            iteration += 1
            try:
                step = linalg.solve(JtJ + mu * np.eye(JtJ.shape[0]), -Jtr, assume_a="pos")
            except linalg.LinAlgError:
                step = None

            accepted = False
            if step is not None:
                trial = params.copy()
                trial[free] += step
                rTrial, fTrial = self._objective(trial)
                accepted = bool(np.isfinite(fTrial) and fTrial < f)

            trace.append({"iteration": iteration, "objective": f if not accepted else fTrial,
                          "gradient": gradNorm, "damping": mu, "accepted": accepted})
            log.debug(f"iteration={iteration} objective={trace[-1]['objective']:.12e} "
                      f"gradient={gradNorm:.3e} damping={mu:.3e} accepted={accepted}")

            if accepted:
                stepNorm = float(np.linalg.norm(step))
                params, r, f = trial, rTrial, fTrial
                mu *= opts.dampingDown
                jac = None
                if stepNorm <= opts.stepTolerance * (np.linalg.norm(params) + opts.stepTolerance):
                    reason = "step"
                    break
            else:
                mu *= opts.dampingUp
                if mu > DAMPING_CEILING * scale:
                    reason = "stalled"
                    break

        if not np.isfinite(f):
            raise SolverError(f"non-finite objective after {iteration} iterations{self.context}")
        log.debug(f"solve finished: reason={reason} iterations={iteration} objective={f:.12e} initial={f0:.12e}")
        return SolverResult(self.problem.unpack(params), f, f0, iteration, reason, trace)


def objective(theta, x, tau, omega, scene, frequency):
    """
    sum_pq q_pq(theta) / tau_pq, the theta-dependent part of -L_C

    @param theta ThetaVector
    @param x VisibilitySet
    @param tau Per-baseline textures
    @param omega Speckle covariance
    @param scene Scene
    @param frequency Frequency in Hz
    """
    return WeightedProblem(x, tau, omega, scene, frequency).dataObjective(theta.toArray())


def gradient(theta, x, tau, omega, scene, frequency):
    """
    Analytic gradient of objective() in the real packing of ThetaVector.toArray()
    """
    problem = WeightedProblem(x, tau, omega, scene, frequency)
    params = theta.toArray()
    return 2.0 * problem.jacobian(params).T @ problem.residualVector(params)


def solve_theta_result(x, tau, omega, scene, frequency, thetaInit, opts=None, anchor=None, rho=0.0, context=""):
    """
    Damped Gauss-Newton estimate of theta for fixed textures and speckle
    covariance; see solve_theta()

    @return SolverResult
    """
    problem = WeightedProblem(x, tau, omega, scene, frequency, anchor=anchor, rho=rho)
    return ThetaSolver(problem, opts, context).solve(thetaInit)


def solve_theta(x, tau, omega, scene, frequency, thetaInit, opts=None, anchor=None, rho=0.0):
    """
    argmin_theta sum_pq q_pq(theta) / tau_pq [+ rho/2 |theta - anchor|^2]

    @param x VisibilitySet
    @param tau Per-baseline textures
    @param omega Speckle covariance
    @param scene Scene
    @param frequency Frequency in Hz
    @param thetaInit Starting ThetaVector
    @param opts SolverOptions
    @param anchor Optional real parameter vector of the proximal term
    @param rho Penalty of the proximal term
    """
    return solve_theta_result(x, tau, omega, scene, frequency, thetaInit, opts, anchor, rho).theta


@dataclass
class ConsensusModel:
    """
    Polynomial frequency model theta_f ~ B_f z with the normalized-frequency
    basis {1, f, ..., f^P}, global coefficients z and per-frequency duals y
    """
    frequencies: np.ndarray
    order: int = 2
    rho: float = 1.0
    maxIterations: int = 200
    tolerance: float = 1e-6
    threads: int = 1
    coefficients: Optional[np.ndarray] = field(default=None, repr=False)
    duals: Optional[np.ndarray] = field(default=None, repr=False)
    history: List[dict] = field(default_factory=list, repr=False)

    def __post_init__(self):
        self.frequencies = np.asarray(self.frequencies, dtype=float).ravel()
        if self.frequencies.size < 1:
            raise ParameterError("consensus needs at least one frequency")
        if self.order < 0:
            raise ParameterError(f"polynomial order must be nonnegative, got {self.order}")
        if not self.rho > 0:
            raise ParameterError(f"penalty rho must be positive, got {self.rho}")
        self.basis = polynomial.polyvander(normalized_frequencies(self.frequencies), self.order)
        if np.linalg.matrix_rank(self.basis) < self.order + 1:
            raise ParameterError(f"polynomial basis of order {self.order} is rank deficient on "
                                 f"{self.frequencies.size} frequencies")

    @property
    def nFrequencies(self):
        return self.frequencies.size

    def fit(self, values):
        """
        Least-squares coefficients z of values (F x n) on the basis
        """
        z, *_ = np.linalg.lstsq(self.basis, values, rcond=None)
        return z

    def evaluate(self, z=None):
        return self.basis @ (self.coefficients if z is None else z)


@dataclass
class ConsensusSettings:
    """
    Configuration of the consensus layer; build() ties it to a frequency grid
    """
    enabled: bool = False
    order: int = 2
    rho: float = 1.0
    maxIterations: int = 200
    tolerance: float = 1e-6

    def build(self, frequencies, threads=1):
        return ConsensusModel(frequencies, self.order, self.rho, self.maxIterations, self.tolerance, threads)


def consensus_admm(xs, taus, omegas, scene, model, thetaInits, opts=None):
    """
    Scaled-form consensus ADMM over frequencies:
      theta_f = argmin objective_f + rho/2 |theta_f - B_f z + y_f/rho|^2
      z       = argmin sum_f |theta_f + y_f/rho - B_f z|^2
      y_f    += rho (theta_f - B_f z)
    until max_f |theta_f - B_f z| < tolerance or the iteration cap.

    @param xs VisibilitySet per frequency
    @param taus Textures per frequency
    @param omegas Speckle covariance per frequency
    @param scene Scene
    @param model ConsensusModel; coefficients and duals are updated in place
    @param thetaInits Starting ThetaVector per frequency
    @param opts SolverOptions of the inner solves
    @return list of ThetaVector
    """
    F = model.nFrequencies
    if not (len(xs) == len(taus) == len(omegas) == len(thetaInits) == F):
        raise ParameterError(f"consensus over {F} frequencies got {len(xs)} data sets, {len(taus)} textures, "
                             f"{len(omegas)} covariances and {len(thetaInits)} starting points")
    D, M = scene.nCalibrators, scene.nAntennas
    thetas = np.array([t.toArray() for t in thetaInits])
    rho = model.rho
    if model.coefficients is None or model.coefficients.shape != (model.order + 1, thetas.shape[1]):
        model.coefficients = model.fit(thetas)
    if model.duals is None or model.duals.shape != thetas.shape:
        model.duals = np.zeros_like(thetas)
    model.history = []

    def update(k, anchors):
        ctx = f" (frequency {xs[k].frequency:g} Hz, consensus)"
        result = solve_theta_result(xs[k], taus[k], omegas[k], scene, xs[k].frequency,
                                    ThetaVector.fromArray(thetas[k], D, M), opts,
                                    anchor=anchors[k], rho=rho, context=ctx)
        return result.theta.toArray()

    pool = ThreadPool(model.threads) if model.threads > 1 and F > 1 else None
    try:
        for iteration in range(1, model.maxIterations + 1):
            anchors = model.evaluate() - model.duals / rho
            if pool is not None:
                thetas = np.array(pool.map(lambda k: update(k, anchors), range(F)))
            else:
                thetas = np.array([update(k, anchors) for k in range(F)])
            previous = model.coefficients
            model.coefficients = model.fit(thetas + model.duals / rho)
            gap = thetas - model.evaluate()
            model.duals = model.duals + rho * gap
            primal = float(np.max(np.linalg.norm(gap, axis=1)))
            dual = float(rho * np.linalg.norm(model.evaluate(model.coefficients - previous)))
            model.history.append({"iteration": iteration, "primal": primal, "dual": dual})
            log.debug(f"admm iteration={iteration} primal={primal:.3e} dual={dual:.3e} rho={rho:g}")
            if primal < model.tolerance:
                break
        else:
            log.info(f"consensus stopped at the iteration cap {model.maxIterations} "
                     f"with primal residual {model.history[-1]['primal']:.3e}")
    finally:
        if pool is not None:
            pool.close()
            pool.join()

    return [ThetaVector.fromArray(t, D, M) for t in thetas]
