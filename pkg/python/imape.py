"""
 **********************************************************************************
 * Project: RobustCal - robust calibration of radio interferometers               *
 * Package: RobustCal                                                             *
 * Module : imape                                                                 *
 *                                                                                *
 * Description:                                                                   *
 *      Iterative MAP estimator: block-coordinate ascent over the calibration     *
 *      parameters, the texture hyperparameters, the speckle covariance and the   *
 *      textures, plus the Gaussian least-squares baseline.                       *
 *                                                                                *
 * Authors:                                                                       *
 *      RobustCal group                                                           *
 *                                                                                *
 * Redistribution and use in source and binary forms, with or without             *
 * modification, are permitted according to the terms listed in the file          *
 * LICENSE.                                                                       *
 **********************************************************************************
"""

import json
from dataclasses import dataclass, field, replace
from multiprocessing.pool import ThreadPool
from typing import List, Optional

import numpy as np

from errors import ParameterError, SolverError
from jones import ThetaVector, VisibilitySet
from likelihood import (OMEGA_INIT, condition_number, log_likelihood_conditional, log_likelihood_joint,
                        quadratic_forms, residuals, update_speckle)
from logger import Logger
from noise import TextureFamily, TexturePriorModel
from solver import ConsensusSettings, SolverOptions, consensus_admm, solve_theta_result
from texture import TAU_FLOOR, estimate_texture, update_hyperparameters

log = Logger('IMAPE')

INIT_MODES = ("cold", "perturbed")


@dataclass
class ImapeOptions:
    maxCycles: int = 50
    tolerance: float = 1e-6          # on max_f |delta theta_f| / |theta_f|
    freezeOmega: bool = False
    initMode: str = "cold"
    perturbation: float = 1e-3       # scale of the perturbed start
    threads: int = 1
    checkpoint: Optional[str] = None
    solver: SolverOptions = field(default_factory=SolverOptions)
    consensus: ConsensusSettings = field(default_factory=ConsensusSettings)

    def __post_init__(self):
        if self.maxCycles < 0:
            raise ParameterError(f"maxCycles must be nonnegative, got {self.maxCycles}")
        if not self.tolerance > 0:
            raise ParameterError(f"tolerance must be positive, got {self.tolerance}")
        if self.initMode not in INIT_MODES:
            raise ParameterError(f"unknown init mode '{self.initMode}', choose from {INIT_MODES}")
        if self.threads < 1:
            raise ParameterError(f"threads must be >= 1, got {self.threads}")


def _complexToList(a):
    a = np.asarray(a)
    return [a.real.tolist(), a.imag.tolist()]


def _listToComplex(pair):
    return np.array(pair[0], dtype=float) + 1j * np.array(pair[1], dtype=float)


@dataclass
class CalibrationState:
    """
    Everything an IMAPE run carries from one cycle to the next
    """
    frequencies: List[float]
    thetas: List[ThetaVector]
    taus: List[np.ndarray]
    omegas: List[np.ndarray]
    priors: List[TexturePriorModel]
    cycle: int = 0
    logLikelihood: List[float] = field(default_factory=list)
    thetaSteps: List[float] = field(default_factory=list)
    converged: bool = False
    consensusCoefficients: Optional[np.ndarray] = field(default=None, repr=False)
    consensusDuals: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def nFrequencies(self):
        return len(self.frequencies)

    def copy(self):
        return CalibrationState.loads(self.dumps())

    def dumps(self):
        """
        JSON text of the state; floats are written with full precision
        """
        payload = {
            "frequencies": [float(f) for f in self.frequencies],
            "shape": [self.thetas[0].nSources, self.thetas[0].nAntennas],
            "thetas": [t.toArray().tolist() for t in self.thetas],
            "taus": [np.asarray(t, dtype=float).tolist() for t in self.taus],
            "omegas": [_complexToList(o) for o in self.omegas],
            "priors": [{"family": p.family.value, "a": p.a, "b": p.b, "lam": p.lam} for p in self.priors],
            "cycle": self.cycle,
            "logLikelihood": list(self.logLikelihood),
            "thetaSteps": list(self.thetaSteps),
            "converged": self.converged,
        }
        if self.consensusCoefficients is not None:
            payload["consensusCoefficients"] = self.consensusCoefficients.tolist()
            payload["consensusDuals"] = self.consensusDuals.tolist()
        return json.dumps(payload, sort_keys=True)

    @classmethod
    def loads(cls, text):
        payload = json.loads(text)
        D, M = payload["shape"]
        state = cls(
            frequencies=payload["frequencies"],
            thetas=[ThetaVector.fromArray(np.array(t), D, M) for t in payload["thetas"]],
            taus=[np.array(t, dtype=float) for t in payload["taus"]],
            omegas=[_listToComplex(o) for o in payload["omegas"]],
            priors=[TexturePriorModel(TextureFamily(p["family"]), p["a"], p["b"], p["lam"]) for p in payload["priors"]],
            cycle=payload["cycle"],
            logLikelihood=payload["logLikelihood"],
            thetaSteps=payload["thetaSteps"],
            converged=payload["converged"],
        )
        if "consensusCoefficients" in payload:
            state.consensusCoefficients = np.array(payload["consensusCoefficients"])
            state.consensusDuals = np.array(payload["consensusDuals"])
        return state

    def save(self, path):
        with open(path, "w") as f:
            f.write(self.dumps())
        log.debug(f"checkpoint written to {path} (cycle {self.cycle})")

    @classmethod
    def load(cls, path):
        with open(path) as f:
            return cls.loads(f.read())

    def checkInvariants(self, tol=1e-12):
        """
        True when every texture is at least TAU_FLOOR and every speckle
        covariance has unit trace
        """
        tauOk = all(np.all(np.asarray(t) >= TAU_FLOOR) for t in self.taus)
        traceOk = all(abs(np.real(np.trace(o)) - 1.0) <= tol for o in self.omegas)
        return tauOk and traceOk


def perturbed_theta(truth, scale, rng):
    """
    truth plus i.i.d. normal perturbations of standard deviation scale on every
    real parameter
    """
    x = truth.toArray()
    return ThetaVector.fromArray(x + scale * rng.standard_normal(x.size), truth.nSources, truth.nAntennas)


def _asList(xs):
    if isinstance(xs, VisibilitySet):
        return [xs]
    return list(xs)


class Imape:
    """
    One calibration run. The four block updates are available individually;
    runCycle() chains them in the order theta, hyperparameters, speckle,
    texture.
    """

    def __init__(self, xs, scene, prior, opts=None, thetaInit=None, state=None):
        """
        @param xs VisibilitySet per frequency (or a single one)
        @param scene Scene
        @param prior Starting TexturePriorModel (family and hyperparameters)
        @param opts ImapeOptions
        @param thetaInit Starting ThetaVector, one per frequency or one for all;
                         None runs the Gaussian least-squares cold start
        @param state CalibrationState to resume from
        """
        self.xs = _asList(xs)
        if not self.xs:
            raise ParameterError("no visibilities to calibrate")
        for x in self.xs:
            if x.nBaselines != scene.nBaselines:
                raise ParameterError(f"data at {x.frequency:g} Hz has {x.nBaselines} baselines, "
                                     f"scene has {scene.nBaselines}")
        self.scene = scene
        self.family = prior.family
        self.opts = opts if opts is not None else ImapeOptions()
        self.consensusModel = None
        if self.opts.consensus.enabled:
            self.consensusModel = self.opts.consensus.build([x.frequency for x in self.xs], self.opts.threads)

        if state is not None:
            if state.nFrequencies != len(self.xs):
                raise ParameterError(f"state has {state.nFrequencies} frequencies, data has {len(self.xs)}")
            self.state = state
            if self.consensusModel is not None and state.consensusCoefficients is not None:
                self.consensusModel.coefficients = state.consensusCoefficients.copy()
                self.consensusModel.duals = state.consensusDuals.copy()
        else:
            self.state = self.initialState(prior, thetaInit)

    def _context(self, k):
        return f" (frequency {self.xs[k].frequency:g} Hz, cycle {self.state.cycle + 1})"

    def _map(self, func):
        F = len(self.xs)
        if self.opts.threads > 1 and F > 1:
            with ThreadPool(min(self.opts.threads, F)) as pool:
                return pool.map(func, range(F))
        return [func(k) for k in range(F)]

    def initialState(self, prior, thetaInit):
        F, B = len(self.xs), self.scene.nBaselines
        D, M = self.scene.nCalibrators, self.scene.nAntennas
        taus = [np.ones(B) for _ in range(F)]
        omegas = [OMEGA_INIT.copy() for _ in range(F)]

        if thetaInit is None:
            def coldStart(k):
                return solve_theta_result(self.xs[k], taus[k], omegas[k], self.scene, self.xs[k].frequency,
                                          ThetaVector.identity(D, M), self.opts.solver,
                                          context=self._coldContext(k)).theta
            thetas = self._map(coldStart)
        elif isinstance(thetaInit, ThetaVector):
            thetas = [thetaInit.copy() for _ in range(F)]
        else:
            thetas = [t.copy() for t in thetaInit]
            if len(thetas) != F:
                raise ParameterError(f"{len(thetas)} starting points for {F} frequencies")

        return CalibrationState([x.frequency for x in self.xs], thetas, taus, omegas, [prior] * F)

    def _coldContext(self, k):
        return f" (frequency {self.xs[k].frequency:g} Hz, least-squares start)"

    def stepTheta(self):
        """
        Step 1: theta for the current textures and speckle covariance.

        @return max over frequencies of the relative parameter change
        """
        state = self.state
        before = [t.toArray() for t in state.thetas]
        try:
            if self.consensusModel is not None:
                thetas = consensus_admm(self.xs, state.taus, state.omegas, self.scene, self.consensusModel,
                                        state.thetas, self.opts.solver)
                state.consensusCoefficients = self.consensusModel.coefficients.copy()
                state.consensusDuals = self.consensusModel.duals.copy()
            else:
                def update(k):
                    return solve_theta_result(self.xs[k], state.taus[k], state.omegas[k], self.scene,
                                              self.xs[k].frequency, state.thetas[k], self.opts.solver,
                                              context=self._context(k)).theta
                thetas = self._map(update)
        except SolverError as err:
            raise SolverError(f"IMAPE cycle {state.cycle + 1}: {err}") from err
        state.thetas = list(thetas)

        steps = []
        for old, new in zip(before, state.thetas):
            scale = max(float(np.linalg.norm(old)), np.finfo(float).tiny)
            steps.append(float(np.linalg.norm(new.toArray() - old)) / scale)
        return max(steps)

    def stepHyperparameters(self):
        """
        Step 2: ML hyperparameters from the textures of the previous cycle.
        runCycle() skips it until the textures have been estimated once.
        """
        self.state.priors = [update_hyperparameters(p, t) for p, t in zip(self.state.priors, self.state.taus)]

    def residuals(self, k):
        return residuals(self.xs[k], self.state.thetas[k], self.scene, self.xs[k].frequency)

    def stepSpeckle(self, normalize=True):
        """
        Step 3: speckle covariance from the residuals and the previous textures
        """
        if self.opts.freezeOmega:
            return
        self.state.omegas = [update_speckle(self.residuals(k), self.state.taus[k], normalize=normalize)
                             for k in range(len(self.xs))]

    def stepTexture(self):
        """
        Step 4: MAP textures with the fresh hyperparameters and covariance
        """
        if self.family is TextureFamily.GAUSSIAN:
            return
        taus = []
        for k in range(len(self.xs)):
            q = quadratic_forms(self.residuals(k).u, self.state.omegas[k])
            taus.append(estimate_texture(self.state.priors[k], q).tau)
        self.state.taus = taus

    def jointLogLikelihood(self, k=None):
        """
        L_J summed over frequencies, or of frequency k only
        """
        indices = range(len(self.xs)) if k is None else [k]
        total = 0.0
        for i in indices:
            res = self.residuals(i)
            lc = log_likelihood_conditional(res, self.state.taus[i], self.state.omegas[i])
            total += log_likelihood_joint(lc, self.state.taus[i], self.state.priors[i])
        return total

    def runCycle(self):
        """
        One pass over the four blocks

        @return relative theta change of the cycle
        """
        state = self.state
        thetaStep = self.stepTheta()
        # unit textures carry no shape information
        if state.cycle > 0:
            self.stepHyperparameters()
        self.stepSpeckle()
        self.stepTexture()
        state.cycle += 1
        state.thetaSteps.append(thetaStep)
        logLikelihood = self.jointLogLikelihood()
        state.logLikelihood.append(logLikelihood)

        hyper = ",".join(f"{k}:{v:.4g}" for k, v in state.priors[0].hyperparameters().items()) or "-"
        omegaCond = max(condition_number(o) for o in state.omegas)
        log.info(f"cycle={state.cycle} logLikelihood={logLikelihood:.10e} thetaStep={thetaStep:.3e} "
                 f"hyper={hyper} omegaCond={omegaCond:.3e}")
        if self.opts.checkpoint:
            state.save(self.opts.checkpoint)
        return thetaStep

    def run(self):
        """
        Cycle until the relative theta change drops below the tolerance or
        maxCycles is reached

        @return CalibrationState
        """
        state = self.state
        while state.cycle < self.opts.maxCycles and not state.converged:
            if self.runCycle() < self.opts.tolerance:
                state.converged = True
        if state.converged:
            log.info(f"IMAPE ({self.family.value}) converged after {state.cycle} cycles")
        else:
            log.warning(f"IMAPE ({self.family.value}) stopped at the cycle cap {self.opts.maxCycles} "
                        f"with theta step {state.thetaSteps[-1] if state.thetaSteps else float('nan'):.3e}")
        return state


def run_imape(xs, scene, prior, opts=None, thetaInit=None, state=None):
    """
    Full IMAPE run

    @param xs VisibilitySet per frequency
    @param scene Scene
    @param prior Starting TexturePriorModel
    @param opts ImapeOptions
    @param thetaInit Optional starting ThetaVector(s)
    @param state Optional CalibrationState to resume from
    """
    return Imape(xs, scene, prior, opts, thetaInit, state).run()


def run_gaussian_ls(xs, scene, opts=None, thetaInit=None):
    """
    Least-squares baseline: Gaussian family with the speckle covariance frozen
    at I/4, i.e. theta minimizing sum_pq |u_pq|^2 per frequency
    """
    opts = opts if opts is not None else ImapeOptions()
    return run_imape(xs, scene, TexturePriorModel.gaussian(), replace(opts, freezeOmega=True), thetaInit)
