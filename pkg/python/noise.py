"""
 **********************************************************************************
 * Project: RobustCal - robust calibration of radio interferometers               *
 * Package: RobustCal                                                             *
 * Module : noise                                                                 *
 *                                                                                *
 * Description:                                                                   *
 *      Texture priors of the compound-Gaussian noise n = sqrt(tau) mu,           *
 *      noise sampling, the contamination recipe (weak unmodeled sources plus     *
 *      white Gaussian noise) and the SNR convention of the benchmark.            *
 *                                                                                *
 * Authors:                                                                       *
 *      RobustCal group                                                           *
 *                                                                                *
 * Redistribution and use in source and binary forms, with or without             *
 * modification, are permitted according to the terms listed in the file          *
 * LICENSE.                                                                       *
 **********************************************************************************
"""

from dataclasses import dataclass, replace
from enum import Enum

import numpy as np
from scipy import linalg, stats

from errors import DomainError, NumericalError, ParameterError
from jones import ThetaVector, VisibilitySet, predict_all
from logger import Logger

log = Logger('Noise')

# dimension of one cross-correlation vector
N_POL = 4

# recorded next to every benchmark output
SNR_FORMULA = "SNR = sum_calib flux^2 / (sum_bg flux^2 + 4 B sigma^2 kappa)"


class TextureFamily(Enum):
    """Texture prior families; the value is the command-line name"""
    KGAMMA = "k"
    STUDENT = "student"
    CAUCHY = "cauchy"
    LAPLACE = "laplace"
    IGCG = "igcg"
    GAUSSIAN = "gaussian"


@dataclass(frozen=True)
class TexturePriorModel:
    """
    Prior p(tau; phi) of the per-baseline texture.

    KGAMMA    gamma(shape a, scale b)
    STUDENT   inverse gamma(shape a, scale b)
    CAUCHY    inverse gamma with a pinned to 1
    LAPLACE   exponential(rate lam)
    IGCG      inverse Gaussian(mean 1, shape lam)
    GAUSSIAN  tau = 1, no prior term
    """
    family: TextureFamily
    a: float = 1.0
    b: float = 1.0
    lam: float = 1.0

    def __post_init__(self):
        if self.family is TextureFamily.CAUCHY and self.a != 1.0:
            object.__setattr__(self, "a", 1.0)
        for name in ("a", "b", "lam"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ParameterError(f"hyperparameter {name} of {self.family.value} prior must be positive, got {value}")

    @classmethod
    def kgamma(cls, a, b):
        return cls(TextureFamily.KGAMMA, a=a, b=b)

    @classmethod
    def student(cls, a, b):
        return cls(TextureFamily.STUDENT, a=a, b=b)

    @classmethod
    def cauchy(cls, b):
        return cls(TextureFamily.CAUCHY, a=1.0, b=b)

    @classmethod
    def laplace(cls, lam):
        return cls(TextureFamily.LAPLACE, lam=lam)

    @classmethod
    def igcg(cls, lam):
        return cls(TextureFamily.IGCG, lam=lam)

    @classmethod
    def gaussian(cls):
        return cls(TextureFamily.GAUSSIAN)

    @classmethod
    def default(cls, family):
        """
        Starting hyperparameters of each family (unit-mean textures where defined)

        @param family TextureFamily or its command-line name
        """
        family = TextureFamily(family)
        return {
            TextureFamily.KGAMMA: cls.kgamma(2.0, 0.5),
            TextureFamily.STUDENT: cls.student(2.0, 1.0),
            TextureFamily.CAUCHY: cls.cauchy(1.0),
            TextureFamily.LAPLACE: cls.laplace(1.0),
            TextureFamily.IGCG: cls.igcg(1.0),
            TextureFamily.GAUSSIAN: cls.gaussian(),
        }[family]

    def withHyperparameters(self, **kwargs):
        return replace(self, **kwargs)

    def hyperparameters(self):
        """
        Active hyperparameters as a dict, empty for the Gaussian family
        """
        if self.family in (TextureFamily.KGAMMA, TextureFamily.STUDENT):
            return {"a": self.a, "b": self.b}
        if self.family is TextureFamily.CAUCHY:
            return {"b": self.b}
        if self.family in (TextureFamily.LAPLACE, TextureFamily.IGCG):
            return {"lam": self.lam}
        return {}

    def distribution(self):
        """
        Frozen scipy.stats distribution of tau (None for the Gaussian family)
        """
        if self.family is TextureFamily.KGAMMA:
            return stats.gamma(self.a, scale=self.b)
        if self.family in (TextureFamily.STUDENT, TextureFamily.CAUCHY):
            return stats.invgamma(self.a, scale=self.b)
        if self.family is TextureFamily.LAPLACE:
            return stats.expon(scale=1.0 / self.lam)
        if self.family is TextureFamily.IGCG:
            # scipy's invgauss(mu, scale) has mean mu*scale and shape scale
            return stats.invgauss(1.0 / self.lam, scale=self.lam)
        return None

    def logpdf(self, tau):
        """
        ln p(tau; phi), zero for the Gaussian family

        @param tau Positive texture value(s)
        """
        tau = np.asarray(tau, dtype=float)
        if np.any(tau <= 0):
            raise DomainError("texture values must be strictly positive")
        if self.family is TextureFamily.GAUSSIAN:
            return np.zeros_like(tau)
        return self.distribution().logpdf(tau)

    def mean(self):
        if self.family is TextureFamily.GAUSSIAN:
            return 1.0
        return float(self.distribution().mean())


def sample_texture(prior, rng, size=None):
    """
    Draw tau from the prior; the Gaussian family returns exactly 1

    @param prior TexturePriorModel
    @param rng numpy Generator
    @param size None for a scalar, or an output shape
    """
    family = prior.family
    if family is TextureFamily.GAUSSIAN:
        return 1.0 if size is None else np.ones(size)
    if family is TextureFamily.KGAMMA:
        tau = rng.gamma(prior.a, prior.b, size)
    elif family in (TextureFamily.STUDENT, TextureFamily.CAUCHY):
        tau = 1.0 / rng.gamma(prior.a, 1.0 / prior.b, size)
    elif family is TextureFamily.LAPLACE:
        tau = rng.exponential(1.0 / prior.lam, size)
    else:
        tau = rng.wald(1.0, prior.lam, size)
    # gamma draws with tiny shape can underflow to 0
    return np.maximum(tau, np.finfo(float).tiny)


def hermitian_factor(omega, tol=1e-10):
    """
    L with L L^H = omega for a Hermitian PSD omega (eigen-factorization, so that
    singular and zero matrices are accepted)

    @param omega Hermitian 4x4 matrix
    @param tol Relative tolerance on negative eigenvalues
    """
    omega = np.asarray(omega, dtype=complex)
    w, V = linalg.eigh(0.5 * (omega + omega.conj().T))
    scale = max(1.0, float(np.max(np.abs(w))) if w.size else 1.0)
    if w.min() < -tol * scale:
        raise NumericalError(f"speckle covariance is not positive semidefinite (smallest eigenvalue {w.min():.3e})")
    return V * np.sqrt(np.clip(w, 0.0, None))[None, :]


def circular_normal(rng, shape):
    """
    Standard circular complex Gaussian, E|z|^2 = 1
    """
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def sample_noise(prior, omega, rng, size=None):
    """
    n = sqrt(tau) L z with L L^H = omega

    @param prior TexturePriorModel
    @param omega 4x4 speckle covariance
    @param rng numpy Generator
    @param size None for one 4-vector, or a count for an (n, 4) batch
    """
    L = hermitian_factor(omega)
    if size is None:
        tau = sample_texture(prior, rng)
        return np.sqrt(tau) * (L @ circular_normal(rng, N_POL))
    tau = np.asarray(sample_texture(prior, rng, size))
    z = circular_normal(rng, (size, N_POL))
    return np.sqrt(tau)[:, None] * (z @ L.T)


def contaminate(noiseless, scene, sigma, rng):
    """
    Add the weak background sources of the scene (identity gains, phases and
    Faraday rotation, geometric delay only) and i.i.d. circular Gaussian noise of
    per-component variance sigma^2

    @param noiseless VisibilitySet of the calibrators
    @param scene Scene carrying the background sources
    @param sigma Standard deviation per complex component
    @param rng numpy Generator
    """
    if sigma < 0:
        raise ParameterError(f"noise level must be nonnegative, got {sigma}")
    data = noiseless.data.copy()
    if scene.background:
        identity = ThetaVector.identity(len(scene.background), scene.nAntennas)
        data += predict_all(identity, scene, noiseless.frequency, sources=scene.background).data
    if sigma > 0:
        data += sigma * circular_normal(rng, data.shape)
    return VisibilitySet(noiseless.frequency, data)


def calibrator_power(scene):
    return float(sum(s.flux**2 for s in scene.calibrators))


def background_power(scene):
    return float(sum(s.flux**2 for s in scene.background))


def snr_db(scene, sigma, noiseFactor=1.0):
    """
    SNR of the contamination recipe, see SNR_FORMULA
    """
    noise = background_power(scene) + N_POL * scene.nBaselines * sigma**2 * noiseFactor
    if noise == 0:
        return np.inf
    return 10 * np.log10(calibrator_power(scene) / noise)


def sigma_for_snr(scene, targetDb, noiseFactor=1.0):
    """
    Gaussian noise level that puts the scene at the target SNR. When the
    background sources alone already exceed the allowed contamination the level
    is 0 and a warning is logged.

    @param scene Scene with calibrators and background sources
    @param targetDb Target SNR in dB
    @param noiseFactor kappa in SNR_FORMULA
    """
    allowed = calibrator_power(scene) / 10**(targetDb / 10)
    remaining = allowed - background_power(scene)
    if remaining <= 0:
        log.warning(f"target SNR {targetDb} dB unreachable: background sources alone give "
                    f"{snr_db(scene, 0.0, noiseFactor):.2f} dB; using sigma = 0")
        return 0.0
    return float(np.sqrt(remaining / (N_POL * scene.nBaselines * noiseFactor)))


def measured_snr_db(scene, noise, noiseFactor=1.0):
    """
    SNR from a realized noise array: the 4B sigma^2 term is replaced by the
    measured noise power per baseline-set

    @param scene Scene
    @param noise Complex noise realizations of shape (..., B, 4)
    @param noiseFactor kappa in SNR_FORMULA
    """
    noise = np.asarray(noise)
    perSet = np.sum(np.abs(noise)**2) / (noise.size / (N_POL * scene.nBaselines))
    return 10 * np.log10(calibrator_power(scene) / (background_power(scene) + noiseFactor * perSet))


def trial_seed(masterSeed, *key):
    """
    Counter-based sub-seed of a worker stream: identical for identical
    (masterSeed, key) whatever the scheduling

    @param masterSeed Master seed of the run
    @param key Integers identifying the stream, e.g. (snrIndex, trialIndex)
    """
    state = np.random.SeedSequence([int(masterSeed)] + [int(k) for k in key]).generate_state(1, dtype=np.uint64)[0]
    # 63 bits, so that the seed fits a signed CSV integer column
    return int(state) & ((1 << 63) - 1)


def excess_kurtosis(values):
    """
    Excess kurtosis of the pooled real and imaginary parts
    """
    values = np.asarray(values).ravel()
    return float(stats.kurtosis(np.concatenate([values.real, values.imag]), fisher=True))
