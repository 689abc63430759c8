"""
 **********************************************************************************
 * Project: RobustCal - robust calibration of radio interferometers               *
 * Package: RobustCal                                                             *
 * Module : jones                                                                 *
 *                                                                                *
 * Description:                                                                   *
 *      Calibration parameter vector, Jones chain J = G H Z F and the             *
 *      noiseless visibilities it produces.                                       *
 *                                                                                *
 * Authors:                                                                       *
 *      RobustCal group                                                           *
 *                                                                                *
 * Redistribution and use in source and binary forms, with or without             *
 * modification, are permitted according to the terms listed in the file          *
 * LICENSE.                                                                       *
 **********************************************************************************
"""

import re
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import polynomial

from errors import ParameterError
from logger import Logger
from scene import coherency_all, known_effects_all

log = Logger('Jones')


def wrap_angle(x):
    """
    Map angles onto (-pi, pi]
    """
    x = np.asarray(x, dtype=float)
    return np.pi - np.mod(np.pi - x, 2 * np.pi)


def vec(X):
    """
    Column-stacking vec of the trailing 2x2 block: (X00, X10, X01, X11)
    """
    X = np.asarray(X)
    return np.swapaxes(X, -1, -2).reshape(X.shape[:-2] + (4,))


@dataclass
class ThetaVector:
    """
    Calibration parameters at one frequency.

    faraday and phase are D x M real arrays (radians), gains is an M x 2 complex
    array. The phase is stored as an angle; exp(j phase) is applied when the
    Jones matrices are composed.
    """
    faraday: np.ndarray
    phase: np.ndarray
    gains: np.ndarray

    def __post_init__(self):
        self.faraday = np.array(self.faraday, dtype=float)
        self.phase = np.array(self.phase, dtype=float)
        self.gains = np.array(self.gains, dtype=complex)
        if self.faraday.ndim != 2 or self.faraday.shape != self.phase.shape:
            raise ParameterError(f"faraday {self.faraday.shape} and phase {self.phase.shape} must both be D x M")
        if self.gains.shape != (self.faraday.shape[1], 2):
            raise ParameterError(f"gains must be M x 2, got {self.gains.shape}")

    @property
    def nSources(self):
        return self.faraday.shape[0]

    @property
    def nAntennas(self):
        return self.faraday.shape[1]

    @property
    def size(self):
        return 2 * self.nSources * self.nAntennas + 4 * self.nAntennas

    @classmethod
    def identity(cls, D, M):
        """
        No rotation, no phase, unit gains
        """
        return cls(np.zeros((D, M)), np.zeros((D, M)), np.ones((M, 2), dtype=complex))

    def copy(self):
        return ThetaVector(self.faraday.copy(), self.phase.copy(), self.gains.copy())

    def toArray(self):
        """
        Real packing used by the solver: faraday (i-major), phases (i-major),
        then Re g0, Im g0, Re g1, Im g1 per antenna
        """
        g = np.stack([self.gains.real, self.gains.imag], axis=-1).reshape(-1)
        return np.concatenate([self.faraday.ravel(), self.phase.ravel(), g])

    @classmethod
    def fromArray(cls, x, D, M):
        """
        Inverse of toArray()

        @param x Real vector of size 2DM + 4M
        @param D Number of calibrators
        @param M Number of antennas
        """
        x = np.asarray(x, dtype=float)
        if x.shape != (2 * D * M + 4 * M,):
            raise ParameterError(f"expected a vector of size {2*D*M + 4*M}, got {x.shape}")
        nDM = D * M
        g = x[2 * nDM:].reshape(M, 2, 2)
        return cls(x[:nDM].reshape(D, M), x[nDM:2 * nDM].reshape(D, M), g[..., 0] + 1j * g[..., 1])

    def normalized(self):
        """
        Copy with every angle wrapped onto (-pi, pi]
        """
        if not (np.all(np.isfinite(self.faraday)) and np.all(np.isfinite(self.phase))):
            raise ParameterError("cannot normalize non-finite angles")
        return ThetaVector(wrap_angle(self.faraday), wrap_angle(self.phase), self.gains.copy())

    def dumps(self):
        """
        Labeled text serialization, one parameter per line, 1-based indices
        """
        lines = []
        D, M = self.faraday.shape
        for i in range(D):
            for p in range(M):
                lines.append(f"faraday[{i+1},{p+1}] = {float(self.faraday[i, p])!r}")
        for i in range(D):
            for p in range(M):
                lines.append(f"phase[{i+1},{p+1}] = {float(self.phase[i, p])!r}")
        for p in range(M):
            for c in range(2):
                lines.append(f"gain_real[{p+1},{c+1}] = {float(self.gains[p, c].real)!r}")
                lines.append(f"gain_imag[{p+1},{c+1}] = {float(self.gains[p, c].imag)!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text):
        """
        Parse the output of dumps()

        @param text The serialized parameters
        """
        pattern = re.compile(r"^(faraday|phase|gain_real|gain_imag)\[(\d+),(\d+)\]\s*=\s*(\S+)$")
        entries = []
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            match = pattern.match(line)
            if match is None:
                raise ParameterError(f"cannot parse parameter line '{line}'")
            entries.append((match.group(1), int(match.group(2)) - 1, int(match.group(3)) - 1, float(match.group(4))))

        D = 1 + max((i for kind, i, _, _ in entries if kind == "faraday"), default=-1)
        M = 1 + max((p for kind, p, _, _ in entries if kind.startswith("gain")), default=-1)
        theta = cls.identity(D, M)
        theta.gains[:] = 0
        for kind, a, b, value in entries:
            if kind == "faraday":
                theta.faraday[a, b] = value
            elif kind == "phase":
                theta.phase[a, b] = value
            elif kind == "gain_real":
                theta.gains[a, b] += value
            else:
                theta.gains[a, b] += 1j * value
        return theta


def faraday_matrix(angle):
    """
    Rotation [[cos, -sin], [sin, cos]]; vectorized over the shape of angle
    """
    c, s = np.cos(angle), np.sin(angle)
    return np.stack([np.stack([c, -s], axis=-1), np.stack([s, c], axis=-1)], axis=-2)


def faraday_derivative(angle):
    """
    dF/d(angle) = [[-sin, -cos], [cos, -sin]]
    """
    c, s = np.cos(angle), np.sin(angle)
    return np.stack([np.stack([-s, -c], axis=-1), np.stack([c, -s], axis=-1)], axis=-2)


def direction_terms(theta, H):
    """
    A_{i,p} = H_{i,p} Z_{i,p} F_{i,p}, the direction-dependent part of the chain

    @param theta ThetaVector
    @param H Known effects, shape (D, M, 2, 2)
    @return complex array (D, M, 2, 2)
    """
    Z = np.exp(1j * theta.phase)[..., None, None]
    return H @ (Z * faraday_matrix(theta.faraday))


def compose_all(theta, H):
    """
    Every Jones matrix J_{i,p} = G_p H_{i,p} Z_{i,p} F_{i,p}

    @return complex array (D, M, 2, 2)
    """
    A = direction_terms(theta, H)
    return theta.gains[None, :, :, None] * A


def compose_jones(theta, H, i, p):
    """
    Single Jones matrix of source i seen by antenna p

    @param theta ThetaVector
    @param H Known effects (D, M, 2, 2)
    @param i Source index
    @param p Antenna index
    """
    D, M = theta.faraday.shape
    if not (0 <= i < D and 0 <= p < M):
        raise ParameterError(f"(source, antenna) = ({i}, {p}) out of range for D={D}, M={M}")
    G = np.diag(theta.gains[p])
    Z = np.exp(1j * theta.phase[i, p]) * np.eye(2)
    F = faraday_matrix(theta.faraday[i, p])
    return G @ H[i, p] @ Z @ F


def _checkTheta(theta, scene):
    if theta.faraday.shape != (scene.nCalibrators, scene.nAntennas):
        raise ParameterError(f"theta is {theta.faraday.shape} but the scene has "
                             f"{scene.nCalibrators} calibrators and {scene.nAntennas} antennas")


def predict_visibility(theta, scene, frequency, p, q):
    """
    Noiseless 4-vector sum_i vec(J_{i,p} C_i J_{i,q}^H) of baseline (p, q)

    @param theta ThetaVector
    @param scene Scene
    @param frequency Frequency in Hz
    @param p First antenna
    @param q Second antenna, p < q
    """
    if not p < q:
        raise ParameterError(f"baselines are ordered p < q, got ({p}, {q})")
    if not 0 <= p or not q < scene.nAntennas:
        raise ParameterError(f"antenna index out of range: ({p}, {q})")
    _checkTheta(theta, scene)
    H = known_effects_all(scene, frequency)
    C = coherency_all(scene.calibrators)
    total = np.zeros((2, 2), dtype=complex)
    for i in range(scene.nCalibrators):
        Jp = compose_jones(theta, H, i, p)
        Jq = compose_jones(theta, H, i, q)
        total += Jp @ C[i] @ Jq.conj().T
    return vec(total)


def predict_visibility_kron(theta, scene, frequency, p, q):
    """
    Same as predict_visibility() through (J_{i,q}^* kron J_{i,p}) vec(C_i)
    """
    if not p < q:
        raise ParameterError(f"baselines are ordered p < q, got ({p}, {q})")
    if not 0 <= p or not q < scene.nAntennas:
        raise ParameterError(f"antenna index out of range: ({p}, {q})")
    _checkTheta(theta, scene)
    H = known_effects_all(scene, frequency)
    C = coherency_all(scene.calibrators)
    total = np.zeros(4, dtype=complex)
    for i in range(scene.nCalibrators):
        Jp = compose_jones(theta, H, i, p)
        Jq = compose_jones(theta, H, i, q)
        total += np.kron(Jq.conj(), Jp) @ vec(C[i])
    return total


@dataclass
class VisibilitySet:
    """
    Stacked cross-correlations x^[f]: one 4-vector per baseline in the order
    of ArrayConfig.baselines
    """
    frequency: float
    data: np.ndarray

    def __post_init__(self):
        self.data = np.array(self.data, dtype=complex)
        if self.data.ndim != 2 or self.data.shape[1] != 4:
            raise ParameterError(f"visibilities must be B x 4, got {self.data.shape}")

    @property
    def nBaselines(self):
        return self.data.shape[0]

    def stacked(self):
        """
        The 4B-vector of the full observation
        """
        return self.data.reshape(-1)

    def copy(self):
        return VisibilitySet(self.frequency, self.data.copy())


def source_visibilities(J, C, antenna1, antenna2):
    """
    Per-source contributions vec(J_{i,p} C_i J_{i,q}^H)

    @param J Jones matrices (D, M, 2, 2)
    @param C Coherencies (D, 2, 2)
    @param antenna1 p index of every baseline
    @param antenna2 q index of every baseline
    @return complex array (D, B, 4)
    """
    Jp = J[:, antenna1]
    Jq = J[:, antenna2]
    S = np.einsum("ibxy,iyz,ibwz->ibxw", Jp, C, Jq.conj())
    return vec(S)


def predict_all(theta, scene, frequency, sources=None):
    """
    Noiseless visibilities of every baseline at one frequency

    @param theta ThetaVector (D x M must match the sources)
    @param scene Scene
    @param frequency Frequency in Hz
    @param sources Sources to predict; defaults to the calibrators
    """
    sources = scene.calibrators if sources is None else sources
    if theta.faraday.shape != (len(sources), scene.nAntennas):
        raise ParameterError(f"theta is {theta.faraday.shape} for {len(sources)} sources and {scene.nAntennas} antennas")
    if not sources:
        return VisibilitySet(frequency, np.zeros((scene.nBaselines, 4), dtype=complex))
    H = known_effects_all(scene, frequency, sources)
    J = compose_all(theta, H)
    S = source_visibilities(J, coherency_all(sources), scene.array.antenna1, scene.array.antenna2)
    return VisibilitySet(frequency, S.sum(axis=0))


def normalized_frequencies(frequencies):
    """
    Affine map of the channel frequencies onto [-1, 1]; a single channel maps to 0
    """
    f = np.asarray(frequencies, dtype=float)
    if f.size == 1 or np.ptp(f) == 0:
        return np.zeros_like(f)
    return 2 * (f - f.min()) / np.ptp(f) - 1


def random_theta_track(rng, D, M, frequencies, order=2, faradayScale=0.5, gainSpread=0.2, slopeScale=0.1):
    """
    Ground-truth parameters at each frequency, every component a polynomial of the
    given order in the normalized frequency.

    @param rng numpy Generator
    @param D Number of calibrators
    @param M Number of antennas
    @param frequencies Channel frequencies
    @param order Polynomial order of the frequency dependence
    @param faradayScale Faraday angles drawn in [-faradayScale, faradayScale]
    @param gainSpread Gain amplitudes drawn in [1 - gainSpread, 1 + gainSpread]
    @param slopeScale Scale of the higher-order coefficients relative to the constant term
    """
    nDM = D * M
    constant = np.concatenate([
        rng.uniform(-faradayScale, faradayScale, nDM),
        rng.uniform(-np.pi, np.pi, nDM),
    ])
    amplitude = rng.uniform(1 - gainSpread, 1 + gainSpread, (M, 2))
    gainPhase = rng.uniform(-np.pi / 4, np.pi / 4, (M, 2))
    g = amplitude * np.exp(1j * gainPhase)
    constant = np.concatenate([constant, np.stack([g.real, g.imag], axis=-1).reshape(-1)])

    coefficients = [constant]
    for _ in range(order):
        coefficients.append(slopeScale * rng.standard_normal(constant.size) * np.maximum(np.abs(constant), 0.1))
    fTilde = normalized_frequencies(frequencies)
    values = polynomial.polyval(fTilde, np.array(coefficients)).T
    log.debug(f"truth track: D={D} M={M} channels={len(fTilde)} order={order}")
    return [ThetaVector.fromArray(v, D, M) for v in values]
