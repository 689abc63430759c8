"""
 **********************************************************************************
 * Project: RobustCal - robust calibration of radio interferometers               *
 * Package: RobustCal                                                             *
 * Module : scene                                                                 *
 *                                                                                *
 * Description:                                                                   *
 *      Array geometry, sky model (bright calibrators and weak background         *
 *      sources), source coherencies and the known per-antenna effects H.         *
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
from dataclasses import dataclass, field
from enum import Enum
from itertools import combinations
from typing import Dict, List, Tuple

import numpy as np
from scipy.constants import speed_of_light

from errors import ParameterError
from logger import Logger

log = Logger('Scene')

# background sources are drawn in [BACKGROUND_FLUX_RANGE] x (weakest calibrator flux)
CALIBRATOR_FLUX_RANGE = (0.5, 1.5)
BACKGROUND_FLUX_RANGE = (0.01, 0.1)


class SourceRole(Enum):
    CALIBRATOR = "calibrator"
    BACKGROUND = "background"


@dataclass(frozen=True)
class Source:
    """
    Point source with direction cosines (l, m) and a nonnegative flux
    """
    l: float
    m: float
    flux: float
    role: SourceRole = SourceRole.CALIBRATOR

    def __post_init__(self):
        if self.l**2 + self.m**2 > 1.0:
            raise ParameterError(f"direction cosines ({self.l}, {self.m}) lie outside the unit disc")
        if self.flux < 0:
            raise ParameterError(f"source flux must be nonnegative, got {self.flux}")


@dataclass
class ArrayConfig:
    """
    Antenna positions (meters, M x 2) and the baseline map (p,q) -> k for p < q,
    ordered (0,1), (0,2), ..., (M-2, M-1)
    """
    positions: np.ndarray
    baselines: List[Tuple[int, int]] = field(init=False)
    baselineIndex: Dict[Tuple[int, int], int] = field(init=False)

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float)
        if self.positions.ndim != 2 or self.positions.shape[1] != 2:
            raise ParameterError(f"antenna positions must be M x 2, got shape {self.positions.shape}")
        if self.positions.shape[0] < 2:
            raise ParameterError("an interferometer needs at least two antennas")
        self.baselines = list(combinations(range(self.positions.shape[0]), 2))
        self.baselineIndex = {pq: k for k, pq in enumerate(self.baselines)}

    @property
    def nAntennas(self):
        return self.positions.shape[0]

    @property
    def nBaselines(self):
        return len(self.baselines)

    @property
    def antenna1(self):
        return np.array([p for p, _ in self.baselines], dtype=int)

    @property
    def antenna2(self):
        return np.array([q for _, q in self.baselines], dtype=int)


@dataclass
class Scene:
    """
    Everything the measurement equation needs that is not a calibration parameter
    """
    array: ArrayConfig
    calibrators: List[Source]
    background: List[Source] = field(default_factory=list)
    frequencies: List[float] = field(default_factory=lambda: [150e6])

    @property
    def nCalibrators(self):
        return len(self.calibrators)

    @property
    def nAntennas(self):
        return self.array.nAntennas

    @property
    def nBaselines(self):
        return self.array.nBaselines

    def withBackground(self, background):
        """
        Copy of the scene with another set of weak sources

        @param background List of background sources
        """
        return Scene(self.array, list(self.calibrators), list(background), list(self.frequencies))

    def dumps(self):
        """
        Deterministic text serialization (JSON, sorted keys, repr floats)
        """
        def srcDict(s):
            return {"l": s.l, "m": s.m, "flux": s.flux, "role": s.role.value}

        payload = {
            "positions": self.array.positions.tolist(),
            "calibrators": [srcDict(s) for s in self.calibrators],
            "background": [srcDict(s) for s in self.background],
            "frequencies": [float(f) for f in self.frequencies],
        }
        return json.dumps(payload, sort_keys=True, indent=1)

    @classmethod
    def loads(cls, text):
        """
        Restore a scene written by dumps()

        @param text The JSON text
        """
        payload = json.loads(text)

        def srcObj(d):
            return Source(d["l"], d["m"], d["flux"], SourceRole(d["role"]))

        return cls(ArrayConfig(np.array(payload["positions"])),
                   [srcObj(d) for d in payload["calibrators"]],
                   [srcObj(d) for d in payload["background"]],
                   payload["frequencies"])


def _checkCounts(M, D, Dprime):
    if M < 2:
        raise ParameterError(f"need M >= 2 antennas, got {M}")
    if D < 1:
        raise ParameterError(f"need D >= 1 calibrators, got {D}")
    if Dprime < 0:
        raise ParameterError(f"need D' >= 0 background sources, got {Dprime}")


def _drawDirections(rng, n, fieldRadius):
    # uniform over the disc of radius fieldRadius
    r = fieldRadius * np.sqrt(rng.uniform(0.0, 1.0, n))
    phi = rng.uniform(0.0, 2 * np.pi, n)
    return r * np.cos(phi), r * np.sin(phi)


def _drawBackground(rng, n, weakestFlux, fieldRadius):
    l, m = _drawDirections(rng, n, fieldRadius)
    flux = rng.uniform(*BACKGROUND_FLUX_RANGE, n) * weakestFlux
    return [Source(float(l[k]), float(m[k]), float(flux[k]), SourceRole.BACKGROUND) for k in range(n)]


def make_scene(seed, M, D, Dprime, extent=1000.0, fieldRadius=0.05):
    """
    Draw an array and a sky: antennas uniform in an extent x extent square,
    D calibrators with flux in CALIBRATOR_FLUX_RANGE and D' background sources
    at most a tenth of the weakest calibrator. Pure function of the seed.

    @param seed Integer seed
    @param M Number of antennas
    @param D Number of calibrators
    @param Dprime Number of background sources
    @param extent Side of the square holding the antennas (meters)
    @param fieldRadius Radius of the disc, in direction cosines, holding the sources
    """
    _checkCounts(M, D, Dprime)
    if not 0 < fieldRadius <= 1:
        raise ParameterError(f"field radius must lie in (0, 1], got {fieldRadius}")

    rng = np.random.default_rng(seed)
    positions = rng.uniform(-extent / 2, extent / 2, size=(M, 2))
    l, m = _drawDirections(rng, D, fieldRadius)
    flux = rng.uniform(*CALIBRATOR_FLUX_RANGE, D)
    calibrators = [Source(float(l[k]), float(m[k]), float(flux[k]), SourceRole.CALIBRATOR) for k in range(D)]
    background = _drawBackground(rng, Dprime, float(flux.min()), fieldRadius)

    log.debug(f"make_scene: seed={seed} M={M} D={D} D'={Dprime} baselines={M*(M-1)//2}")
    return ArrayConfig(positions), calibrators + background


def build_scene(seed, M, D, Dprime, frequencies=(150e6,), extent=1000.0, fieldRadius=0.05):
    """
    make_scene() wrapped into a Scene with its frequency list
    """
    array, sources = make_scene(seed, M, D, Dprime, extent, fieldRadius)
    calibrators = [s for s in sources if s.role is SourceRole.CALIBRATOR]
    background = [s for s in sources if s.role is SourceRole.BACKGROUND]
    return Scene(array, calibrators, background, [float(f) for f in frequencies])


def draw_background(scene, rng, count=None, fieldRadius=0.05):
    """
    New realization of the weak sources of a scene, keeping array and calibrators

    @param scene The scene to redraw
    @param rng numpy Generator
    @param count Number of sources; defaults to the current number
    @param fieldRadius Radius of the source disc
    """
    n = len(scene.background) if count is None else count
    weakest = min(s.flux for s in scene.calibrators)
    return scene.withBackground(_drawBackground(rng, n, weakest, fieldRadius))


def coherency(source):
    """
    Unpolarized coherency (flux/2) I_2
    """
    return 0.5 * source.flux * np.eye(2, dtype=complex)


def known_effects(array, source, frequency):
    """
    Geometric-delay term H_{i,p} = exp(-j 2 pi (f/c)(u_p l + v_p m)) I_2 for every
    antenna p; the primary beam is taken as identity.

    @param array ArrayConfig
    @param source Source
    @param frequency Frequency in Hz
    @return complex array of shape (M, 2, 2)
    """
    phase = -2j * np.pi * (frequency / speed_of_light) * (array.positions @ np.array([source.l, source.m]))
    return np.exp(phase)[:, None, None] * np.eye(2)[None, :, :]


def known_effects_all(scene, frequency, sources=None):
    """
    Stack of known_effects() for a list of sources (defaults to the calibrators)

    @return complex array of shape (D, M, 2, 2)
    """
    sources = scene.calibrators if sources is None else sources
    if not sources:
        return np.zeros((0, scene.nAntennas, 2, 2), dtype=complex)
    return np.stack([known_effects(scene.array, s, frequency) for s in sources])


def coherency_all(sources):
    """
    @return complex array of shape (D, 2, 2)
    """
    if not sources:
        return np.zeros((0, 2, 2), dtype=complex)
    return np.stack([coherency(s) for s in sources])
