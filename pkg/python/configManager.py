"""
 **********************************************************************************
 * Project: RobustCal - robust calibration of radio interferometers               *
 * Package: RobustCal                                                             *
 * Class  : ConfigManager                                                         *
 *                                                                                *
 * Description:                                                                   *
 *      Class to define a config-manager (singleton class) that holds every       *
 *      tunable of a run and turns it into the typed option objects of the        *
 *      calibration modules.                                                      *
 *                                                                                *
 * Authors:                                                                       *
 *      RobustCal group                                                           *
 *                                                                                *
 * Redistribution and use in source and binary forms, with or without             *
 * modification, are permitted according to the terms listed in the file          *
 * LICENSE.                                                                       *
 **********************************************************************************
"""

import configparser
import os

import numpy as np

from bench import KNOWN_ESTIMATORS, ExperimentConfig
from cmdLineUtils import parseBool, parseEstimators, parseFrequencies, parseSnrGrid, parseTracked
from errors import ParameterError
from imape import ImapeOptions
from logger import Logger
from noise import TextureFamily
from scene import build_scene
from solver import ConsensusSettings, SolverOptions
from texture import initial_prior

log = Logger('ConfigManager')


def _estimatorList(value):
    return parseEstimators(value, KNOWN_ESTIMATORS)


def _optionalPath(value):
    value = value.strip()
    return value or None


# INI key -> (attribute, converter), per section
CONFIG_KEYS = {
    "scene": {
        "antennas": ("nAntennas", int),
        "calibrators": ("nCalibrators", int),
        "background": ("nBackground", int),
        "seed": ("sceneSeed", int),
        "extent": ("extent", float),
        "fieldRadius": ("fieldRadius", float),
        "frequencies": ("frequencies", parseFrequencies),
    },
    "noise": {
        "prior": ("priorFamily", str),
        "noiseFactor": ("noiseFactor", float),
        "truthOrder": ("truthOrder", int),
    },
    "solver": {
        "maxIterations": ("solverMaxIterations", int),
        "gradientTolerance": ("gradientTolerance", float),
        "initialDamping": ("initialDamping", float),
        "dampingUp": ("dampingUp", float),
        "dampingDown": ("dampingDown", float),
        "stepTolerance": ("stepTolerance", float),
        "referenceAntenna": ("referenceAntenna", parseBool),
    },
    "imape": {
        "maxCycles": ("maxCycles", int),
        "tolerance": ("cycleTolerance", float),
        "freezeOmega": ("freezeOmega", parseBool),
        "initMode": ("initMode", str),
        "perturbation": ("perturbation", float),
        "checkpoint": ("checkpoint", _optionalPath),
    },
    "consensus": {
        "enabled": ("consensusEnabled", parseBool),
        "order": ("consensusOrder", int),
        "rho": ("consensusRho", float),
        "maxIterations": ("consensusIterations", int),
        "tolerance": ("consensusTolerance", float),
    },
    "experiment": {
        "masterSeed": ("masterSeed", int),
        "snrGrid": ("snrGrid", parseSnrGrid),
        "trials": ("trials", int),
        "estimators": ("estimators", _estimatorList),
        "tracked": ("tracked", parseTracked),
        "threads": ("threads", int),
        "outputDir": ("outputDir", str),
    },
}


class ConfigManager:
    """
    Singleton manager class to store the configuration information
    """
    _instance = None

    def __new__(cls, *args, **kwargs):
        """
        Make singleton by only instanciating once
        """
        if not cls._instance:
            cls._instance = super().__new__(cls, *args, **kwargs)
        else:
            raise Exception("Only one instance allowed")

        return cls._instance

    def __init__(self):
        self.reset()

    def reset(self):
        """
        Configuration variables
        """
        self.configFiles = [] # files read so far, in order

        # scene
        self.nAntennas = 8 # M
        self.nCalibrators = 2 # D, bright sources with known coherency
        self.nBackground = 4 # D', weak unmodeled sources
        self.sceneSeed = 1 # seed of array and calibrators
        self.extent = 1000.0 # side of the antenna square, meters
        self.fieldRadius = 0.05 # radius of the source disc in direction cosines
        self.frequencies = [130e6, 140e6, 150e6, 160e6] # channel frequencies, Hz

        # noise
        self.priorFamily = "cauchy" # texture prior of the single-run commands
        self.noiseFactor = 1.0 # kappa in the SNR formula
        self.truthOrder = 2 # polynomial order of the simulated parameters in frequency

        # solver
        self.solverMaxIterations = 100
        self.gradientTolerance = 1e-10
        self.initialDamping = 1e-3 # relative to max diag(J^T J)
        self.dampingUp = 10.0
        self.dampingDown = 0.1
        self.stepTolerance = 1e-12
        self.referenceAntenna = False # fix phase[i, 0]

        # imape
        self.maxCycles = 50
        self.cycleTolerance = 1e-6
        self.freezeOmega = False
        self.initMode = "cold" # cold = least squares from identity, perturbed = truth + perturbation
        self.perturbation = 1e-3
        self.checkpoint = None # state file rewritten after every cycle

        # consensus
        self.consensusEnabled = False
        self.consensusOrder = 2
        self.consensusRho = 1.0
        self.consensusIterations = 200
        self.consensusTolerance = 1e-6

        # experiment
        self.masterSeed = 2024
        self.snrGrid = [float(s) for s in range(-10, 31, 5)]
        self.trials = 200
        self.estimators = ["imape-k", "imape-student", "imape-cauchy", "imape-laplace", "imape-igcg", "gaussian-ls"]
        self.tracked = parseTracked("gain_imag:3:1,phase:1:2")
        self.threads = 1
        self.outputDir = "results"

    def readConfigFile(self, path):
        """
        Read an INI file with the sections of CONFIG_KEYS; keys are case sensitive

        @param path The file to read
        """
        if not os.path.isfile(path):
            raise ParameterError(f"config file '{path}' does not exist")
        parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        parser.optionxform = str
        parser.read(path)

        for section in parser.sections():
            if section not in CONFIG_KEYS:
                raise ParameterError(f"{path}: unknown section [{section}], expected one of {list(CONFIG_KEYS)}")
            keys = CONFIG_KEYS[section]
            for key, raw in parser.items(section):
                if key not in keys:
                    raise ParameterError(f"{path}: unknown key '{key}' in [{section}], expected one of {list(keys)}")
                attr, convert = keys[key]
                try:
                    value = convert(raw)
                except ValueError as err:
                    raise ParameterError(f"{path}: bad value '{raw}' for {section}.{key}: {err}") from None
                setattr(self, attr, value)
                log.debug(f"{section}.{key} = {value!r}")
        self.configFiles.append(path)
        log.info(f"read configuration from {path}")

    def setSnrGrid(self, grid):
        """
        @param grid List of SNR values or a string understood by parseSnrGrid
        """
        self.snrGrid = parseSnrGrid(grid) if isinstance(grid, str) else [float(s) for s in grid]

    def setEstimators(self, estimators):
        self.estimators = _estimatorList(estimators) if isinstance(estimators, str) else list(estimators)

    def setTracked(self, tracked):
        self.tracked = parseTracked(tracked) if isinstance(tracked, str) else list(tracked)

    def setFrequencies(self, frequencies):
        self.frequencies = parseFrequencies(frequencies) if isinstance(frequencies, str) else [float(f) for f in frequencies]

    def prior(self, family=None):
        """
        Starting texture prior of the given family (default priorFamily)
        """
        name = self.priorFamily if family is None else family
        try:
            fam = TextureFamily(name)
        except ValueError:
            raise ParameterError(f"unknown prior '{name}', choose from {[f.value for f in TextureFamily]}") from None
        B = self.nAntennas * (self.nAntennas - 1) // 2
        return initial_prior(fam, np.ones(B))

    def sceneConfig(self):
        """
        Scene built from the scene section
        """
        return build_scene(self.sceneSeed, self.nAntennas, self.nCalibrators, self.nBackground,
                           self.frequencies, self.extent, self.fieldRadius)

    def solverOptions(self):
        return SolverOptions(maxIterations=self.solverMaxIterations, gradientTolerance=self.gradientTolerance,
                             initialDamping=self.initialDamping, dampingUp=self.dampingUp,
                             dampingDown=self.dampingDown, stepTolerance=self.stepTolerance,
                             referenceAntenna=self.referenceAntenna)

    def consensusSettings(self):
        return ConsensusSettings(enabled=self.consensusEnabled, order=self.consensusOrder, rho=self.consensusRho,
                                 maxIterations=self.consensusIterations, tolerance=self.consensusTolerance)

    def imapeOptions(self):
        return ImapeOptions(maxCycles=self.maxCycles, tolerance=self.cycleTolerance, freezeOmega=self.freezeOmega,
                            initMode=self.initMode, perturbation=self.perturbation, threads=self.threads,
                            checkpoint=self.checkpoint, solver=self.solverOptions(),
                            consensus=self.consensusSettings())

    def experimentConfig(self):
        return ExperimentConfig(nAntennas=self.nAntennas, nCalibrators=self.nCalibrators,
                                nBackground=self.nBackground, sceneSeed=self.sceneSeed, masterSeed=self.masterSeed,
                                frequencies=list(self.frequencies), snrGrid=list(self.snrGrid), trials=self.trials,
                                estimators=list(self.estimators), tracked=list(self.tracked),
                                noiseFactor=self.noiseFactor, extent=self.extent, fieldRadius=self.fieldRadius,
                                truthOrder=self.truthOrder, threads=self.threads, outputDir=self.outputDir,
                                solver=self.solverOptions(), imape=self.imapeOptions())

    def summary(self):
        """
        Human-readable dump of the configuration, one key per line
        """
        lines = []
        for section, keys in CONFIG_KEYS.items():
            lines.append(f"[{section}]")
            for key, (attr, _) in keys.items():
                value = getattr(self, attr)
                if attr == "tracked":
                    value = ",".join(f"{p.kind}:{p.first}:{p.second}" for p in value)
                elif isinstance(value, list):
                    value = ",".join(repr(v) if isinstance(v, float) else str(v) for v in value)
                lines.append(f"{key} = {'' if value is None else value}")
            lines.append("")
        return "\n".join(lines)


if "configMgr" in vars():
    raise RuntimeError("ConfigManager already exists, no multiple imports allowed!")

# Instantiate the singleton

configMgr = ConfigManager()
