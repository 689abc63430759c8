"""
 **********************************************************************************
 * Project: RobustCal - robust calibration of radio interferometers               *
 * Package: RobustCal                                                             *
 * Module : bench                                                                 *
 *                                                                                *
 * Description:                                                                   *
 *      Monte-Carlo experiment harness: gauge alignment of estimates, SNR sweep   *
 *      over every configured estimator, CSV persistence and the MSE tables and   *
 *      gnuplot scripts built from it.                                            *
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
import os
import time
from dataclasses import dataclass, field
from multiprocessing import Pool
from typing import Dict, List

import numpy as np
import pandas as pd
from scipy import optimize

from errors import ParameterError, RobustCalError
from imape import ImapeOptions, perturbed_theta, run_gaussian_ls, run_imape
from jones import ThetaVector, VisibilitySet, predict_all, random_theta_track, wrap_angle
from logger import Logger
from noise import SNR_FORMULA, TextureFamily, contaminate, sigma_for_snr, trial_seed
from scene import Scene, build_scene, draw_background
from solver import SolverOptions
from texture import initial_prior

log = Logger('Bench')

GAUSSIAN_LS = "gaussian-ls"
IMAPE_ESTIMATORS = {
    "imape-k": TextureFamily.KGAMMA,
    "imape-student": TextureFamily.STUDENT,
    "imape-cauchy": TextureFamily.CAUCHY,
    "imape-laplace": TextureFamily.LAPLACE,
    "imape-igcg": TextureFamily.IGCG,
    "imape-gaussian": TextureFamily.GAUSSIAN,
}
KNOWN_ESTIMATORS = tuple(IMAPE_ESTIMATORS) + (GAUSSIAN_LS,)
DEFAULT_ESTIMATORS = ("imape-k", "imape-student", "imape-cauchy", "imape-laplace", "imape-igcg", GAUSSIAN_LS)

PARAMETER_KINDS = ("faraday", "phase", "gain_real", "gain_imag")

ROWS_FILE = "rows.csv"
TIMING_FILE = "timing.csv"
METADATA_FILE = "metadata.json"
SUMMARY_FILE = "summary.csv"


@dataclass(frozen=True)
class TrackedParameter:
    """
    One scalar of theta, with 1-based indices:
      faraday/phase        (source, antenna)
      gain_real/gain_imag  (antenna, component)
    """
    kind: str
    first: int
    second: int

    def __post_init__(self):
        if self.kind not in PARAMETER_KINDS:
            raise ParameterError(f"unknown parameter kind '{self.kind}', choose from {PARAMETER_KINDS}")
        if self.first < 1 or self.second < 1:
            raise ParameterError(f"parameter indices are 1-based, got ({self.first}, {self.second})")

    @classmethod
    def parse(cls, text):
        """
        @param text "kind:first:second", e.g. "gain_imag:3:1"
        """
        parts = text.strip().split(":")
        if len(parts) != 3:
            raise ParameterError(f"cannot parse tracked parameter '{text}', expected kind:first:second")
        try:
            return cls(parts[0], int(parts[1]), int(parts[2]))
        except ValueError:
            raise ParameterError(f"non-integer index in tracked parameter '{text}'") from None

    @property
    def label(self):
        return f"{self.kind}[{self.first},{self.second}]"

    @property
    def column(self):
        return f"se_{self.kind}_{self.first}_{self.second}"

    @property
    def isAngle(self):
        return self.kind in ("faraday", "phase")

    def check(self, D, M):
        if self.kind in ("faraday", "phase"):
            ok = self.first <= D and self.second <= M
        else:
            ok = self.first <= M and self.second <= 2
        if not ok:
            raise ParameterError(f"tracked parameter {self.label} out of range for D={D}, M={M}")

    def value(self, theta):
        i, j = self.first - 1, self.second - 1
        if self.kind == "faraday":
            return float(theta.faraday[i, j])
        if self.kind == "phase":
            return float(theta.phase[i, j])
        if self.kind == "gain_real":
            return float(theta.gains[i, j].real)
        return float(theta.gains[i, j].imag)

    def squaredError(self, estimate, truth):
        diff = self.value(estimate) - self.value(truth)
        if self.isAngle:
            diff = float(wrap_angle(diff))
        return diff * diff


DEFAULT_TRACKED = (TrackedParameter("gain_imag", 3, 1), TrackedParameter("phase", 1, 2))


def theta_error(estimate, truth):
    """
    Total squared error; angle differences are wrapped onto (-pi, pi]
    """
    dF = wrap_angle(estimate.faraday - truth.faraday)
    dP = wrap_angle(estimate.phase - truth.phase)
    dG = estimate.gains - truth.gains
    return float(np.sum(dF**2) + np.sum(dP**2) + np.sum(np.abs(dG)**2))


def _applyGauge(theta, alpha, beta, gamma):
    """
    faraday[i,p] + gamma_i, phase[i,p] + alpha_p + beta_i, gains[p] e^{-j alpha_p}
    """
    return ThetaVector(theta.faraday + gamma[:, None],
                       theta.phase + alpha[None, :] + beta[:, None],
                       theta.gains * np.exp(-1j * alpha)[:, None])


def _circularMean(angles, axis):
    return np.angle(np.sum(np.exp(1j * angles), axis=axis))


def align(estimate, truth):
    """
    Move an estimate along the gauge orbit of the forward model (per-antenna
    phase exchanged with the gains, per-direction phase, per-direction Faraday
    shift, and the joint pi flip of a Faraday angle and its phase) to the point
    closest to the truth. Never returns a worse fit than the input.

    @param estimate ThetaVector
    @param truth ThetaVector of the same dimensions
    """
    if estimate.faraday.shape != truth.faraday.shape:
        raise ParameterError(f"cannot align {estimate.faraday.shape} against {truth.faraday.shape}")
    D, M = truth.faraday.shape

    # Faraday shift modulo pi, then flip single angles onto the nearer branch
    gamma = 0.5 * _circularMean(2 * (truth.faraday - estimate.faraday), axis=1)
    shifted = _applyGauge(estimate, np.zeros(M), np.zeros(D), gamma)
    flip = np.abs(wrap_angle(shifted.faraday + np.pi - truth.faraday)) < np.abs(wrap_angle(shifted.faraday - truth.faraday))
    shifted.faraday = shifted.faraday + np.pi * flip
    shifted.phase = shifted.phase + np.pi * flip

    alpha = -np.angle(np.sum(truth.gains * np.conj(shifted.gains), axis=1))
    beta = _circularMean(truth.phase - shifted.phase - alpha[None, :], axis=1)

    def residual(x):
        a, b, g = x[:M], x[M:M + D], x[M + D:]
        moved = _applyGauge(shifted, a, b, g)
        dG = (moved.gains - truth.gains).ravel()
        return np.concatenate([wrap_angle(moved.faraday - truth.faraday).ravel(),
                               wrap_angle(moved.phase - truth.phase).ravel(),
                               dG.real, dG.imag])

    x0 = np.concatenate([alpha, beta, np.zeros(D)])
    fit = optimize.least_squares(residual, x0, xtol=1e-15, ftol=1e-15, gtol=1e-15)
    aligned = _applyGauge(shifted, fit.x[:M], fit.x[M:M + D], fit.x[M + D:])
    if theta_error(aligned, truth) < theta_error(estimate, truth):
        return aligned
    return estimate.copy()


@dataclass
class ExperimentConfig:
    nAntennas: int = 8
    nCalibrators: int = 2
    nBackground: int = 4
    sceneSeed: int = 1
    masterSeed: int = 2024
    frequencies: List[float] = field(default_factory=lambda: [130e6, 140e6, 150e6, 160e6])
    snrGrid: List[float] = field(default_factory=lambda: [float(s) for s in range(-10, 31, 5)])
    trials: int = 200
    estimators: List[str] = field(default_factory=lambda: list(DEFAULT_ESTIMATORS))
    tracked: List[TrackedParameter] = field(default_factory=lambda: list(DEFAULT_TRACKED))
    noiseFactor: float = 1.0          # kappa of the SNR formula
    extent: float = 1000.0
    fieldRadius: float = 0.05
    truthOrder: int = 2
    threads: int = 1
    outputDir: str = "results"
    solver: SolverOptions = field(default_factory=SolverOptions)
    imape: ImapeOptions = field(default_factory=ImapeOptions)

    def __post_init__(self):
        if self.trials < 1:
            raise ParameterError(f"need at least one trial per SNR point, got {self.trials}")
        if len(self.snrGrid) < 1 or np.any(np.diff(self.snrGrid) <= 0):
            raise ParameterError(f"SNR grid must be nonempty and strictly increasing, got {self.snrGrid}")
        if not self.frequencies:
            raise ParameterError("need at least one frequency")
        unknown = [e for e in self.estimators if e not in KNOWN_ESTIMATORS]
        if unknown or not self.estimators:
            raise ParameterError(f"unknown estimators {unknown}, choose from {KNOWN_ESTIMATORS}")
        if self.threads < 1:
            raise ParameterError(f"threads must be >= 1, got {self.threads}")
        if not self.tracked:
            raise ParameterError("need at least one tracked parameter")
        for p in self.tracked:
            p.check(self.nCalibrators, self.nAntennas)
        # inner solves of the IMAPE runs follow the experiment's solver options
        self.imape.solver = self.solver

    def buildScene(self):
        return build_scene(self.sceneSeed, self.nAntennas, self.nCalibrators, self.nBackground,
                           self.frequencies, self.extent, self.fieldRadius)


@dataclass
class ResultRow:
    estimator: str
    snrDb: float
    snrIndex: int
    trial: int
    seed: int
    status: str
    sigma: float
    cycles: int
    errors: Dict[str, float]
    wallTime: float = field(default=0.0, compare=False)

    @property
    def ok(self):
        return self.status == "ok"


@dataclass
class Observation:
    """
    One synthetic data set: the trial scene, the truth and the visibilities
    per frequency
    """
    scene: Scene
    truths: List[ThetaVector]
    xs: List[VisibilitySet]
    sigma: float


def simulate_observation(cfg, scene, snrDb, seed):
    """
    Background redraw, truth track, noiseless visibilities and contamination
    at the target SNR, all from one sub-seed

    @param cfg ExperimentConfig
    @param scene Scene with the persistent calibrators
    @param snrDb Target SNR
    @param seed Sub-seed of the trial
    """
    rng = np.random.default_rng(seed)
    trialScene = draw_background(scene, rng, cfg.nBackground, cfg.fieldRadius)
    truths = random_theta_track(rng, cfg.nCalibrators, cfg.nAntennas, cfg.frequencies, order=cfg.truthOrder)
    sigma = sigma_for_snr(trialScene, snrDb, cfg.noiseFactor)
    xs = [contaminate(predict_all(truth, trialScene, f), trialScene, sigma, rng)
          for truth, f in zip(truths, cfg.frequencies)]
    return Observation(trialScene, truths, xs, sigma)


def run_estimator(name, xs, scene, cfg, thetaInit=None):
    """
    @param name Estimator id, one of KNOWN_ESTIMATORS
    @return CalibrationState
    """
    if name == GAUSSIAN_LS:
        return run_gaussian_ls(xs, scene, cfg.imape, thetaInit)
    if name not in IMAPE_ESTIMATORS:
        raise ParameterError(f"unknown estimator '{name}'")
    prior = initial_prior(IMAPE_ESTIMATORS[name], np.ones(scene.nBaselines))
    return run_imape(xs, scene, prior, cfg.imape, thetaInit)


def run_trial(cfg, scene, snrIndex, trial, seed=None):
    """
    Every estimator on one synthetic observation

    @param cfg ExperimentConfig
    @param scene Scene with the persistent calibrators
    @param snrIndex Index into cfg.snrGrid
    @param trial Trial index
    @param seed Sub-seed; defaults to trial_seed(masterSeed, snrIndex, trial)
    @return list of ResultRow, one per estimator in cfg order
    """
    snrDb = float(cfg.snrGrid[snrIndex])
    seed = trial_seed(cfg.masterSeed, snrIndex, trial) if seed is None else int(seed)
    obs = simulate_observation(cfg, scene, snrDb, seed)

    thetaInit = None
    if cfg.imape.initMode == "perturbed":
        rng = np.random.default_rng([seed, 1])
        thetaInit = [perturbed_theta(t, cfg.imape.perturbation, rng) for t in obs.truths]

    rows = []
    for name in cfg.estimators:
        start = time.perf_counter()
        try:
            state = run_estimator(name, obs.xs, obs.scene, cfg, thetaInit)
            aligned = [align(est, truth) for est, truth in zip(state.thetas, obs.truths)]
            errors = {p.column: float(np.mean([p.squaredError(a, t) for a, t in zip(aligned, obs.truths)]))
                      for p in cfg.tracked}
            status, cycles = "ok", state.cycle
        except (RobustCalError, np.linalg.LinAlgError) as err:
            log.warning(f"{name} failed at SNR {snrDb} dB, trial {trial}: {err}")
            errors = {p.column: float("nan") for p in cfg.tracked}
            status, cycles = f"failed:{type(err).__name__}: {err}", -1
        rows.append(ResultRow(name, snrDb, snrIndex, trial, seed, status, obs.sigma, cycles, errors,
                              wallTime=time.perf_counter() - start))
    return rows


def replay_trial(cfg, seed, snrDb):
    """
    Rerun a single trial in isolation from the sub-seed stored in its rows

    @param cfg ExperimentConfig
    @param seed Sub-seed
    @param snrDb SNR of the trial (must be on cfg.snrGrid)
    """
    matches = [k for k, s in enumerate(cfg.snrGrid) if np.isclose(s, snrDb)]
    if not matches:
        raise ParameterError(f"SNR {snrDb} dB is not on the grid {cfg.snrGrid}")
    return run_trial(cfg, cfg.buildScene(), matches[0], -1, seed=seed)


def _runTask(task):
    cfg, sceneText, snrIndex, trial = task
    return run_trial(cfg, Scene.loads(sceneText), snrIndex, trial)


def run_sweep(cfg):
    """
    Every SNR point, trial and estimator of the configuration. Rows come back
    ordered by (SNR index, trial, estimator) whatever the number of workers.

    @param cfg ExperimentConfig
    @return list of ResultRow
    """
    scene = cfg.buildScene()
    tasks = [(cfg, scene.dumps(), k, t) for k in range(len(cfg.snrGrid)) for t in range(cfg.trials)]
    log.info(f"sweep: {len(cfg.snrGrid)} SNR points x {cfg.trials} trials x {len(cfg.estimators)} estimators "
             f"on {cfg.threads} worker(s)")
    if cfg.threads > 1:
        with Pool(processes=cfg.threads) as pool:
            results = pool.map(_runTask, tasks)
    else:
        results = [_runTask(task) for task in tasks]
    rows = [row for trialRows in results for row in trialRows]
    failed = sum(not r.ok for r in rows)
    if failed:
        log.warning(f"{failed} of {len(rows)} estimator runs failed")
    return rows


ROW_COLUMNS = ["estimator", "snr_db", "snr_index", "trial", "seed", "status", "sigma", "cycles"]


def rows_to_frame(rows):
    """
    Deterministic table of the rows (no wall time)
    """
    records = []
    for r in rows:
        record = {"estimator": r.estimator, "snr_db": r.snrDb, "snr_index": r.snrIndex, "trial": r.trial,
                  "seed": r.seed, "status": r.status, "sigma": r.sigma, "cycles": r.cycles}
        record.update(r.errors)
        records.append(record)
    errorColumns = sorted({c for r in rows for c in r.errors})
    return pd.DataFrame.from_records(records, columns=ROW_COLUMNS + errorColumns)


def frame_to_rows(frame, timing=None):
    """
    Inverse of rows_to_frame(); wall times are taken from an optional timing frame
    """
    errorColumns = [c for c in frame.columns if c.startswith("se_")]
    wall = {}
    if timing is not None:
        for t in timing.itertuples(index=False):
            wall[(t.estimator, int(t.snr_index), int(t.trial))] = float(t.wall_time)
    rows = []
    for rec in frame.to_dict(orient="records"):
        key = (rec["estimator"], int(rec["snr_index"]), int(rec["trial"]))
        rows.append(ResultRow(rec["estimator"], float(rec["snr_db"]), int(rec["snr_index"]), int(rec["trial"]),
                              int(rec["seed"]), str(rec["status"]), float(rec["sigma"]), int(rec["cycles"]),
                              {c: float(rec[c]) for c in errorColumns}, wallTime=wall.get(key, 0.0)))
    return rows


def metadata(cfg):
    return {
        "snrFormula": SNR_FORMULA,
        "noiseFactor": cfg.noiseFactor,
        "trackedParameters": [p.label for p in cfg.tracked],
        "trackedIndexing": "1-based",
        "initMode": cfg.imape.initMode,
        "perturbation": cfg.imape.perturbation if cfg.imape.initMode == "perturbed" else None,
        "masterSeed": cfg.masterSeed,
        "sceneSeed": cfg.sceneSeed,
        "antennas": cfg.nAntennas,
        "calibrators": cfg.nCalibrators,
        "backgroundSources": cfg.nBackground,
        "frequencies": list(cfg.frequencies),
        "snrGrid": list(cfg.snrGrid),
        "trials": cfg.trials,
        "estimators": list(cfg.estimators),
        "consensus": cfg.imape.consensus.enabled,
    }


def write_rows(rows, outputDir, cfg=None):
    """
    rows.csv (deterministic), timing.csv (wall times) and, given the
    configuration, metadata.json

    @return path of rows.csv
    """
    os.makedirs(outputDir, exist_ok=True)
    path = os.path.join(outputDir, ROWS_FILE)
    rows_to_frame(rows).to_csv(path, index=False)
    timing = pd.DataFrame({"estimator": [r.estimator for r in rows], "snr_index": [r.snrIndex for r in rows],
                           "trial": [r.trial for r in rows], "wall_time": [r.wallTime for r in rows]})
    timing.to_csv(os.path.join(outputDir, TIMING_FILE), index=False)
    if cfg is not None:
        with open(os.path.join(outputDir, METADATA_FILE), "w") as f:
            f.write(json.dumps(metadata(cfg), indent=4, sort_keys=True))
    log.info(f"wrote {len(rows)} rows to {path}")
    return path


def read_rows(path):
    """
    Rows from a rows.csv, with wall times from the neighbouring timing.csv if present
    """
    frame = pd.read_csv(path, float_precision="round_trip")
    timingPath = os.path.join(os.path.dirname(path), TIMING_FILE)
    timing = pd.read_csv(timingPath) if os.path.exists(timingPath) else None
    return frame_to_rows(frame, timing)


def summarize(rows, outputDir=None):
    """
    Mean and median squared error with the number of successful trials per
    estimator, SNR and tracked parameter. With an output directory, also
    writes summary.csv and one gnuplot data file and script per parameter.

    @param rows Nonempty list of ResultRow
    @return pandas DataFrame
    """
    if not rows:
        raise ParameterError("nothing to summarize")
    frame = rows_to_frame(rows)
    errorColumns = [c for c in frame.columns if c.startswith("se_")]
    long = frame.melt(id_vars=["estimator", "snr_db", "snr_index", "trial"], value_vars=errorColumns,
                      var_name="parameter", value_name="se")
    long["parameter"] = long["parameter"].str[3:]
    # fixed reduction order: independent of the order the trials arrived in
    long = long.sort_values(["estimator", "parameter", "snr_index", "trial"], kind="mergesort")
    long = long[np.isfinite(long["se"])]
    table = (long.groupby(["estimator", "snr_db", "parameter"], sort=True)["se"]
             .agg(mean="mean", median="median", count="count").reset_index())

    if outputDir is not None:
        os.makedirs(outputDir, exist_ok=True)
        table.to_csv(os.path.join(outputDir, SUMMARY_FILE), index=False)
        for parameter in sorted(table["parameter"].unique()):
            write_plot_script(table[table["parameter"] == parameter], parameter, outputDir)
    return table


def write_plot_script(table, parameter, outputDir, statistic="median"):
    """
    gnuplot data (SNR, then one column per estimator) and a script plotting
    it on a log scale

    @return path of the script
    """
    wide = table.pivot(index="snr_db", columns="estimator", values=statistic).sort_index()
    dataPath = os.path.join(outputDir, f"mse_{parameter}.dat")
    with open(dataPath, "w") as f:
        f.write("# snr_db " + " ".join(wide.columns) + "\n")
        for snr, values in wide.iterrows():
            f.write(f"{float(snr)!r} " + " ".join(repr(float(v)) if np.isfinite(v) else "NaN" for v in values) + "\n")

    curves = ", ".join(f"'{os.path.basename(dataPath)}' using 1:{k + 2} with linespoints title '{name}'"
                       for k, name in enumerate(wide.columns))
    scriptPath = os.path.join(outputDir, f"mse_{parameter}.gp")
    with open(scriptPath, "w") as f:
        f.write("set terminal pngcairo size 800,600\n")
        f.write(f"set output 'mse_{parameter}.png'\n")
        f.write("set logscale y\n")
        f.write("set xlabel 'SNR (dB)'\n")
        f.write(f"set ylabel '{statistic} squared error'\n")
        f.write(f"set title '{parameter}'\n")
        f.write("set key top right\n")
        f.write(f"plot {curves}\n")
    return scriptPath


OBSERVATION_FILES = ("scene.json", "visibilities.csv", "truth.txt", "observation.json")


def write_observation(obs, outputDir):
    """
    Scene (JSON), visibilities (CSV, one row per frequency and baseline, 0-based
    antennas), truth (labeled parameter text per frequency) and the noise level
    """
    os.makedirs(outputDir, exist_ok=True)
    sceneFile, visFile, truthFile, metaFile = (os.path.join(outputDir, f) for f in OBSERVATION_FILES)
    with open(sceneFile, "w") as f:
        f.write(obs.scene.dumps())

    records = []
    for x in obs.xs:
        for k, (p, q) in enumerate(obs.scene.array.baselines):
            record = {"frequency": x.frequency, "p": p, "q": q}
            for c in range(4):
                record[f"re{c}"] = x.data[k, c].real
                record[f"im{c}"] = x.data[k, c].imag
            records.append(record)
    pd.DataFrame.from_records(records).to_csv(visFile, index=False)

    with open(truthFile, "w") as f:
        for x, truth in zip(obs.xs, obs.truths):
            f.write(f"# frequency = {x.frequency!r}\n")
            f.write(truth.dumps())
    with open(metaFile, "w") as f:
        f.write(json.dumps({"sigma": obs.sigma, "snrFormula": SNR_FORMULA}, indent=4, sort_keys=True))
    log.info(f"observation written to {outputDir}")


def read_observation(inputDir):
    """
    Inverse of write_observation(); the truth is optional
    """
    sceneFile, visFile, truthFile, metaFile = (os.path.join(inputDir, f) for f in OBSERVATION_FILES)
    for path in (sceneFile, visFile):
        if not os.path.isfile(path):
            raise ParameterError(f"observation file '{path}' does not exist")
    with open(sceneFile) as f:
        scene = Scene.loads(f.read())

    frame = pd.read_csv(visFile, float_precision="round_trip")
    xs = []
    for frequency in scene.frequencies:
        block = frame[np.isclose(frame["frequency"], frequency, rtol=0, atol=1e-6 * frequency)]
        if len(block) != scene.nBaselines:
            raise ParameterError(f"{visFile}: {len(block)} rows at {frequency:g} Hz, expected {scene.nBaselines}")
        data = np.stack([block[f"re{c}"].to_numpy() + 1j * block[f"im{c}"].to_numpy() for c in range(4)], axis=1)
        xs.append(VisibilitySet(frequency, data))

    truths = []
    if os.path.isfile(truthFile):
        with open(truthFile) as f:
            blocks = f.read().split("# frequency = ")[1:]
        truths = [ThetaVector.loads(block.split("\n", 1)[1]) for block in blocks]
    sigma = float("nan")
    if os.path.isfile(metaFile):
        with open(metaFile) as f:
            sigma = float(json.load(f)["sigma"])
    return Observation(scene, truths, xs, sigma)
