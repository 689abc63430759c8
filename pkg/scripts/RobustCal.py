#!/usr/bin/env python
"""
 * Project : RobustCal - robust calibration of radio interferometers              *
 * Package : RobustCal                                                            *
 * Script  : RobustCal.py                                                         *
 *                                                                                *
 * Description:                                                                   *
 *              Top-level control script: simulate, calibrate, sweep, summarize   *
 *                                                                                *
 * Authors:                                                                       *
 *      RobustCal group                                                           *
 *                                                                                *
 * Redistribution and use in source and binary forms, with or without             *
 * modification, are permitted according to the terms listed in the file          *
 * LICENSE.                                                                       *
"""

import argparse
import os
import sys

import numpy as np

from logger import Logger
log = Logger('RobustCal')

PRIORS = ["k", "student", "cauchy", "laplace", "igcg", "gaussian"]


def buildParser(configMgr):
    parser = argparse.ArgumentParser(description="RobustCal options:")
    parser.add_argument("-L", "--log-level", help="set log level", choices=["VERBOSE", "DEBUG", "INFO", "WARNING", "ERROR", "FATAL", "ALWAYS"])
    parser.add_argument("-v", "--verbose", action="store_true", default=False, help="an alias of -L VERBOSE")
    parser.add_argument("--config", help="configuration file (INI) read before the command line is applied")
    parser.add_argument("--seed", type=int, help="master seed (sweep) or trial seed (simulate, calibrate)")
    parser.add_argument("--prior", choices=PRIORS, help="texture prior of the single-run commands")
    parser.add_argument("--snr-grid", help="SNR grid in dB, 'start:stop:step' or comma separated")
    parser.add_argument("--trials", type=int, help="trials per SNR point")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--checkpoint", help="state file rewritten after every IMAPE cycle")
    parser.add_argument("--threads", type=int, help="worker processes of the sweep")

    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True

    sim = sub.add_parser("simulate", help="dump a scene, its truth and contaminated visibilities")
    sim.add_argument("--snr", type=float, help="target SNR in dB (default: first point of the grid)")

    cal = sub.add_parser("calibrate", help="single calibration run, prints the state")
    cal.add_argument("--input", help="directory written by 'simulate'; simulated on the fly if absent")
    cal.add_argument("--snr", type=float, help="target SNR in dB when simulating on the fly")
    start = cal.add_mutually_exclusive_group()
    start.add_argument("--least-squares", action="store_true", help="run the Gaussian least-squares baseline instead of IMAPE")
    start.add_argument("--resume", action="store_true", help="restart an IMAPE run from the checkpoint file")

    sub.add_parser("sweep", help="full Monte-Carlo experiment")

    summ = sub.add_parser("summarize", help="rows.csv -> MSE tables and plot scripts")
    summ.add_argument("--input", help="rows.csv to summarize (default: <out>/rows.csv)")
    summ.add_argument("--plots", action="store_true", help="also draw the summary with matplotlib")
    return parser


def applyArguments(args, configMgr):
    if args.config:
        configMgr.readConfigFile(args.config)
    if args.seed is not None:
        configMgr.masterSeed = args.seed
    if args.prior:
        configMgr.priorFamily = args.prior
    if args.snr_grid:
        configMgr.setSnrGrid(args.snr_grid)
    if args.trials is not None:
        configMgr.trials = args.trials
    if args.out:
        configMgr.outputDir = args.out
    if args.checkpoint:
        configMgr.checkpoint = args.checkpoint
    if args.threads is not None:
        configMgr.threads = args.threads


def simulateCommand(args, configMgr):
    from bench import simulate_observation, write_observation

    cfg = configMgr.experimentConfig()
    snr = args.snr if args.snr is not None else cfg.snrGrid[0]
    obs = simulate_observation(cfg, cfg.buildScene(), snr, configMgr.masterSeed)
    write_observation(obs, configMgr.outputDir)
    log.info(f"simulated {len(obs.xs)} channel(s) at {snr} dB, sigma = {obs.sigma:.6g}")


def calibrateCommand(args, configMgr):
    from bench import align, read_observation, simulate_observation, theta_error
    from imape import CalibrationState, perturbed_theta, run_gaussian_ls, run_imape

    cfg = configMgr.experimentConfig()
    if args.input:
        obs = read_observation(args.input)
    else:
        snr = args.snr if args.snr is not None else cfg.snrGrid[0]
        obs = simulate_observation(cfg, cfg.buildScene(), snr, configMgr.masterSeed)

    opts = configMgr.imapeOptions()
    thetaInit = None
    if opts.initMode == "perturbed":
        if not obs.truths:
            raise ValueError("perturbed initialization needs the truth of the observation")
        rng = np.random.default_rng([configMgr.masterSeed, 1])
        thetaInit = [perturbed_theta(t, opts.perturbation, rng) for t in obs.truths]

    state = None
    if args.resume:
        if not opts.checkpoint or not os.path.isfile(opts.checkpoint):
            raise ValueError("--resume needs an existing --checkpoint file")
        state = CalibrationState.load(opts.checkpoint)
        log.info(f"resuming from {opts.checkpoint} at cycle {state.cycle}")

    if args.least_squares:
        state = run_gaussian_ls(obs.xs, obs.scene, opts, thetaInit)
    else:
        state = run_imape(obs.xs, obs.scene, configMgr.prior(), opts, thetaInit, state)

    for k, frequency in enumerate(state.frequencies):
        log.always(f"frequency {frequency:g} Hz: {state.priors[k].family.value} {state.priors[k].hyperparameters()}")
        print(f"# frequency = {frequency!r}")
        print(state.thetas[k].dumps(), end="")
        if obs.truths:
            aligned = align(state.thetas[k], obs.truths[k])
            log.always(f"frequency {frequency:g} Hz: aligned squared error {theta_error(aligned, obs.truths[k]):.6e}")
    log.always(f"cycles = {state.cycle}, converged = {state.converged}")


def sweepCommand(args, configMgr):
    from bench import run_sweep, summarize, write_rows

    cfg = configMgr.experimentConfig()
    rows = run_sweep(cfg)
    write_rows(rows, cfg.outputDir, cfg)
    summarize(rows, cfg.outputDir)


def summarizeCommand(args, configMgr):
    from bench import ROWS_FILE, read_rows, summarize

    path = args.input if args.input else os.path.join(configMgr.outputDir, ROWS_FILE)
    if not os.path.isfile(path):
        raise ValueError(f"rows file '{path}' does not exist")
    outputDir = configMgr.outputDir if args.out else os.path.dirname(path) or "."
    table = summarize(read_rows(path), outputDir)
    print(table.to_string(index=False))
    if args.plots:
        from robustcal.plotting import MSEPlotter
        plotter = MSEPlotter(table)
        plotter.outputDir = outputDir
        plotter.writePlots()


if __name__ == "__main__":
    """
    Main function call starts here ....
    """

    from configManager import configMgr
    from errors import RobustCalError

    print("\n * * * Welcome to RobustCal * * *\n")

    parser = buildParser(configMgr)
    RobustCalArgs = parser.parse_args()

    if RobustCalArgs.verbose:
        log.setLevel("VERBOSE", True)
    elif RobustCalArgs.log_level:
        log.setLevel(RobustCalArgs.log_level, True) #do not add a default to log_level or we will always lock it

    commands = {"simulate": simulateCommand, "calibrate": calibrateCommand,
                "sweep": sweepCommand, "summarize": summarizeCommand}
    try:
        applyArguments(RobustCalArgs, configMgr)
        commands[RobustCalArgs.command](RobustCalArgs, configMgr)
    except (RobustCalError, ValueError, OSError) as err:
        log.fatal(f"{RobustCalArgs.command} failed: {err}")
        sys.exit(1)

    log.info("Leaving RobustCal... Bye!")
