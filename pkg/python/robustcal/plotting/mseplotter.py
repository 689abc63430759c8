# **********************************************************************************
# * Project: RobustCal - robust calibration of radio interferometers               *
# * Package: RobustCal                                                             *
# *                                                                                *
# * Description: plots of the squared-error summary versus SNR                     *
# *                                                                                *
# * Authors:                                                                       *
# *      RobustCal group                                                           *
# *                                                                                *
# * Redistribution and use in source and binary forms, with or without             *
# * modification, are permitted according to the terms listed in the file          *
# * LICENSE.                                                                       *
# **********************************************************************************/

import matplotlib
matplotlib.use("Agg")

import os

import matplotlib.pyplot as plt
import numpy as np

from logger import Logger

log = Logger('MSEPlotter')

STYLES = {
    "imape-cauchy": dict(color="tab:red", marker="o"),
    "imape-student": dict(color="tab:orange", marker="s"),
    "imape-k": dict(color="tab:blue", marker="^"),
    "imape-laplace": dict(color="tab:green", marker="v"),
    "imape-igcg": dict(color="tab:purple", marker="D"),
    "imape-gaussian": dict(color="tab:gray", marker="x"),
    "gaussian-ls": dict(color="black", marker="*", linestyle="--"),
}


class MSEPlotter:
    """
    One MSEPlot per tracked parameter of a summary table
    """
    def __init__(self, table, parameters=None, statistic="median", formats=("png", "pdf")):
        self.table = table
        self.parameters = parameters
        self.statistic = statistic
        self.formats = formats
        self.outputDir = os.getcwd()

        if self.parameters is None:
            self.parameters = sorted(self.table["parameter"].unique())
        if isinstance(self.parameters, str):
            self.parameters = [self.parameters]

    def writePlots(self):
        paths = []
        for parameter in self.parameters:
            p = MSEPlot(self.table, parameter, self.statistic)
            p.outputDir = self.outputDir
            paths.extend(p.write(self.formats))
        return paths


class MSEPlot:
    def __init__(self, table, parameter, statistic="median"):
        self.table = table[table["parameter"] == parameter]
        self.parameter = parameter
        self.statistic = statistic
        self.outputDir = os.getcwd()

    def write(self, formats=("png",)):
        if self.table.empty:
            log.warning(f"no rows for parameter {self.parameter}; not plotting")
            return []

        fig, ax = plt.subplots(figsize=(6, 4))
        for estimator, group in self.table.groupby("estimator", sort=True):
            group = group.sort_values("snr_db")
            values = group[self.statistic].to_numpy(dtype=float)
            # zero errors cannot be drawn on a log axis
            values = np.where(values > 0, values, np.nan)
            ax.plot(group["snr_db"], values, label=estimator, **STYLES.get(estimator, {}))
        ax.set_yscale("log")
        ax.set_xlabel("SNR (dB)")
        ax.set_ylabel(f"{self.statistic} squared error")
        ax.set_title(self.parameter)
        ax.grid(True, which="both", alpha=0.3)
        ax.legend(frameon=False, fontsize="small")
        fig.tight_layout()

        paths = []
        for fmt in formats:
            path = os.path.join(self.outputDir, f"mse_{self.parameter}.{fmt}")
            fig.savefig(path)
            paths.append(path)
        plt.close(fig)
        log.info(f"parameter {self.parameter}: wrote {', '.join(paths)}")
        return paths
