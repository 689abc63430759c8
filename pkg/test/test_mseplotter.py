import os

import pandas as pd

from robustcal.plotting import MSEPlot, MSEPlotter


def summary_table():
    return pd.DataFrame({
        "estimator": ["imape-cauchy", "imape-cauchy", "gaussian-ls", "gaussian-ls"],
        "snr_db": [0.0, 10.0, 0.0, 10.0],
        "parameter": ["phase_1_2"] * 4,
        "mean": [0.2, 0.02, 0.5, 0.0],
        "median": [0.1, 0.01, 0.4, 0.0],
        "count": [3, 3, 3, 3],
    })


def test_write_plots(tmp_path):
    plotter = MSEPlotter(summary_table(), formats=("png",))
    plotter.outputDir = str(tmp_path)
    paths = plotter.writePlots()
    assert paths == [os.path.join(str(tmp_path), "mse_phase_1_2.png")]
    assert os.path.getsize(paths[0]) > 0


def test_missing_parameter(tmp_path):
    plot = MSEPlot(summary_table(), "gain_imag_3_1")
    plot.outputDir = str(tmp_path)
    assert plot.write() == []
