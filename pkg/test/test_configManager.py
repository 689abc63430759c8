import pytest

from configManager import configMgr
from errors import ParameterError
from noise import TextureFamily


@pytest.fixture
def mgr():
    configMgr.reset()
    yield configMgr
    configMgr.reset()


def write_ini(tmp_path, text):
    path = tmp_path / "run.ini"
    path.write_text(text)
    return str(path)


def test_singleton():
    from configManager import ConfigManager
    with pytest.raises(Exception):
        ConfigManager()


def test_defaults(mgr):
    cfg = mgr.experimentConfig()
    assert (cfg.nAntennas, cfg.nCalibrators, cfg.nBackground) == (8, 2, 4)
    assert cfg.snrGrid == [-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0]
    assert cfg.trials == 200
    assert [p.label for p in cfg.tracked] == ["gain_imag[3,1]", "phase[1,2]"]
    assert mgr.prior().family is TextureFamily.CAUCHY


def test_read_config_file(mgr, tmp_path):
    path = write_ini(tmp_path, """
[scene]
antennas = 6
frequencies = 140e6,150e6   # two channels

[imape]
maxCycles = 7
freezeOmega = yes
initMode = perturbed

[consensus]
enabled = true
order = 1

[experiment]
snrGrid = 0:20:10
estimators = imape-k, gaussian-ls
tracked = phase:2:4
""")
    mgr.readConfigFile(path)
    assert mgr.configFiles == [path]
    assert mgr.nAntennas == 6
    assert mgr.frequencies == [140e6, 150e6]
    opts = mgr.imapeOptions()
    assert (opts.maxCycles, opts.freezeOmega, opts.initMode) == (7, True, "perturbed")
    assert opts.consensus.enabled and opts.consensus.order == 1
    cfg = mgr.experimentConfig()
    assert cfg.snrGrid == [0.0, 10.0, 20.0]
    assert cfg.estimators == ["imape-k", "gaussian-ls"]
    assert cfg.tracked[0].label == "phase[2,4]"
    assert mgr.sceneConfig().nAntennas == 6
    assert "maxCycles = 7" in mgr.summary()


def test_unknown_key(mgr, tmp_path):
    with pytest.raises(ParameterError):
        mgr.readConfigFile(write_ini(tmp_path, "[imape]\nmaxCycle = 3\n"))


def test_unknown_section(mgr, tmp_path):
    with pytest.raises(ParameterError):
        mgr.readConfigFile(write_ini(tmp_path, "[plotting]\nstyle = dark\n"))


def test_bad_value(mgr, tmp_path):
    with pytest.raises(ParameterError):
        mgr.readConfigFile(write_ini(tmp_path, "[scene]\nantennas = many\n"))


def test_missing_file(mgr, tmp_path):
    with pytest.raises(ParameterError):
        mgr.readConfigFile(str(tmp_path / "nothing.ini"))


def test_setters_and_prior(mgr):
    mgr.setSnrGrid("0,5")
    mgr.setEstimators(["imape-igcg"])
    mgr.setTracked("gain_real:1:2")
    mgr.setFrequencies("150e6")
    cfg = mgr.experimentConfig()
    assert cfg.snrGrid == [0.0, 5.0]
    assert cfg.estimators == ["imape-igcg"]
    assert cfg.frequencies == [150e6]
    assert mgr.prior("k").family is TextureFamily.KGAMMA
    with pytest.raises(ParameterError):
        mgr.prior("weibull")


def test_threads_reach_imape(mgr, tmp_path):
    mgr.readConfigFile(write_ini(tmp_path, "[experiment]\nthreads = 3\n"))
    assert mgr.imapeOptions().threads == 3
    assert mgr.experimentConfig().imape.threads == 3
