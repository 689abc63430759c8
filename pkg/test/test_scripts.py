import os

QUICK_CONFIG = "analysis/tutorial/quickTest.ini"


def output(ret):
    return ret.stdout.read().decode("utf-8")


def test_help(script_runner):
    ret = script_runner("RobustCal.py -h")
    assert ret.stderr.read().decode("utf-8") == ""
    assert " * * * Welcome to RobustCal * * *" in output(ret)
    assert ret.returncode == 0


def test_simulate_then_calibrate(script_runner, tmp_path):
    obs = str(tmp_path / "obs")
    ret = script_runner(f"RobustCal.py --config {QUICK_CONFIG} --out {obs} --seed 5 simulate --snr 10")
    assert ret.returncode == 0
    assert "Leaving RobustCal... Bye!" in output(ret)
    for name in ("scene.json", "visibilities.csv", "truth.txt", "observation.json"):
        assert os.path.isfile(os.path.join(obs, name))

    ret = script_runner(f"RobustCal.py --config {QUICK_CONFIG} --seed 5 calibrate --input {obs}")
    stdout = output(ret)
    assert ret.returncode == 0
    assert "aligned squared error" in stdout
    assert "phase[1,1] = " in stdout
    assert "Leaving RobustCal... Bye!" in stdout

    ret = script_runner(f"RobustCal.py --config {QUICK_CONFIG} --seed 5 calibrate --input {obs} --least-squares")
    assert ret.returncode == 0


def test_calibrate_checkpoint_resume(script_runner, tmp_path):
    checkpoint = str(tmp_path / "state.json")
    ret = script_runner(f"RobustCal.py --config {QUICK_CONFIG} --checkpoint {checkpoint} calibrate --snr 10")
    assert ret.returncode == 0
    assert os.path.isfile(checkpoint)
    ret = script_runner(f"RobustCal.py --config {QUICK_CONFIG} --checkpoint {checkpoint} calibrate --snr 10 --resume")
    assert ret.returncode == 0
    assert "resuming from" in output(ret)

    ret = script_runner(f"RobustCal.py --config {QUICK_CONFIG} --checkpoint {checkpoint} calibrate --snr 10 "
                        "--resume --least-squares")
    assert ret.returncode == 2
    assert "not allowed with argument" in ret.stderr.read().decode("utf-8")


def test_sweep_and_summarize(script_runner, tmp_path):
    out = str(tmp_path / "sweep")
    ret = script_runner(f"RobustCal.py --config {QUICK_CONFIG} --out {out} sweep")
    assert ret.returncode == 0
    for name in ("rows.csv", "timing.csv", "metadata.json", "summary.csv", "mse_phase_1_2.gp"):
        assert os.path.isfile(os.path.join(out, name))
    with open(os.path.join(out, "rows.csv")) as f:
        assert len(f.read().splitlines()) == 1 + 2 * 2 * 3

    ret = script_runner(f"RobustCal.py --out {out} summarize --plots")
    assert ret.returncode == 0
    assert "imape-cauchy" in output(ret)
    assert os.path.isfile(os.path.join(out, "mse_phase_1_2.png"))


def test_bad_config_fails(script_runner, tmp_path):
    path = tmp_path / "bad.ini"
    path.write_text("[imape]\nmaxCycle = 3\n")
    ret = script_runner(f"RobustCal.py --config {path} sweep")
    assert ret.returncode == 1
    assert "unknown key 'maxCycle'" in output(ret)
