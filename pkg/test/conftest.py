import os
import shlex
import subprocess
import sys

import pytest

ROOT_DIR = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
PYTHON_DIR = os.path.join(ROOT_DIR, "python")
SCRIPTS_DIR = os.path.join(ROOT_DIR, "scripts")

for path in (PYTHON_DIR, SCRIPTS_DIR):
    if path not in sys.path:
        sys.path.insert(0, path)


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long Monte-Carlo checks")


@pytest.fixture(autouse=True)
def reset_log_level():
    import logger
    logger.resetLevel()
    yield
    logger.resetLevel()


@pytest.fixture
def script_runner():
    env = dict(os.environ)
    env["PYTHONPATH"] = os.pathsep.join([PYTHON_DIR, SCRIPTS_DIR, env.get("PYTHONPATH", "")])
    env["MPLBACKEND"] = "Agg"

    def run(cmd, cwd=None):
        args = shlex.split(cmd)
        if args and args[0].endswith(".py"):
            args = [sys.executable, os.path.join(SCRIPTS_DIR, args[0])] + args[1:]
        print(args)
        proc = subprocess.Popen(
            args, stdout=subprocess.PIPE, stderr=subprocess.PIPE, env=env, cwd=cwd or ROOT_DIR
        )
        proc.wait()
        return proc

    yield run
