import pytest

from bench import TrackedParameter
from cmdLineUtils import cmdStringToList, parseBool, parseEstimators, parseFrequencies, parseRange, parseSnrGrid, parseTracked
from errors import ParameterError


def test_cmdStringToList():
    assert cmdStringToList("a, b,c") == ["a", "b", "c"]
    assert cmdStringToList(" a,,b ,") == ["a", "b"]


def test_parseRange():
    assert parseRange("-10:30:5") == [-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0]
    assert parseRange("0:1:0.4") == [0.0, 0.4, 0.8]
    assert parseRange("0, 10,20") == [0.0, 10.0, 20.0]
    for bad in ("1:2", "0:10:-1", "10:0:1", "a,b"):
        with pytest.raises(ParameterError):
            parseRange(bad)


def test_parseSnrGrid():
    assert parseSnrGrid("5") == [5.0]
    with pytest.raises(ParameterError):
        parseSnrGrid("10,0")
    with pytest.raises(ParameterError):
        parseSnrGrid("")


def test_parseFrequencies():
    assert parseFrequencies("130e6:160e6:10e6") == pytest.approx([130e6, 140e6, 150e6, 160e6])
    with pytest.raises(ParameterError):
        parseFrequencies("-1e6")


def test_parseEstimators():
    known = ("imape-cauchy", "gaussian-ls")
    assert parseEstimators("gaussian-ls, imape-cauchy", known) == ["gaussian-ls", "imape-cauchy"]
    with pytest.raises(ParameterError):
        parseEstimators("imape-cauchy,lasso", known)
    with pytest.raises(ParameterError):
        parseEstimators("", known)


def test_parseTracked():
    assert parseTracked("gain_imag:3:1, phase:1:2") == [TrackedParameter("gain_imag", 3, 1),
                                                        TrackedParameter("phase", 1, 2)]


@pytest.mark.parametrize("value,expected", [("1", True), ("True", True), ("yes", True), ("off", False),
                                            ("0", False), (False, False)])
def test_parseBool(value, expected):
    assert parseBool(value) is expected


def test_parseBool_invalid():
    with pytest.raises(ParameterError):
        parseBool("maybe")
