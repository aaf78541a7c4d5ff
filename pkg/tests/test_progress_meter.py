import importlib.util

import pytest

import egorax


def test_text_progress_meter(capsys):
    meter = egorax.TextProgressMeter(minimum_increase=0.5)
    state = meter.init(4)
    for i in range(4):
        meter.step(state, f"row={i}")
    meter.close(state)
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "0.00%"
    assert lines[1] == "50.00% (row=1)"
    assert lines[-1] == "100.00% (row=3)"
    assert state.done == 4


def test_no_progress_meter(capsys):
    meter = egorax.NoProgressMeter()
    state = meter.init(2)
    meter.step(state, "a")
    meter.close(state)
    assert state.done == 1
    assert capsys.readouterr().out == ""


@pytest.mark.skipif(importlib.util.find_spec("tqdm") is None, reason="needs tqdm")
def test_tqdm_progress_meter():
    meter = egorax.TqdmProgressMeter()
    state = meter.init(3)
    for _ in range(3):
        meter.step(state, "x")
    meter.close(state)
    assert state.done == 3
