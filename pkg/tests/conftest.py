import numpy as np
import pytest
import torch

from eegcodec.codec import CodecConfig
from eegcodec.rvq import RVQConfig

torch.set_num_threads(1)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def toy_codec_config():
    return CodecConfig(hidden_dim=32, base_width=8, n_res_units=1)


@pytest.fixture
def toy_rvq_config():
    return RVQConfig(vocab_sizes=64)


@pytest.fixture
def tiny_codec_config():
    """Gradient-check scale: hidden 8, total stride 16."""
    return CodecConfig(block_strides=[4, 4], hidden_dim=8, base_width=4, n_res_units=1)


_ACCEPTANCE = []


def pytest_runtest_logreport(report):
    if "test_acceptance.py::test_criterion" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        detail = dict(report.user_properties).get("detail", "")
        name = report.nodeid.split("::")[-1].removeprefix("test_")
        _ACCEPTANCE.append(f"{'PASS' if report.passed else 'FAIL'}  {name}  {detail}".rstrip())


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
