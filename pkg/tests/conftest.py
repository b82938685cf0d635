import numpy as np
import pytest
from hypothesis import settings

from qmit.noise_model import MultiQubitNoiseModel, SingleQubitConfusion

settings.register_profile("qmit", deadline=None, max_examples=60, derandomize=True)
settings.load_profile("qmit")


def confusion(p0: float, p1: float) -> SingleQubitConfusion:
    """Confusion matrix with correct-assignment probabilities ``p0`` and ``p1``."""
    return SingleQubitConfusion([[p0, 1.0 - p1], [1.0 - p0, p1]])


def uniform_model(n_qubits: int, p0: float, p1: float = None) -> MultiQubitNoiseModel:
    lam = confusion(p0, p0 if p1 is None else p1)
    return MultiQubitNoiseModel((lam,) * n_qubits)


def identity_model(n_qubits: int) -> MultiQubitNoiseModel:
    return MultiQubitNoiseModel((SingleQubitConfusion(np.eye(2)),) * n_qubits)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# -- acceptance summary ----------------------------------------------------

_ACCEPTANCE = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        status = "PASS" if rep.passed else ("SKIP" if rep.skipped else "FAIL")
        detail = ""
        for key, value in item.user_properties:
            if key == "advisory" and status == "PASS":
                status = "WARN"
            if key in ("advisory", "detail"):
                detail = value
        _ACCEPTANCE[number] = (title, status, detail)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        title, status, detail = _ACCEPTANCE[number]
        line = f"criterion {number:2d} {status:4s} {title}"
        if detail:
            line += f" | {detail}"
        terminalreporter.write_line(line)
