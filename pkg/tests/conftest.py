import contextlib
import time

import pytest

from hydrosta.config import merge, preset
from hydrosta.sim import make_design, make_gains, run

ACCEPTANCE_KEY = "_hydrosta_acceptance"


class _Criterion:
    def __init__(self, number: int, title: str):
        self.number = number
        self.title = title
        self.detail = ""


@pytest.fixture
def criterion(request):
    """Context manager that logs one pass/fail line per acceptance criterion."""
    log = request.config.__dict__.setdefault(ACCEPTANCE_KEY, {})

    @contextlib.contextmanager
    def record(number: int, title: str):
        c = _Criterion(number, title)
        t0 = time.perf_counter()
        try:
            yield c
        except BaseException as exc:
            msg = str(exc).strip().splitlines()[0] if str(exc).strip() else type(exc).__name__
            line = f"criterion {number:2d} FAIL  {title}: {c.detail} [{msg}]"
            log[number] = line
            print(line)
            raise
        line = (f"criterion {number:2d} PASS  {title}: {c.detail} "
                f"({time.perf_counter() - t0:.2f} s)")
        log[number] = line
        print(line)

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    log = config.__dict__.get(ACCEPTANCE_KEY)
    if not log:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(log):
        terminalreporter.write_line(log[n])


@pytest.fixture(scope="session")
def nominal_cfg():
    return preset("paper-nominal")


@pytest.fixture(scope="session")
def nominal_design(nominal_cfg):
    return make_design(nominal_cfg)


@pytest.fixture(scope="session")
def nominal_gains(nominal_cfg):
    return make_gains(nominal_cfg)[0]


@pytest.fixture(scope="session")
def nominal_run(nominal_cfg, nominal_design, nominal_gains):
    """Nominal nonlinear IS-STA run with measurement noise, and its wall time."""
    t0 = time.perf_counter()
    trace = run(nominal_cfg, design=nominal_design, gains=nominal_gains)
    return trace, time.perf_counter() - t0


@pytest.fixture(scope="session")
def vgsta_trace(nominal_cfg):
    return run(merge(nominal_cfg, {"controller": "vgsta"}))


@pytest.fixture(scope="session")
def linear_design():
    return make_design(preset("paper-linear"))
