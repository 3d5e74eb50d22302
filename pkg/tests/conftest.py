import math

import numpy as np
import pytest

from mlbench.targets import build_constant_likelihood, make_target

ACCEPTANCE_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE_KEY] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
        terminalreporter.write_line(line)


@pytest.fixture
def record_criterion(request):
    """Append a 'criterion N: PASS|FAIL detail' line to the terminal summary."""

    def record(number: int, ok: bool, detail: str = "") -> None:
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'} {detail}".rstrip()
        request.config.stash[ACCEPTANCE_KEY].append(line)
        print(line)

    return record


def within_std_errs(values, truth: float, k: float = 3.0) -> tuple[bool, float, float]:
    """Whether mean(values) lies within k standard errors of truth."""
    v = np.asarray(values, dtype=float)
    se = float(v.std(ddof=1) / math.sqrt(v.size))
    return abs(float(v.mean()) - truth) <= k * se, float(v.mean()), se


@pytest.fixture
def std_normal():
    return make_target("stdnormal1d")


@pytest.fixture
def gauss_mix():
    return make_target("gauss-mix", D=1, L=1.0)


@pytest.fixture
def gauss_uniform():
    return make_target("gauss-uniform", delta=10.0, sigma=3.0, n_data=10, data_seed=1)


@pytest.fixture
def bod():
    return make_target("bod")


@pytest.fixture
def constant():
    return build_constant_likelihood(math.log(2.5), -1.0, 1.0)
