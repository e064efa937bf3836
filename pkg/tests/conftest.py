import numpy as np
import pytest

from steadybounds.liouvillian import adequate_cavity
from steadybounds.operators import (build_infinite_range_ising, build_ising,
                                    build_thermal_cavity, thermal_dim)

_ACCEPTANCE: dict[int, list] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, text): acceptance criterion")
    config.addinivalue_line("markers", "slow: takes more than a few seconds")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        number, text = marker.args
        detail = "; ".join(f"{k}={v}" for k, v in item.user_properties)
        entry = _ACCEPTANCE.setdefault(number, [text, True, []])
        entry[1] = entry[1] and rep.passed
        if detail:
            entry[2].append(detail)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        text, ok, details = _ACCEPTANCE[number]
        tr.write_line(f"[{'PASS' if ok else 'FAIL'}] {number:2d}. {text}")
        for d in details:
            tr.write_line(f"         {d}")


def fmt(x) -> str:
    return f"{x:.3g}"


@pytest.fixture(scope="session")
def cavity_models():
    return {eps: adequate_cavity(1.0, eps, 0.2) for eps in (0.5, 0.9)}


@pytest.fixture(scope="session")
def driven_qubit():
    return build_ising(1, 0.0, [0.5], [[0.0]], 0.2)


@pytest.fixture(scope="session")
def thermal_model():
    return build_thermal_cavity(0.5, 1.0, thermal_dim(1.0, 1e-14))


def suite_models():
    """Small models in the emission class, used across the property tests."""
    rng = np.random.default_rng(3)
    J = rng.normal(size=(3, 3))
    J = J + J.T
    np.fill_diagonal(J, 0.0)
    return {
        "cavity_eps0.5": adequate_cavity(1.0, 0.5, 0.2),
        "cavity_eps0.9": adequate_cavity(1.0, 0.9, 0.2),
        "cavity_eps_eq_omega": adequate_cavity(0.3, 0.3, 0.2),
        "qubit_resonant": build_ising(1, 0.0, [0.5], [[0.0]], 0.2),
        "qubit_detuned": build_ising(1, 0.3, [0.5], [[0.0]], 0.2),
        "ising_n2": build_infinite_range_ising(2, 0.1, 0.5, 1.0, 0.1),
        "ising_n3_random": build_ising(3, 0.2, rng.uniform(0.2, 0.8, 3), 0.3 * J, 0.15),
    }


@pytest.fixture(scope="session")
def suite():
    return suite_models()
