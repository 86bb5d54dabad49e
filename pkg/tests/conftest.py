import os

import pytest

from slsq.design import CoderControllerConfig
from slsq.system import system_constants, system_from_document
from slsq.util import load_document

CONFIGS = os.path.join(os.path.dirname(__file__), "..", "configs")


def config_path(name: str) -> str:
    return os.path.join(CONFIGS, name)


def load_system(name: str):
    return system_from_document(load_document(config_path(name)))


def make_config(name, tau_s, n, alpha, tau_a, r0=1.0, base_tick=1e-3):
    sys, fb, cert = load_system(name)
    return CoderControllerConfig(
        tau_s=tau_s, n=n, alpha=alpha, r0=r0, tau_a=tau_a, cert=cert,
        consts=system_constants(sys, fb), d=sys.d, mode_count=sys.N, base_tick=base_tick,
    )


@pytest.fixture
def plant():
    """The two-mode planar system with its gains and certificate."""
    return load_system("sectionV_system.json")


@pytest.fixture
def scalar_plant():
    return load_system("iterates_example.json")


@pytest.fixture
def case1():
    return make_config("sectionV_system.json", tau_s=0.008, n=100, alpha=0.05, tau_a=1.0)


@pytest.fixture
def case2():
    return make_config("sectionV_system.json", tau_s=0.002, n=400, alpha=0.05, tau_a=0.25)


@pytest.fixture
def scalar_case():
    return make_config("iterates_example.json", tau_s=0.05, n=10, alpha=0.05, tau_a=2.0)


def pytest_addoption(parser):
    parser.addoption("--update-golden", action="store_true", default=False,
                     help="rewrite the golden files under tests/golden instead of comparing")
