"""Shared fixtures: packaged cells, default config path, tuned configs."""

from contextlib import ExitStack
from importlib import resources

import numpy as np
import pytest

import socekf as sk


def _data_path(stack: ExitStack, name: str) -> str:
    return str(stack.enter_context(
        resources.as_file(resources.files("socekf.data") / name)))


@pytest.fixture(scope="session")
def data_paths():
    with ExitStack() as stack:
        yield {
            "cell": _data_path(stack, "cell_lfp_synthetic.toml"),
            "flat_cell": _data_path(stack, "cell_lfp_flat.toml"),
            "filter": _data_path(stack, "filter_default.toml"),
        }


@pytest.fixture(scope="session")
def cell(data_paths):
    return sk.load_cell_params(data_paths["cell"])


@pytest.fixture(scope="session")
def flat_cell(data_paths):
    return sk.load_cell_params(data_paths["flat_cell"])


def tuned_config(cell, init_soc: float = 0.85) -> sk.FilterConfig:
    """The shipped default tuning, constructed in code for tests.

    p0_x couples the four states along the direction a shared SOC error
    moves them (window-width weighted), plus a tiny diagonal floor; r_x is
    inflated well above the voltage-noise variance so the unknown bias is
    not absorbed into SOC before the bias filter claims it.
    """
    v = np.array([0.92, 0.92, 0.90, 0.90])
    return sk.FilterConfig(
        q_x=np.eye(4) * 1e-13,
        r_x=5.5e-4,
        q_theta=1e-7,
        r_theta=4e-6,
        x0=sk.x0_from_soc(init_soc, cell),
        p0_x=0.0025 * np.outer(v, v) + np.eye(4) * 1e-9,
        p0_theta=9e-4,
    )


@pytest.fixture
def tuned_cfg(cell):
    return tuned_config(cell)


@pytest.fixture(scope="session")
def tuned_factory():
    return tuned_config
