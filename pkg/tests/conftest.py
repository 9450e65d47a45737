import numpy as np
import pytest

from cfclass.optimizer import Program
from cfclass.risk import BasisSpec
from cfclass.simulation import oracle_beta_star

QUADRATIC = BasisSpec("quadratic")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def oracle_box1():
    """Population solution for the simulated design with box |beta_j| <= 1."""
    return oracle_beta_star(QUADRATIC, Program(27, lower=-1.0, upper=1.0), 1_000_000, seed=101)


@pytest.fixture(scope="session")
def oracle_box10():
    """Population solution with box |beta_j| <= 10 (inactive at the optimum)."""
    return oracle_beta_star(QUADRATIC, Program(27, lower=-10.0, upper=10.0), 1_000_000, seed=102)


def write_csv(path, header, rows):
    lines = [",".join(header)] + [",".join(str(v) for v in r) for r in rows]
    path.write_text("\n".join(lines) + "\n")
    return path
