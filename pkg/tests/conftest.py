import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

import mvsense as mv


@pytest.fixture
def rng():
    return np.random.default_rng(20240)


@pytest.fixture
def small_grid():
    return mv.build_grid([0, 0, 0], [2, 2, 2], [0.5, 0.5, 0.5])


@pytest.fixture
def paper_grid():
    return mv.build_grid([0, 0, 0], [5, 5, 5], [0.5, 0.5, 0.5])


@pytest.fixture
def default_prior():
    return mv.PriorParams(sparsity=0.05)
