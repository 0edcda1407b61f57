"""
测试公共夹具
"""

import sys
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "src"))
sys.path.insert(0, str(ROOT))

from core.grid import build_grid
from oracles.catalog import get_case
from stochastics.ensemble import enumerate_bernoulli_ensemble, generate_gaussian_ensemble
from stochastics.estimators import ExactPrefixEstimator, RegressionEstimator
from utils.worker_pool import shutdown_global_pool


PROBLEMS_DIR = ROOT / "problems"


@pytest.fixture(autouse=True)
def _reset_worker_pool():
    yield
    shutdown_global_pool()


@pytest.fixture
def grid8():
    return build_grid(1.0, 8)


@pytest.fixture
def tree2():
    """N = 2 的全枚举路径集（4 条路径）"""
    return enumerate_bernoulli_ensemble(build_grid(1.0, 2))


@pytest.fixture
def tree8(grid8):
    """N = 8 的全枚举路径集（256 条路径）"""
    return enumerate_bernoulli_ensemble(grid8)


@pytest.fixture
def gaussian8(grid8):
    return generate_gaussian_ensemble(seed=11, paths=10000, grid=grid8)


@pytest.fixture
def exact():
    return ExactPrefixEstimator()


@pytest.fixture
def regress():
    return RegressionEstimator(3)


@pytest.fixture
def linear_case():
    return get_case("linear-bsde")


@pytest.fixture
def problems_dir():
    return PROBLEMS_DIR
