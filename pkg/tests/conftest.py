# tests/conftest.py - pytest 公共配置
import os
import sys

import numpy as np
import pytest

PROJECT_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
if PROJECT_ROOT not in sys.path:
    sys.path.insert(0, PROJECT_ROOT)

os.environ.setdefault("TENSORNP_SHOW_PROGRESS", "0")
os.environ.setdefault("TENSORNP_LOG_LEVEL", "WARNING")

from core.numerics import RandomSource  # noqa: E402


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: 蒙特卡洛用例，耗时较长 (-m 'not slow' 跳过)")


@pytest.fixture
def rng():
    return RandomSource(20240607)


@pytest.fixture
def np_rng():
    return np.random.default_rng(42)


def random_spd(d: int, gen: np.random.Generator, jitter: float = 0.5) -> np.ndarray:
    """随机 SPD 矩阵 AAᵀ/d + jitter·I"""
    A = gen.standard_normal((d, d))
    return A @ A.T / d + jitter * np.eye(d)
