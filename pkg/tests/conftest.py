import numpy as np
import pytest

from onebitcov.arcsine import PairParams
from onebitcov.config import ExperimentConfig
from onebitcov.process import BENCHMARK_COVARIANCE


@pytest.fixture
def benchmark_matrix():
    """Нестационарная 5x5 ковариация для сравнения бэкендов."""
    return BENCHMARK_COVARIANCE.copy()


@pytest.fixture
def fitness_pair():
    """Pair used for the Pade fitness check."""
    return PairParams(0.8, 0.7, 0.05, 0.7)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def small_config(tmp_path):
    """Фабрика маленьких конфигураций без пользовательского файла и без журнала."""

    def _factory(**overrides):
        config = ExperimentConfig(
            {
                "experiments": 2,
                "nx": [2000],
                "process": {"kind": "wiener", "n": 6},
                "threshold": {"d": 0.5, "sigma_tau2": 0.2},
                "variance": {"indices": [2, 5]},
                "bussgang": {"row": 2, "window": 4},
                "storage": {"enabled": False, "database_path": str(tmp_path / "ledger.db")},
            }
        )
        for key, value in overrides.items():
            config.set(key, value)
        config.validate()
        return config

    return _factory
