import numpy as np
import pytest

from src.model.params import ModelParams


@pytest.fixture(autouse=True)
def config_dir(tmp_path, monkeypatch):
    """Keeps log files and default configs out of the real home directory."""
    path = tmp_path / "config"
    monkeypatch.setenv("NHMM_CONFIG_DIR", str(path))
    monkeypatch.delenv("NHMM_THREADS", raising=False)
    return path


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def two_state_params():
    """K=2, S=2, A=1, B=1 with well separated wet and dry states."""
    return ModelParams(
        zeta=np.array([[2.0, -1.0, 0.5], [0.0, 0.0, 0.0]]),
        lam=np.array([[[2.0, 3.0], [1.5, 2.5]], [[0.5, 0.4], [0.2, 0.3]]]),
        beta0=np.array([[-1.5, -1.0], [1.0, 1.5]]),
        beta1=np.array([[0.4, -0.3]]),
        gamma=np.array([0.8, 1.2]),
    )
