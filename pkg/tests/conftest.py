"""
测试共享夹具
"""
import math
import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from src.models.coefficients import ConstantField, SinusoidalField
from src.models.sde_model import SdeModel
from src.noise.levy_noise import TemperedStableSpec, Tempering
from src.parametrix.config import ParametrixConfig


@pytest.fixture
def cauchy_noise():
    return TemperedStableSpec(alpha=1.0)


@pytest.fixture
def stable_noise():
    return TemperedStableSpec(alpha=1.5)


@pytest.fixture
def tempered_noise():
    return TemperedStableSpec(alpha=1.5, tempering=Tempering(kind='exponential', lam=1.0))


@pytest.fixture
def cauchy_model(cauchy_noise):
    return SdeModel(noise=cauchy_noise, drift=ConstantField(0.0), sigma=ConstantField(1.0))


@pytest.fixture
def acceptance_model(stable_noise):
    """α = 1.5, σ(x) = 1 + 0.3 sin x, b(x) = 0.2 cos x"""
    return SdeModel(noise=stable_noise,
                    drift=SinusoidalField(0.0, 0.2, 1.0, math.pi / 2.0),
                    sigma=SinusoidalField(1.0, 0.3, 1.0, 0.0))


@pytest.fixture
def sigma_only_model(stable_noise):
    return SdeModel(noise=stable_noise, drift=ConstantField(0.0),
                    sigma=SinusoidalField(1.0, 0.3, 1.0, 0.0))


@pytest.fixture
def fast_config():
    """降低分辨率的参数展开配置"""
    return ParametrixConfig(k_max=4, time_nodes=12, lattice_points=64, lattice_half_width=16.0,
                            chebyshev_degree=8, check_points=7, check_half_width=2.0)


@pytest.fixture
def output_dir(tmp_path):
    path = tmp_path / 'out'
    path.mkdir()
    return str(path)
