"""
核密度估计与密度对照
"""
import logging
import math
from dataclasses import dataclass
from typing import Any, Optional

import numpy as np
import pandas as pd
from sklearn.neighbors import KernelDensity

from config.config import Config
from src.density.frozen_density import DensityGrid
from src.exceptions import ConfigurationError

logger = logging.getLogger(__name__)

# 高斯核的粗糙度 R(K) = ∫K²
GAUSSIAN_ROUGHNESS = 1.0 / (2.0 * math.sqrt(math.pi))
BANDWIDTH_RULES = ('iqr', 'fixed')


@dataclass
class DensityEstimate:
    lattice: np.ndarray
    values: np.ndarray
    standard_errors: np.ndarray
    bandwidth: float
    n_samples: int
    reliable: bool

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({'y': self.lattice, 'kde': self.values, 'se': self.standard_errors})


def iqr_bandwidth(samples: np.ndarray) -> float:
    """0.9·(IQR/1.34)·n^{-1/5}"""
    q75, q25 = np.percentile(samples, [75, 25])
    return 0.9 * (q75 - q25) / 1.34 * samples.size ** (-0.2)


def kde(samples: Any, lattice: Any, bandwidth_rule: str = 'iqr', bandwidth: Optional[float] = None,
        floor: float = Config.KDE_BANDWIDTH_FLOOR) -> DensityEstimate:
    """高斯核密度估计, 带逐点标准误 sqrt(f R(K)/(n h))"""
    data = np.asarray(samples, dtype=float).ravel()
    data = data[np.isfinite(data)]
    grid = np.asarray(lattice, dtype=float).ravel()
    if data.size == 0:
        raise ConfigurationError("核密度估计没有有限样本")
    if bandwidth_rule not in BANDWIDTH_RULES:
        raise ConfigurationError(f"未知的带宽规则: {bandwidth_rule}")

    reliable = True
    if data.size < Config.KDE_MIN_SAMPLES:
        logger.warning(f"样本数 {data.size} 少于 {Config.KDE_MIN_SAMPLES}, 估计不可靠")
        reliable = False

    if bandwidth_rule == 'fixed':
        if bandwidth is None:
            raise ConfigurationError("fixed 带宽规则需要给出 bandwidth")
        h = float(bandwidth)
    else:
        h = iqr_bandwidth(data)
    if not np.isfinite(h) or h < floor:
        logger.warning(f"带宽 {h:.3g} 低于下限, 改用 {floor:.3g}")
        h = floor

    estimator = KernelDensity(kernel='gaussian', bandwidth=h, rtol=1e-8).fit(data[:, None])
    values = np.exp(estimator.score_samples(grid[:, None]))
    errors = np.sqrt(values * GAUSSIAN_ROUGHNESS / (data.size * h))
    return DensityEstimate(lattice=grid, values=values, standard_errors=errors, bandwidth=h,
                           n_samples=int(data.size), reliable=reliable)


@dataclass
class ComparisonResult:
    frame: pd.DataFrame
    passed: bool
    max_excess: float
    reliable: bool


def compare_densities(reference: DensityGrid, estimate: DensityEstimate, center: float,
                      half_width: float, n_se: float = 3.0, peak_fraction: float = 0.01) -> ComparisonResult:
    """在窗口 |y - center| ≤ half_width 内检查 |p - kde| ≤ max(n_se·SE, peak_fraction·峰值)"""
    points = estimate.lattice
    window = np.abs(points - center) <= half_width + 1e-12
    if not np.any(window):
        raise ConfigurationError("对照窗口内没有格点")
    ref = reference.interpolate(points[window])
    est = estimate.values[window]
    band = np.maximum(n_se * estimate.standard_errors[window],
                      peak_fraction * float(np.max(reference.values)))
    excess = np.abs(ref - est) - band
    frame = pd.DataFrame({
        'y': points[window],
        'parametrix': ref,
        'kde': est,
        'se': estimate.standard_errors[window],
        'band': band,
        'within': excess <= 0,
    })
    passed = bool(np.all(excess <= 0))
    return ComparisonResult(frame=frame, passed=passed, max_excess=float(np.max(excess)),
                            reliable=estimate.reliable)
