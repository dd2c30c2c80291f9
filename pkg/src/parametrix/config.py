"""
参数展开引擎配置
"""
import logging
from dataclasses import asdict, dataclass, fields
from typing import Any, Dict, Optional

import numpy as np

from config.config import Config
from src.exceptions import ConfigurationError
from src.utils.fourier import is_power_of_two, offset_grid

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ParametrixConfig:
    """
    k_max          级数最高阶
    tail_tol       末项加权上确界的停止阈值
    time_nodes     时间网格节点总数 (双侧分级, 每段 2 个 Gauss-Legendre 节点)
    freq_nodes     逐点核求积的频率节点预算
    delta_cap      Hölder 距离截断 δ
    doubling_tol   时间网格加倍后允许的相对差异; check_doubling 关闭加倍检查,
                   strict_doubling 时超差抛出 QuadratureError
    omega          ρ_m 中的 ω; None 时取 η(α∧1)/α
    lattice_*      空间格点 (以 y 为中心, 点数为 2 的幂)
    check_*        核上界检查网格 (以 y 为中心的均匀网格)
    """

    k_max: int = 10
    tail_tol: float = 1e-6
    time_nodes: int = 48
    freq_nodes: int = 4096
    delta_cap: float = Config.DELTA_CAP
    omega: Optional[float] = None
    lattice_points: int = 128
    lattice_half_width: float = 16.0
    fft_padding: int = 2
    chebyshev_degree: int = 12
    grading: float = 2.0
    doubling_tol: float = 1e-3
    check_doubling: bool = True
    strict_doubling: bool = False
    check_points: int = 21
    check_half_width: float = 4.0

    def __post_init__(self) -> None:
        if self.k_max < 1:
            raise ConfigurationError(f"k_max 必须 ≥ 1: {self.k_max}")
        if not self.tail_tol > 0:
            raise ConfigurationError(f"tail_tol 必须为正: {self.tail_tol}")
        if self.time_nodes < 2:
            raise ConfigurationError(f"time_nodes 必须 ≥ 2: {self.time_nodes}")
        if self.freq_nodes < 16:
            raise ConfigurationError(f"freq_nodes 必须 ≥ 16: {self.freq_nodes}")
        if not is_power_of_two(self.lattice_points) or self.lattice_points < 8:
            raise ConfigurationError(f"lattice_points 必须为不小于 8 的 2 的幂: {self.lattice_points}")
        if not self.lattice_half_width > 0:
            raise ConfigurationError(f"lattice_half_width 必须为正: {self.lattice_half_width}")
        if self.fft_padding < 1:
            raise ConfigurationError(f"fft_padding 必须 ≥ 1: {self.fft_padding}")
        if self.omega is not None and not 0.0 < self.omega <= 1.0:
            raise ConfigurationError(f"omega 必须位于 (0, 1]: {self.omega}")
        if not self.delta_cap > 0:
            raise ConfigurationError(f"delta_cap 必须为正: {self.delta_cap}")
        if self.grading < 1.0:
            raise ConfigurationError(f"grading 必须 ≥ 1: {self.grading}")
        if not self.doubling_tol > 0:
            raise ConfigurationError(f"doubling_tol 必须为正: {self.doubling_tol}")

    @property
    def spacing(self) -> float:
        return 2.0 * self.lattice_half_width / self.lattice_points

    def lattice(self, center: float) -> np.ndarray:
        return center + offset_grid(self.lattice_points, self.spacing)

    def check_grid(self, center: float) -> np.ndarray:
        return np.linspace(center - self.check_half_width, center + self.check_half_width,
                           self.check_points)

    def resolve_omega(self, alpha: float, eta: float) -> float:
        """ω, 未设置时取 η(α∧1)/α"""
        default = eta * min(alpha, 1.0) / alpha
        if self.omega is None:
            return default
        if abs(self.omega - default) > 1e-12:
            logger.warning(f"omega={self.omega} 与默认值 η(α∧1)/α={default:.6g} 不一致")
        return self.omega

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Optional[Dict[str, Any]]) -> 'ParametrixConfig':
        data = dict(data or {})
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(f"parametrix 配置含未知字段: {sorted(unknown)}")
        try:
            return cls(**data)
        except TypeError as e:
            raise ConfigurationError(f"parametrix 配置无法解析: {e}") from e
