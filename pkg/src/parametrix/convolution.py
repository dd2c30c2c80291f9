"""
时空卷积 (f ⊗ g)(t, T, x, y) = ∫_t^T du ∫ f(t, u, x, z) g(u, T, z, y) dz
"""
import logging
from dataclasses import dataclass
from typing import Any, Callable, Optional

import numpy as np

from src.exceptions import ConfigurationError, QuadratureError
from src.noise.levy_noise import TemperedStableSpec
from src.parametrix.config import ParametrixConfig
from src.utils.quadrature import graded_time_mesh, trapezoid_weights

logger = logging.getLogger(__name__)

SpaceTimeFunction = Callable[[Any, Any, Any, Any], Any]


@dataclass
class ConvolutionResult:
    x: np.ndarray
    y: float
    values: np.ndarray
    coarse_values: np.ndarray
    doubling_error: float
    converged: bool
    envelope_decay: float


def envelope_exponent(noise: TemperedStableSpec) -> float:
    """p̄ 包络的幂律衰减指数 γ + α"""
    return noise.gamma + noise.alpha


def _convolve_on_mesh(f: SpaceTimeFunction, g: SpaceTimeFunction, t: float, T: float,
                      x: np.ndarray, y: float, z: np.ndarray, n_nodes: int, grading: float,
                      decay: float, scale: float) -> np.ndarray:
    h = float(z[1] - z[0])
    weights_z = trapezoid_weights(z.size, h)
    mesh = graded_time_mesh(t, T, n_nodes, grading)
    total = np.zeros(x.size)
    for u, weight in zip(mesh.nodes, mesh.weights):
        f_vals = np.broadcast_to(np.asarray(f(t, u, x[:, None], z[None, :]), dtype=float),
                                 (x.size, z.size))
        g_vals = np.broadcast_to(np.asarray(g(u, T, z, y), dtype=float), z.shape)
        integrand = f_vals * g_vals[None, :]
        space = integrand @ weights_z
        # 格点外用包络 (1 + |z-x|/s)^{-β} 补齐尾部
        d_right = np.maximum(z[-1] - x, 0.0)
        d_left = np.maximum(x - z[0], 0.0)
        space += integrand[:, -1] * (scale + d_right) / (decay - 1.0)
        space += integrand[:, 0] * (scale + d_left) / (decay - 1.0)
        total += weight * space
    return total


def space_time_convolve(f: SpaceTimeFunction, g: SpaceTimeFunction, t: float, T: float,
                        x_lattice: Any, y: float, config: ParametrixConfig, strict: bool = False,
                        noise: Optional[TemperedStableSpec] = None,
                        envelope_decay: Optional[float] = None,
                        envelope_scale: Optional[float] = None) -> ConvolutionResult:
    """
    f(t, u, x, z) 与 g(u, T, z, y) 的时空卷积 (向量化可调用对象).

    空间积分在以 y 为中心的配置格点上用梯形公式, 时间积分用双侧分级网格;
    格点外的尾部按 p̄ 包络补齐, 衰减指数默认取噪声的 γ + α, 尺度默认取 (T-t)^{1/α}.
    网格加倍后差异超过 doubling_tol 时, strict 模式抛出 QuadratureError, 否则只标记.
    """
    if not T > t:
        raise ConfigurationError(f"需要 T > t: t={t}, T={T}")
    if envelope_decay is None:
        if noise is None:
            raise ConfigurationError("尾部补齐需要噪声描述或显式的包络衰减指数")
        envelope_decay = envelope_exponent(noise)
    if not envelope_decay > 1.0:
        raise ConfigurationError(f"包络衰减指数必须大于 1: {envelope_decay}")
    if envelope_scale is None:
        envelope_scale = (T - t) ** (1.0 / noise.alpha) if noise is not None else 1.0
    x = np.atleast_1d(np.asarray(x_lattice, dtype=float))
    z = config.lattice(y)
    args = (f, g, t, T, x, y, z)
    coarse = _convolve_on_mesh(*args, config.time_nodes, config.grading, envelope_decay, envelope_scale)
    fine = _convolve_on_mesh(*args, 2 * config.time_nodes, config.grading, envelope_decay, envelope_scale)
    error = float(np.max(np.abs(fine - coarse)))
    scale = max(float(np.max(np.abs(fine))), np.finfo(float).tiny)
    converged = error <= config.doubling_tol * scale + 1e-14
    if not converged:
        message = f"时间网格加倍后卷积差异 {error:.3g} 超过容差 {config.doubling_tol:.3g}"
        if strict:
            raise QuadratureError(message, {'doubling_error': error})
        logger.warning(message)
    return ConvolutionResult(x=x, y=y, values=fine, coarse_values=coarse,
                             doubling_error=error, converged=converged, envelope_decay=envelope_decay)
