"""
增量采样器 - 对称稳定 (Chambers-Mallows-Stuck) 与指数调和稳定增量
"""
import logging
import math
from typing import Any, Optional

import numpy as np
from scipy import special

from config.config import Config
from src.exceptions import ConfigurationError, SimulationError
from src.noise.levy_noise import TemperedStableSpec, levy_measure, second_moment

logger = logging.getLogger(__name__)


def make_stream(seed: int, batch_index: int) -> np.random.Generator:
    """基于计数器的 Philox 流: key = seed, 计数器最高字 = 批次号"""
    if seed < 0 or batch_index < 0:
        raise ConfigurationError(f"seed 与批次号必须非负: {seed}, {batch_index}")
    return np.random.Generator(np.random.Philox(key=seed % (1 << 128), counter=batch_index << 192))


def _check_step(dt: float) -> None:
    if not dt > 0:
        raise ConfigurationError(f"时间步长必须为正: {dt}")


def _finish(values: np.ndarray, size: Optional[Any]) -> Any:
    return float(values[0]) if size is None else values


def sample_stable_increment(alpha: float, scale: float, dt: float, rng: np.random.Generator,
                            size: Optional[Any] = None) -> Any:
    """
    对称 α 稳定增量, 特征函数 exp(-dt·scale^α|p|^α).

    X = sin(αV)/cos(V)^{1/α} · (cos((1-α)V)/W)^{(1-α)/α}, V ~ U(-π/2, π/2), W ~ Exp(1);
    α = 1 时 X = tan V.
    """
    if not 0.0 < alpha < 2.0:
        raise ConfigurationError(f"alpha 必须位于 (0, 2): {alpha}")
    _check_step(dt)
    shape = 1 if size is None else size
    v = rng.uniform(-0.5 * math.pi, 0.5 * math.pi, shape)
    w = rng.standard_exponential(shape)
    if math.isclose(alpha, 1.0, rel_tol=0.0, abs_tol=1e-12):
        x = np.tan(v)
    else:
        x = (np.sin(alpha * v) / np.cos(v) ** (1.0 / alpha)
             * (np.cos((1.0 - alpha) * v) / w) ** ((1.0 - alpha) / alpha))
    return _finish(scale * dt ** (1.0 / alpha) * x, size)


def _positive_stable(alpha: float, rng: np.random.Generator, count: int) -> np.ndarray:
    """单侧正稳定变量 (Kanter 表示), E e^{-uS} = e^{-u^α}"""
    u = rng.uniform(0.0, math.pi, count)
    w = rng.standard_exponential(count)
    return (np.sin(alpha * u) / np.sin(u) ** (1.0 / alpha)
            * (np.sin((1.0 - alpha) * u) / w) ** ((1.0 - alpha) / alpha))


def _tilted_positive(spec: TemperedStableSpec, dt: float, rng: np.random.Generator, count: int,
                     budget: int) -> np.ndarray:
    """指数倾斜的单侧稳定增量: 以概率 e^{-λS} 接受"""
    alpha, lam = spec.alpha, spec.tempering.lam
    amplitude = (dt * spec.weight_plus * spec.c * abs(special.gamma(-alpha))) ** (1.0 / alpha)
    out = np.empty(count)
    pending = np.arange(count)
    for _ in range(budget):
        if pending.size == 0:
            return out
        draws = amplitude * _positive_stable(alpha, rng, pending.size)
        accept = rng.random(pending.size) < np.exp(-lam * draws)
        out[pending[accept]] = draws[accept]
        pending = pending[~accept]
    if pending.size == 0:
        return out
    raise SimulationError(f"拒绝采样超出预算 {budget} 轮, 剩余 {pending.size} 个样本")


def _jumps_above(spec: TemperedStableSpec, dt: float, eps: float, rng: np.random.Generator,
                 count: int, budget: int) -> np.ndarray:
    """|z| > ε 的复合泊松跳: Pareto 提议, 以 e^{-λ(z-ε)} 稀疏化, 随机符号"""
    alpha, lam = spec.alpha, spec.tempering.lam
    rate = dt * (levy_measure(spec, eps, math.inf) + levy_measure(spec, -math.inf, -eps))
    counts = rng.poisson(rate, count)
    total = int(counts.sum())
    if total == 0:
        return np.zeros(count)
    sizes = np.empty(total)
    pending = np.arange(total)
    for _ in range(budget):
        if pending.size == 0:
            break
        proposal = eps * (1.0 - rng.random(pending.size)) ** (-1.0 / alpha)
        accept = rng.random(pending.size) < np.exp(-lam * (proposal - eps))
        sizes[pending[accept]] = proposal[accept]
        pending = pending[~accept]
    if pending.size:
        raise SimulationError(f"跳幅拒绝采样超出预算 {budget} 轮")
    signs = np.where(rng.random(total) < 0.5, -1.0, 1.0)
    owners = np.repeat(np.arange(count), counts)
    return np.bincount(owners, weights=signs * sizes, minlength=count)


def sample_tempered_increment(spec: TemperedStableSpec, dt: float, rng: np.random.Generator,
                              size: Optional[Any] = None, epsilon: Optional[float] = None,
                              budget: int = Config.REJECTION_BUDGET) -> Any:
    """
    指数调和稳定增量.

    α < 1: 两个独立的倾斜单侧稳定变量之差;
    α ≥ 1: |z| > ε 的复合泊松跳加上方差为 dt∫_{|z|≤ε} z²ν(dz) 的高斯小跳替代, ε 默认 dt^{1/α}/10.
    """
    if spec.tempering.kind != 'exponential':
        raise ConfigurationError(f"调和增量采样只支持指数调和: {spec.tempering.kind}")
    _check_step(dt)
    count = 1 if size is None else int(np.prod(size))
    if spec.alpha < 1.0:
        values = (_tilted_positive(spec, dt, rng, count, budget)
                  - _tilted_positive(spec, dt, rng, count, budget))
    else:
        eps = dt ** (1.0 / spec.alpha) / 10.0 if epsilon is None else float(epsilon)
        if not eps > 0:
            raise ConfigurationError(f"小跳截断必须为正: {eps}")
        small = rng.normal(0.0, math.sqrt(dt * second_moment(spec, eps)), count)
        values = small + _jumps_above(spec, dt, eps, rng, count, budget)
    if size is None:
        return float(values[0])
    return values.reshape(size)
