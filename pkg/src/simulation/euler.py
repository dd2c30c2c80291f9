"""
Euler 格式模拟 - 分批, 计数器随机流, 确定性合并
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional

import numpy as np
from tqdm import tqdm

from config.config import Config
from src.exceptions import ConfigurationError, SimulationError
from src.models.sde_model import SdeModel
from src.noise.levy_noise import pure_stable_constant
from src.simulation.samplers import make_stream, sample_stable_increment, sample_tempered_increment

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SimulationPlan:
    model: SdeModel
    t0: float
    T: float
    x0: float
    n_steps: int
    n_paths: int
    seed: int
    batch_size: int = 10000
    epsilon: Optional[float] = None

    def __post_init__(self) -> None:
        if self.n_steps < 1:
            raise ConfigurationError(f"n_steps 必须 ≥ 1: {self.n_steps}")
        if self.n_paths < 1:
            raise ConfigurationError(f"n_paths 必须 ≥ 1: {self.n_paths}")
        if self.batch_size < 1:
            raise ConfigurationError(f"batch_size 必须 ≥ 1: {self.batch_size}")
        if not self.T > self.t0:
            raise ConfigurationError(f"需要 T > t0: t0={self.t0}, T={self.T}")
        if self.seed < 0:
            raise ConfigurationError(f"seed 必须非负: {self.seed}")

    @property
    def dt(self) -> float:
        return (self.T - self.t0) / self.n_steps

    @property
    def n_batches(self) -> int:
        return math.ceil(self.n_paths / self.batch_size)

    def batch_length(self, index: int) -> int:
        return min(self.batch_size, self.n_paths - index * self.batch_size)


@dataclass
class SimulationResult:
    samples: np.ndarray
    excluded: int
    plan: SimulationPlan
    metadata: Dict[str, Any] = field(default_factory=dict)

    @property
    def n_valid(self) -> int:
        return int(self.samples.size)


def increment_sampler(model: SdeModel, epsilon: Optional[float] = None) -> Callable[..., np.ndarray]:
    """返回 (rng, dt, size) ↦ 噪声增量 的采样函数"""
    noise = model.noise
    kind = noise.tempering.kind
    if kind == 'none':
        scale = pure_stable_constant(noise) ** (1.0 / noise.alpha)
        return lambda rng, dt, size: sample_stable_increment(noise.alpha, scale, dt, rng, size)
    if kind == 'exponential':
        return lambda rng, dt, size: sample_tempered_increment(noise, dt, rng, size, epsilon)
    raise ConfigurationError(f"没有 {kind} 调和噪声的增量采样器")


def _simulate_batch(plan: SimulationPlan, index: int,
                    sampler: Callable[..., np.ndarray]) -> np.ndarray:
    rng = make_stream(plan.seed, index)
    size = plan.batch_length(index)
    model, dt = plan.model, plan.dt
    x = np.full(size, float(plan.x0))
    with np.errstate(over='ignore', invalid='ignore'):
        for step in range(plan.n_steps):
            t = plan.t0 + step * dt
            dz = sampler(rng, dt, size)
            x = x + model.b(t, x) * dt + model.s(t, x) * dz
    return x


def euler_simulate(plan: SimulationPlan, workers: int = Config.MAX_WORKERS,
                   progress: bool = True) -> SimulationResult:
    """Euler 格式终值样本; 每批独立随机流, 按批次号合并, 结果与并行度无关"""
    sampler = increment_sampler(plan.model, plan.epsilon)
    indices = range(plan.n_batches)
    logger.info(f"开始模拟: {plan.n_paths} 条路径, {plan.n_steps} 步, {plan.n_batches} 批, seed={plan.seed}")

    batches: List[np.ndarray]
    with ThreadPoolExecutor(max_workers=max(int(workers), 1)) as executor:
        iterator = executor.map(lambda i: _simulate_batch(plan, i, sampler), indices)
        batches = list(tqdm(iterator, total=plan.n_batches, desc="模拟批次", disable=not progress))

    terminal = np.concatenate(batches)
    finite = np.isfinite(terminal)
    excluded = int(np.sum(~finite))
    if excluded / plan.n_paths >= Config.MAX_NONFINITE_FRACTION:
        raise SimulationError(f"非有限路径比例过高: {excluded}/{plan.n_paths}")
    if excluded:
        logger.warning(f"已排除 {excluded} 条非有限路径")
    logger.info(f"模拟完成: 有效样本 {int(finite.sum())}")
    return SimulationResult(samples=terminal[finite], excluded=excluded, plan=plan,
                            metadata={'dt': plan.dt, 'n_batches': plan.n_batches})
