"""
参数展开级数 p = Σ_k p̃ ⊗ H^{(k)}

后向形式固定终点 (T, y), 在初始变量 x 的格点上给出密度;
前向形式固定起点 x0, 在终点变量 y 的格点上给出密度. 两者共用同一组核矩阵.
"""
import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from scipy import integrate

from config.config import Config
from src.density.frozen_density import DensityGrid, pbar
from src.exceptions import ConfigurationError, QuadratureError, SeriesDivergenceError
from src.models.sde_model import SdeModel
from src.parametrix.config import ParametrixConfig
from src.parametrix.kernel import LatticeOperators
from src.utils.quadrature import TimeMesh, graded_time_mesh

logger = logging.getLogger(__name__)

# 加权范数只在 p̄ 不低于其最大值该比例的点上计算
WEIGHT_FLOOR = 1e-8


@dataclass
class SeriesTerm:
    order: int
    values: np.ndarray
    sup_norm: float
    weighted_sup_norm: float
    ratio: Optional[float] = None


@dataclass
class SeriesResult:
    density: DensityGrid
    terms: List[SeriesTerm]
    order: int
    converged: bool
    clip_magnitude: float
    mass: float
    direction: str
    metadata: Dict[str, Any] = field(default_factory=dict)

    def partial_sum(self, order: int) -> np.ndarray:
        return np.sum([term.values for term in self.terms[:order + 1]], axis=0)

    def terms_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            'k': [term.order for term in self.terms],
            'sup_norm': [term.sup_norm for term in self.terms],
            'weighted_sup_norm': [term.weighted_sup_norm for term in self.terms],
            'ratio': [np.nan if term.ratio is None else term.ratio for term in self.terms],
        })


def select_order(sup_norms: List[float], weighted: List[float], tail_tol: float,
                 k_max: int) -> Tuple[int, bool, List[Optional[float]]]:
    """
    选择截断阶 K: 第一个加权上确界低于 tail_tol 的项 k 不再计入, K = k - 1;
    没有这样的项时 K = K_max. 核恒为零时 K = 0.
    在 K 之前相邻项比值连续两次 ≥ 1 视为发散.
    """
    order, converged = k_max, False
    for k in range(1, k_max + 1):
        if weighted[k] < tail_tol:
            order, converged = k - 1, True
            break
    ratios: List[Optional[float]] = [None]
    streak = 0
    for k in range(1, len(sup_norms)):
        ratio = sup_norms[k] / sup_norms[k - 1] if sup_norms[k - 1] > 0 else None
        ratios.append(ratio)
        if k > order:
            continue
        streak = streak + 1 if ratio is not None and ratio >= 1.0 else 0
        if streak >= 2:
            raise SeriesDivergenceError(f"参数展开级数在第 {k} 阶发散: 相邻比值连续 ≥ 1",
                                        {'sup_norms': sup_norms[:k + 1]})
    return order, converged, ratios


class ParametrixSeries:
    """在均匀格点上计算参数展开级数"""

    def __init__(self, model: SdeModel, config: Optional[ParametrixConfig] = None,
                 workers: int = Config.MAX_WORKERS):
        self.model = model
        self.config = config or ParametrixConfig()
        self.workers = workers
        self.logger = logging.getLogger(__name__)

    def _resolve_lattice(self, center: float, lattice: Optional[Any]) -> Tuple[np.ndarray, int]:
        if lattice is None:
            grid = self.config.lattice(center)
        else:
            grid = np.asarray(lattice, dtype=float)
            if grid.ndim != 1 or grid.size < 8:
                raise ConfigurationError("格点必须是至少 8 个点的一维数组")
            steps = np.diff(grid)
            if np.any(steps <= 0) or not np.allclose(steps, steps[0], rtol=1e-9, atol=0.0):
                raise ConfigurationError("格点必须均匀递增")
        index = int(np.argmin(np.abs(grid - center)))
        if abs(grid[index] - center) > 1e-9 * (grid[1] - grid[0]):
            raise ConfigurationError(f"固定点 {center} 不在格点上")
        return grid, index

    def _time_mesh(self, t: float, T: float, n_nodes: int) -> TimeMesh:
        if not T > t:
            raise ConfigurationError(f"需要 T > t: t={t}, T={T}")
        return graded_time_mesh(t, T, n_nodes, self.config.grading)

    def _with_doubling(self, compute: Callable[[TimeMesh], np.ndarray], t: float,
                       T: float) -> Tuple[np.ndarray, Optional[np.ndarray]]:
        """在 time_nodes 与 2·time_nodes 两套网格上计算各项, 返回 (细网格结果, 粗网格结果)"""
        coarse = compute(self._time_mesh(t, T, self.config.time_nodes))
        if not self.config.check_doubling:
            return coarse, None
        fine = compute(self._time_mesh(t, T, 2 * self.config.time_nodes))
        return fine, coarse

    def _backward_terms(self, ops: LatticeOperators, t: float, T: float, iy: int,
                        mesh: TimeMesh) -> np.ndarray:
        u, om, h = mesh.nodes, mesh.weights, ops.h
        n, k_max = len(mesh), self.config.k_max

        # chain[k, i] = H^{(k)}(u_i, T, ·, y)
        chain = np.zeros((k_max + 1, n, ops.n))
        for i in reversed(range(n)):
            if ops.kernel_vanishes(u[i]):
                continue
            chain[1, i] = ops.kernel_matrix(u[i], T, columns=[iy])[:, 0]
            if k_max < 2:
                continue
            for j in range(i + 1, n):
                kernel = ops.kernel_matrix(u[i], u[j])
                chain[2:, i] += om[j] * h * (chain[1:k_max, j] @ kernel.T)

        terms = np.zeros((k_max + 1, ops.n))
        terms[0] = ops.frozen_matrix(t, T, columns=[iy])[:, 0]
        for i in range(n):
            if not np.any(chain[1:, i]):
                continue
            frozen = ops.frozen_matrix(t, u[i])
            terms[1:] += om[i] * h * (chain[1:, i] @ frozen.T)
        return terms

    def _forward_terms(self, ops: LatticeOperators, t: float, T: float, ix: int,
                       mesh: TimeMesh) -> np.ndarray:
        u, om, h = mesh.nodes, mesh.weights, ops.h
        n, k_max = len(mesh), self.config.k_max

        # chain[k, j] = (p̃ ⊗ H^{(k)})(t, u_j, x0, ·), k < K_max
        chain = np.zeros((k_max, n, ops.n))
        for j in range(n):
            chain[0, j] = ops.frozen_matrix(t, u[j], rows=[ix])[0]
            if k_max < 2:
                continue
            for i in range(j):
                if ops.kernel_vanishes(u[i]):
                    continue
                kernel = ops.kernel_matrix(u[i], u[j])
                chain[1:, j] += om[i] * h * (chain[:k_max - 1, i] @ kernel)

        terms = np.zeros((k_max + 1, ops.n))
        terms[0] = ops.frozen_matrix(t, T, rows=[ix])[0]
        for i in range(n):
            if ops.kernel_vanishes(u[i]):
                continue
            kernel = ops.kernel_matrix(u[i], T)
            terms[1:] += om[i] * h * (chain[:, i] @ kernel)
        return terms

    def backward(self, t: float, T: float, y: float, x_lattice: Optional[Any] = None) -> SeriesResult:
        """固定 (T, y), 计算 x ↦ p(t, T, x, y)"""
        lattice, iy = self._resolve_lattice(y, x_lattice)
        ops = LatticeOperators(self.model, lattice, self.config, self.workers)
        self.logger.info(f"后向级数: y={y}, [{t}, {T}], 格点 {ops.n}, "
                         f"时间节点 {self.config.time_nodes}, K_max={self.config.k_max}")
        terms, coarse = self._with_doubling(
            lambda mesh: self._backward_terms(ops, t, T, iy, mesh), t, T)
        weights = pbar(t, T, lattice, y, self.model.noise)
        return self._finish(terms, coarse, weights, t, T, lattice, y, 'backward')

    def forward(self, t: float, T: float, x0: float, y_lattice: Optional[Any] = None) -> SeriesResult:
        """固定起点 x0, 计算 y ↦ p(t, T, x0, y)"""
        lattice, ix = self._resolve_lattice(x0, y_lattice)
        ops = LatticeOperators(self.model, lattice, self.config, self.workers)
        self.logger.info(f"前向级数: x0={x0}, [{t}, {T}], 格点 {ops.n}, "
                         f"时间节点 {self.config.time_nodes}, K_max={self.config.k_max}")
        terms, coarse = self._with_doubling(
            lambda mesh: self._forward_terms(ops, t, T, ix, mesh), t, T)
        weights = pbar(t, T, x0, lattice, self.model.noise)
        return self._finish(terms, coarse, weights, t, T, x0, lattice, 'forward')

    def _doubling_report(self, terms: np.ndarray, coarse: Optional[np.ndarray], order: int,
                         direction: str) -> Dict[str, Any]:
        """截断阶 K 处两套时间网格部分和的差异; strict_doubling 时超差抛出 QuadratureError"""
        report: Dict[str, Any] = {'time_nodes': self.config.time_nodes, 'doubling_error': None,
                                  'quadrature_converged': None}
        if coarse is None:
            return report
        fine_sum = terms[:order + 1].sum(axis=0)
        error = float(np.max(np.abs(fine_sum - coarse[:order + 1].sum(axis=0))))
        scale = max(float(np.max(np.abs(fine_sum))), np.finfo(float).tiny)
        converged = error <= self.config.doubling_tol * scale + 1e-14
        report.update({'time_nodes': 2 * self.config.time_nodes, 'doubling_error': error,
                       'quadrature_converged': converged})
        if not converged:
            message = (f"{direction} 级数时间网格加倍后差异 {error:.3g} "
                       f"超过容差 {self.config.doubling_tol:.3g} (相对峰值 {scale:.3g})")
            if self.config.strict_doubling:
                raise QuadratureError(message, {'doubling_error': error, 'direction': direction})
            self.logger.warning(message)
        return report

    def _finish(self, terms: np.ndarray, coarse: Optional[np.ndarray], weights: np.ndarray,
                t: float, T: float, x: Any, y: Any, direction: str) -> SeriesResult:
        mask = weights >= WEIGHT_FLOOR * float(np.max(weights))
        sup_norms = [float(np.max(np.abs(row))) for row in terms]
        weighted = [float(np.max(np.abs(row[mask]) / weights[mask])) for row in terms]
        order, converged, ratios = select_order(sup_norms, weighted, self.config.tail_tol,
                                                self.config.k_max)
        quadrature = self._doubling_report(terms, coarse, order, direction)
        series_terms = [SeriesTerm(order=k, values=terms[k], sup_norm=sup_norms[k],
                                   weighted_sup_norm=weighted[k], ratio=ratios[k])
                        for k in range(order + 1)]
        total = terms[:order + 1].sum(axis=0)
        minimum = float(np.min(total))
        clip_magnitude = max(0.0, -minimum)
        if clip_magnitude > 1e-6 * float(np.max(np.abs(total))):
            self.logger.warning(f"{direction} 级数部分和出现负值 {minimum:.3g}, 已截断为 0")
        values = np.maximum(total, 0.0)
        lattice = np.asarray(x if direction == 'backward' else y, dtype=float)
        mass = float(integrate.trapezoid(values, lattice))
        if not converged:
            self.logger.warning(f"级数在 K_max={self.config.k_max} 处截断, 末项加权范数 "
                                f"{weighted[order]:.3g} 未达到 tail_tol={self.config.tail_tol:.3g}")
        self.logger.info(f"{direction} 级数完成: K={order}, 格内质量 {mass:.6f}")
        density = DensityGrid(t=t, T=T, x=x, y=y, values=values,
                              metadata={'order': order, 'clip_magnitude': clip_magnitude, **quadrature})
        return SeriesResult(density=density, terms=series_terms, order=order, converged=converged,
                            clip_magnitude=clip_magnitude, mass=mass, direction=direction,
                            metadata=quadrature)


def parametrix_series(model: SdeModel, t: float, T: float, y: float, x_lattice: Optional[Any] = None,
                      config: Optional[ParametrixConfig] = None) -> SeriesResult:
    """固定 (T, y) 的后向参数展开级数"""
    return ParametrixSeries(model, config).backward(t, T, y, x_lattice)


def parametrix_series_forward(model: SdeModel, t: float, T: float, x0: float,
                              y_lattice: Optional[Any] = None,
                              config: Optional[ParametrixConfig] = None) -> SeriesResult:
    """固定起点 x0 的前向参数展开级数"""
    return ParametrixSeries(model, config).forward(t, T, x0, y_lattice)
