"""
稳定性比值 - 检查 |p - p_n| ≤ C Δ_n p̄ 在冻结, 核与级数三个层面是否一致有界
"""
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from config.config import Config
from src.density.frozen_density import pbar
from src.exceptions import ConfigurationError, InconsistencyError
from src.models.sde_model import PerturbationSequence
from src.parametrix.bounds import hbar, rho_m
from src.parametrix.config import ParametrixConfig
from src.parametrix.kernel import kernel_H
from src.parametrix.series import WEIGHT_FLOOR, ParametrixSeries, SeriesResult

logger = logging.getLogger(__name__)

# Δ_n = 0 时视为完全一致的上确界差异
EXACT_MATCH_TOL = 1e-10


@dataclass
class StabilityRow:
    n: int
    delta: float
    sup_diff: float
    r_frozen: Optional[float]
    r_kernel: Optional[float]
    r_density: Optional[float]
    term_ratios: List[float] = field(default_factory=list)
    status: str = 'bounded'


@dataclass
class StabilityReport:
    rows: List[StabilityRow]
    base: SeriesResult
    metadata: Dict[str, Any] = field(default_factory=dict)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            'n': [row.n for row in self.rows],
            'Delta_n': [row.delta for row in self.rows],
            'R_frozen': [np.nan if row.r_frozen is None else row.r_frozen for row in self.rows],
            'R_kernel': [np.nan if row.r_kernel is None else row.r_kernel for row in self.rows],
            'R_density': [np.nan if row.r_density is None else row.r_density for row in self.rows],
            'sup_diff': [row.sup_diff for row in self.rows],
            'status': [row.status for row in self.rows],
        })

    def level_values(self, level: str) -> List[float]:
        return [getattr(row, level) for row in self.rows if getattr(row, level) is not None]

    def verdict(self, level: str = 'r_density') -> bool:
        return boundedness_verdict(self.level_values(level))

    @property
    def monotone_decrease(self) -> bool:
        diffs = [row.sup_diff for row in self.rows]
        return all(b <= a for a, b in zip(diffs, diffs[1:]))


def boundedness_verdict(values: Sequence[float]) -> bool:
    """一致有界判据: 有限且 max ≤ 2·median; 没有数值时视为通过"""
    arr = np.asarray(list(values), dtype=float)
    if arr.size == 0:
        return True
    if not np.all(np.isfinite(arr)):
        return False
    return float(np.max(arr)) <= 2.0 * float(np.median(arr))


def _masked_ratio(numerator: np.ndarray, denominator: np.ndarray, mask: np.ndarray) -> float:
    return float(np.max(np.abs(numerator[mask]) / denominator[mask]))


def stability_ratio(sequence: PerturbationSequence, t: float, T: float, y: float,
                    x_lattice: Optional[Any] = None, config: Optional[ParametrixConfig] = None,
                    workers: int = Config.MAX_WORKERS) -> StabilityReport:
    """沿扰动序列计算 R_frozen, R_kernel, R_density 以及逐项比值"""
    config = config or ParametrixConfig()
    if len(sequence.measured_delta) != len(sequence.perturbed):
        raise ConfigurationError("扰动序列缺少 Δ_n 估计")
    base_model = sequence.base
    base = ParametrixSeries(base_model, config, workers).backward(t, T, y, x_lattice)
    lattice = base.density.lattice
    weights = pbar(t, T, lattice, y, base_model.noise)
    mask = weights >= WEIGHT_FLOOR * float(np.max(weights))

    grid = config.check_grid(y)
    grid_x, grid_y = np.meshgrid(grid, grid, indexing='ij')
    kernel_base = kernel_H(base_model, t, T, grid_x, grid_y, config)
    kernel_bound = hbar(base_model, t, T, grid_x, grid_y, config)
    kernel_mask = kernel_bound > 0
    term_bounds = [np.asarray(rho_m(base_model, t, T, lattice, y, m, config)) for m in range(base.order + 1)]

    rows: List[StabilityRow] = []
    for model, n, estimate in zip(sequence.perturbed, sequence.n_values, sequence.measured_delta):
        series = ParametrixSeries(model, config, workers).backward(t, T, y, lattice)
        diff = base.density.values - series.density.values
        sup_diff = float(np.max(np.abs(diff)))
        delta = estimate.value
        if estimate.is_zero:
            if sup_diff > EXACT_MATCH_TOL:
                raise InconsistencyError(f"n={n}: Δ_n = {delta:.3g} 但 sup|p - p_n| = {sup_diff:.3g}",
                                         {'n': n, 'delta': delta, 'sup_diff': sup_diff})
            rows.append(StabilityRow(n=n, delta=delta, sup_diff=sup_diff, r_frozen=None,
                                     r_kernel=None, r_density=None, status='exact-match'))
            continue
        scaled = delta * weights
        r_density = _masked_ratio(diff, scaled, mask)
        r_frozen = _masked_ratio(base.terms[0].values - series.terms[0].values, scaled, mask)
        kernel_n = kernel_H(model, t, T, grid_x, grid_y, config)
        r_kernel = _masked_ratio(kernel_base - kernel_n, delta * kernel_bound, kernel_mask)
        term_ratios = [
            _masked_ratio(base.terms[m].values - series.terms[m].values, delta * term_bounds[m], mask)
            for m in range(min(base.order, series.order) + 1)
        ]
        rows.append(StabilityRow(n=n, delta=delta, sup_diff=sup_diff, r_frozen=r_frozen,
                                 r_kernel=r_kernel, r_density=r_density, term_ratios=term_ratios))
        logger.info(f"n={n}: Δ_n={delta:.4g}, R_frozen={r_frozen:.4g}, R_kernel={r_kernel:.4g}, "
                    f"R_density={r_density:.4g}")

    report = StabilityReport(rows=rows, base=base, metadata={'t': t, 'T': T, 'y': y})
    if not report.monotone_decrease:
        logger.warning("sup|p - p_n| 沿序列不是单调递减的")
    return report
