"""
上界与不变量批量检查 - bounds 子命令
"""
import logging
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from config.config import Config
from src.density.frozen_density import (
    FrozenDensityRequest,
    drift_shift,
    fit_bound_constant,
    frozen_density_grid,
    pbar,
)
from src.density.levy_ito import compound_poisson_difference
from src.models.sde_model import PerturbationSequence, SdeModel
from src.noise.levy_noise import dominating_mass
from src.parametrix.bounds import hbar, rho_m
from src.parametrix.config import ParametrixConfig
from src.parametrix.convolution import space_time_convolve
from src.parametrix.kernel import kernel_H
from src.parametrix.series import WEIGHT_FLOOR, ParametrixSeries
from src.parametrix.stability import boundedness_verdict

logger = logging.getLogger(__name__)

SYMMETRY_TOL = 1e-10
SCALING_TOL = 1e-8
BILINEARITY_TOL = 1e-10


@dataclass
class BoundsCheck:
    name: str
    passed: bool
    value: float
    detail: Dict[str, Any] = field(default_factory=dict)


@dataclass
class BoundsReport:
    checks: List[BoundsCheck]
    constants: Dict[str, Any] = field(default_factory=dict)

    @property
    def all_passed(self) -> bool:
        return all(check.passed for check in self.checks)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            'check': [c.name for c in self.checks],
            'passed': [c.passed for c in self.checks],
            'value': [c.value for c in self.checks],
        })


def stable_within(constants: Sequence[float], factor: float) -> bool:
    """一组拟合常数是否在 factor 倍范围内一致; 全为零视为一致"""
    arr = np.asarray(list(constants), dtype=float)
    if arr.size == 0 or not np.all(np.isfinite(arr)):
        return False
    if np.all(arr == 0.0):
        return True
    if np.any(arr <= 0.0):
        return False
    return float(arr.max()) <= factor * float(arr.min())


class BoundsSuite:
    """在给定模型与配置上运行全部上界检查"""

    def __init__(self, model: SdeModel, config: ParametrixConfig, t: float, y: float,
                 factor: float = 2.0, workers: int = Config.MAX_WORKERS):
        self.model = model
        self.config = config
        self.t = t
        self.y = y
        self.factor = factor
        self.workers = workers
        self.logger = logging.getLogger(__name__)

    def frozen_envelope(self, horizons: Sequence[float]) -> BoundsCheck:
        """p̃ ≤ C p̄, C 跨时间跨度稳定"""
        constants = []
        for horizon in horizons:
            request = FrozenDensityRequest.default(self.model, self.t, self.t + horizon, self.y)
            grid = frozen_density_grid(request)
            envelope = pbar(self.t, self.t + horizon, grid.lattice, self.y, self.model.noise)
            constants.append(fit_bound_constant(grid.values, envelope, WEIGHT_FLOOR))
        passed = stable_within(constants, self.factor)
        self.logger.info(f"p̃ ≤ C p̄: C = {[f'{c:.4g}' for c in constants]}")
        return BoundsCheck('frozen_envelope', passed, max(constants),
                           {'horizons': list(horizons), 'constants': constants})

    def kernel_envelope(self, horizons: Sequence[float]) -> BoundsCheck:
        """|H| ≤ C_H H̄ 在检查网格上, C_H 跨时间跨度稳定"""
        grid = self.config.check_grid(self.y)
        px, py = np.meshgrid(grid, grid, indexing='ij')
        constants = []
        for horizon in horizons:
            T = self.t + horizon
            values = kernel_H(self.model, self.t, T, px, py, self.config)
            bound = hbar(self.model, self.t, T, px, py, self.config)
            if not np.any(values):
                constants.append(0.0)
                continue
            constants.append(fit_bound_constant(values, bound, WEIGHT_FLOOR))
        passed = stable_within(constants, self.factor)
        self.logger.info(f"|H| ≤ C_H H̄: C_H = {[f'{c:.4g}' for c in constants]}")
        return BoundsCheck('kernel_envelope', passed, max(constants),
                           {'horizons': list(horizons), 'constants': constants})

    def term_majorants(self, T: float, max_order: int) -> BoundsCheck:
        """
        |p̃ ⊗ H^{(m)}| ≤ C^m ρ_m, m ≤ max_order.
        C 由 m = 1, 2 拟合, 其余阶只做检验.
        """
        config = replace(self.config, k_max=max(max_order, 1), tail_tol=np.finfo(float).tiny)
        result = ParametrixSeries(self.model, config, self.workers).backward(self.t, T, self.y)
        lattice = result.density.lattice
        ratios = []
        for term in result.terms[1:max_order + 1]:
            bound = np.asarray(rho_m(self.model, self.t, T, lattice, self.y, term.order, config))
            ratios.append(fit_bound_constant(term.values, bound, WEIGHT_FLOOR))
        if not ratios or not np.any(ratios):
            return BoundsCheck('term_majorants', True, 0.0, {'ratios': ratios})
        fitted = max(ratios[0], ratios[1] ** 0.5 if len(ratios) > 1 else 0.0)
        passed = all(r <= self.factor * fitted ** m for m, r in enumerate(ratios, start=1))
        self.logger.info(f"逐项上界: 比值 {[f'{r:.3g}' for r in ratios]}, C = {fitted:.4g}")
        return BoundsCheck('term_majorants', passed, fitted, {'ratios': ratios})

    def chain(self, T: float, max_order: int) -> BoundsCheck:
        """ρ_m ⊗ H̄ ≤ C₀ ρ_{m+1}, 同一个 C₀"""
        x = self.config.check_grid(self.y)
        model, config = self.model, self.config
        constants = []
        for m in range(max_order):
            def f(a, b, xs, zs, m=m):
                return rho_m(model, a, b, xs, zs, m, config)

            def g(a, b, zs, y):
                return hbar(model, a, b, zs, y, config)

            conv = space_time_convolve(f, g, self.t, T, x, self.y, config, noise=model.noise)
            bound = np.asarray(rho_m(model, self.t, T, x, self.y, m + 1, config))
            constants.append(fit_bound_constant(conv.values, bound, WEIGHT_FLOOR))
        passed = stable_within(constants, self.factor)
        self.logger.info(f"ρ_m ⊗ H̄ ≤ C₀ ρ_(m+1): {[f'{c:.4g}' for c in constants]}")
        return BoundsCheck('chain', passed, max(constants), {'constants': constants})

    def symmetry(self, T: float) -> BoundsCheck:
        """p̃ 关于 y - B_y 对称"""
        grid = frozen_density_grid(FrozenDensityRequest.default(self.model, self.t, T, self.y))
        values = grid.values[1:]
        error = float(np.max(np.abs(values - values[::-1])))
        return BoundsCheck('symmetry', error <= SYMMETRY_TOL, error)

    def scaling(self, T: float) -> BoundsCheck:
        """纯稳定噪声: p̃_U(d) = U^{-1/α} p̃_1(d U^{-1/α})"""
        if self.model.noise.tempering.kind != 'none' or not self.model.time_homogeneous:
            return BoundsCheck('scaling', True, 0.0, {'skipped': True})
        alpha = self.model.alpha
        horizon = T - self.t
        base = FrozenDensityRequest.default(self.model, self.t, self.t + 1.0, self.y)
        factor = horizon ** (1.0 / alpha)
        # 冻结漂移只平移中心
        scaled = replace(base, T=T, half_width=base.half_width * factor,
                         center=self.y - float(drift_shift(self.model, self.t, T, self.y)[0]))
        p1 = frozen_density_grid(base).values
        pu = frozen_density_grid(scaled).values
        mask = p1 > 1e-6 * float(np.max(p1))
        error = float(np.max(np.abs(pu[mask] * factor / p1[mask] - 1.0)))
        return BoundsCheck('scaling', error <= SCALING_TOL, error, {'horizon': horizon})

    def bilinearity(self, T: float) -> BoundsCheck:
        """(a f₁ + b f₂) ⊗ g = a (f₁ ⊗ g) + b (f₂ ⊗ g)"""
        x = self.config.check_grid(self.y)
        model, config = self.model, self.config
        a, b = 0.7, -1.3

        def f1(s, u, xs, zs):
            return rho_m(model, s, u, xs, zs, 0, config)

        def f2(s, u, xs, zs):
            return pbar(s, u, xs, zs, model.noise)

        def mixed(s, u, xs, zs):
            return a * np.asarray(f1(s, u, xs, zs)) + b * np.asarray(f2(s, u, xs, zs))

        def g(u, s, zs, y):
            return hbar(model, u, s, zs, y, config)

        left = space_time_convolve(mixed, g, self.t, T, x, self.y, config, noise=model.noise).values
        right = (a * space_time_convolve(f1, g, self.t, T, x, self.y, config, noise=model.noise).values
                 + b * space_time_convolve(f2, g, self.t, T, x, self.y, config, noise=model.noise).values)
        error = float(np.max(np.abs(left - right))) / max(float(np.max(np.abs(right))), 1e-300)
        return BoundsCheck('bilinearity', error <= BILINEARITY_TOL, error)

    def series_consistency(self, T: float) -> BoundsCheck:
        """K_max 增加 1 后密度变化不超过 10·tail_tol·p̄"""
        series = ParametrixSeries(self.model, self.config, self.workers)
        base = series.backward(self.t, T, self.y)
        more = ParametrixSeries(self.model, replace(self.config, k_max=self.config.k_max + 1),
                                self.workers).backward(self.t, T, self.y)
        lattice = base.density.lattice
        weights = pbar(self.t, T, lattice, self.y, self.model.noise)
        mask = weights >= WEIGHT_FLOOR * float(np.max(weights))
        diff = np.abs(base.density.values - more.density.values)
        value = float(np.max(diff[mask] / weights[mask]))
        return BoundsCheck('series_consistency', value <= 10.0 * self.config.tail_tol, value,
                           {'order': base.order, 'order_plus': more.order})

    def compound_poisson(self, sequence: PerturbationSequence, T: float) -> BoundsCheck:
        """大跳分布的全变差距离与 Δ_n·Λ_m 之比一致有界"""
        h = self.config.spacing
        half_cells = self.config.lattice_points // 2
        horizon = T - self.t
        r0 = horizon ** (1.0 / self.model.alpha)
        dominating = horizon * (dominating_mass(self.model.noise, r0, np.inf)
                                + dominating_mass(self.model.noise, -np.inf, -r0))
        ratios = []
        for model, estimate in zip(sequence.perturbed, sequence.measured_delta):
            if estimate.is_zero:
                continue
            comparison = compound_poisson_difference(self.model, model, self.t, T, self.y, h, half_cells)
            ratios.append(comparison.tv_distance / (estimate.value * dominating))
        passed = boundedness_verdict(ratios)
        return BoundsCheck('compound_poisson', passed, max(ratios) if ratios else 0.0,
                           {'ratios': ratios})

    def run(self, T: float, frozen_horizons: Sequence[float], kernel_horizons: Sequence[float],
            max_order: int, sequence: Optional[PerturbationSequence] = None) -> BoundsReport:
        checks = [
            self.frozen_envelope(frozen_horizons),
            self.kernel_envelope(kernel_horizons),
            self.term_majorants(T, max_order),
            self.chain(T, max_order),
            self.symmetry(T),
            self.scaling(T),
            self.bilinearity(T),
            self.series_consistency(T),
        ]
        if sequence is not None and sequence.measured_delta:
            checks.append(self.compound_poisson(sequence, T))
        for check in checks:
            if not check.passed:
                self.logger.warning(f"检查未通过: {check.name} (值 {check.value:.4g})")
        constants = {
            'C_pbar': checks[0].value,
            'C_H': checks[1].value,
            'C_terms': checks[2].value,
            'C_chain': checks[3].value,
        }
        return BoundsReport(checks=checks, constants=constants)
