"""
SDE 模型 - 系数, 假设检查, 推前 Lévy 测度与稳定性距离 Δ_n
"""
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from config.config import Config
from src.exceptions import AssumptionError, ConfigurationError, SingularityError
from src.models.coefficients import (
    CoefficientField,
    ConstantField,
    LatticeAliasedField,
    ScaledField,
    ShiftedField,
    SinusoidalField,
    field_from_dict,
)
from src.noise.levy_noise import (
    TemperedStableSpec,
    dominating_mass,
    spec_from_dict,
    tail_mass,
)

logger = logging.getLogger(__name__)

PERTURBATION_KINDS = ('sigma_sine', 'drift_shift', 'combined', 'identical', 'lattice_aliased')

# Δ_n 视为零的阈值
DELTA_ZERO_TOL = 1e-12


@dataclass(frozen=True)
class SdeModel:
    """dX = b(t, X)dt + σ(t, X-)dZ"""

    noise: TemperedStableSpec
    drift: CoefficientField
    sigma: CoefficientField
    eta: float = 1.0
    kappa: float = 4.0
    name: str = 'base'

    def __post_init__(self) -> None:
        if not 0.0 < self.eta <= 1.0:
            raise ConfigurationError(f"Hölder 指数 eta 必须位于 (0, 1]: {self.eta}")
        if not self.kappa > 1.0:
            raise ConfigurationError(f"椭圆常数 kappa 必须大于 1: {self.kappa}")

    @property
    def alpha(self) -> float:
        return self.noise.alpha

    @property
    def time_homogeneous(self) -> bool:
        return self.drift.time_homogeneous and self.sigma.time_homogeneous

    def b(self, t: Any, x: Any) -> np.ndarray:
        return self.drift(t, x)

    def s(self, t: Any, x: Any) -> np.ndarray:
        return self.sigma(t, x)

    def holder_exponent(self) -> float:
        """η(α∧1)"""
        return self.eta * min(self.alpha, 1.0)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'noise': self.noise.to_dict(),
            'drift': self.drift.to_dict(),
            'sigma': self.sigma.to_dict(),
            'eta': self.eta,
            'kappa': self.kappa,
        }


def model_from_dict(noise: Dict[str, Any], coefficients: Dict[str, Any], name: str = 'base') -> SdeModel:
    """由实验配置的 noise / coefficients 段构造模型"""
    try:
        return SdeModel(
            noise=spec_from_dict(noise),
            drift=field_from_dict(coefficients.get('drift', 0.0)),
            sigma=field_from_dict(coefficients['sigma']),
            eta=float(coefficients.get('eta', 1.0)),
            kappa=float(coefficients.get('kappa', 4.0)),
            name=name,
        )
    except KeyError as e:
        raise ConfigurationError(f"coefficients 缺少字段: {e}") from e


@dataclass(frozen=True)
class ValidationLattice:
    """假设检查与 Δ_n 估计所用的 (t, x) 格点"""

    times: Tuple[float, ...]
    xs: Tuple[float, ...]

    @classmethod
    def regular(cls, t: float, T: float, center: float, half_width: float,
                n_x: int = Config.VALIDATION_POINTS, n_t: int = 5) -> 'ValidationLattice':
        times = tuple(np.linspace(t, T, n_t)) if T > t else (t,)
        xs = tuple(np.linspace(center - half_width, center + half_width, n_x))
        return cls(times=times, xs=xs)

    @property
    def spacing(self) -> float:
        return (self.xs[-1] - self.xs[0]) / max(len(self.xs) - 1, 1)


@dataclass(frozen=True)
class DeltaTestFamily:
    """Δ_n 的测试集族: 区间 [a, b] (可为半直线) 与求值格点"""

    intervals: Tuple[Tuple[float, float], ...]
    lattice: ValidationLattice


@dataclass
class ValidationReport:
    passed: bool
    sigma2_min: float
    sigma2_max: float
    holder_ratio: float
    drift_bound: float
    levy_holder_constant: Optional[float] = None
    warnings: List[str] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'passed': self.passed,
            'sigma2_min': self.sigma2_min,
            'sigma2_max': self.sigma2_max,
            'holder_ratio': self.holder_ratio,
            'drift_bound': self.drift_bound,
            'levy_holder_constant': self.levy_holder_constant,
            'warnings': list(self.warnings),
        }


@dataclass
class DeltaEstimate:
    """Δ_n 及其三个分量 (有限格点上的下界估计)"""

    value: float
    measure_term: float
    holder_term: float
    drift_term: float
    n_intervals: int

    @property
    def is_zero(self) -> bool:
        return self.value <= DELTA_ZERO_TOL


@dataclass
class PerturbationSequence:
    base: SdeModel
    perturbed: Tuple[SdeModel, ...]
    n_values: Tuple[int, ...]
    measured_delta: Tuple[DeltaEstimate, ...] = ()
    kind: str = 'identical'


def default_delta_family(lattice: ValidationLattice,
                         dyadic_range: Tuple[int, int] = Config.DYADIC_RANGE) -> DeltaTestFamily:
    """二进区间 [±2^j, ±2^{j+1}] 与半直线 [±2^j, ±∞)"""
    intervals: List[Tuple[float, float]] = []
    for j in range(dyadic_range[0], dyadic_range[1] + 1):
        lo, hi = 2.0 ** j, 2.0 ** (j + 1)
        intervals.append((lo, hi))
        intervals.append((-hi, -lo))
        intervals.append((lo, math.inf))
        intervals.append((-math.inf, -lo))
    return DeltaTestFamily(intervals=tuple(intervals), lattice=lattice)


def _grid(lattice: ValidationLattice) -> Tuple[np.ndarray, np.ndarray]:
    if not lattice.xs or not lattice.times:
        raise ConfigurationError("验证格点为空")
    ts = np.asarray(lattice.times, dtype=float)
    xs = np.asarray(lattice.xs, dtype=float)
    return ts, xs


def _pairwise_holder(values: np.ndarray, xs: np.ndarray, exponent: float,
                     delta: Optional[float] = None) -> float:
    """sup_{x≠x'} |f(x) - f(x')| / d(x, x'), d = |x-x'|^e (可选 δ∧)"""
    if xs.size < 2:
        return 0.0
    diff = np.abs(values[:, None] - values[None, :])
    dist = np.abs(xs[:, None] - xs[None, :]) ** exponent
    if delta is not None:
        dist = np.minimum(delta, dist)
    off_diagonal = ~np.eye(xs.size, dtype=bool)
    return float(np.max(diff[off_diagonal] / dist[off_diagonal]))


def pushforward_measure(model: SdeModel, t: float, x: Any, a: float, b: float) -> Any:
    """ν_t(x, [a, b]) = ν([a/σ, b/σ]), 对 x 向量化"""
    if a <= 0.0 <= b:
        raise SingularityError(f"区间 [{a}, {b}] 包含奇点 0")
    if a == b:
        return np.zeros_like(np.asarray(x, dtype=float)) if np.ndim(x) else 0.0
    sig = np.asarray(model.s(t, x), dtype=float)
    noise = model.noise
    positive = a > 0
    lo, hi = (a, b) if positive else (-b, -a)
    weight = noise.weight_plus if positive else noise.weight_minus
    value = weight * (tail_mass(noise, lo / sig) - tail_mass(noise, hi / sig))
    if np.ndim(value) == 0:
        return float(value)
    return value


def validate_assumptions(model: SdeModel, lattice: ValidationLattice, delta: float = Config.DELTA_CAP,
                         family: Optional[DeltaTestFamily] = None) -> ValidationReport:
    """在格点上检查椭圆性, σ 的 Hölder 比值, 漂移界以及 α ≤ 1 时 b ≡ 0"""
    ts, xs = _grid(lattice)
    tt, xx = np.meshgrid(ts, xs, indexing='ij')
    sig = model.s(tt, xx)
    sig2 = sig ** 2
    lower, upper = 1.0 / model.kappa, model.kappa
    margin = np.minimum(sig2 - lower, upper - sig2)
    margin = np.where(sig > 0, margin, -np.inf)
    if np.any(margin < 0):
        idx = np.unravel_index(int(np.argmin(margin)), margin.shape)
        witness = {'rule': 'ellipticity', 't': float(tt[idx]), 'x': float(xx[idx]),
                   'sigma': float(sig[idx]), 'bounds': [lower, upper]}
        raise AssumptionError(f"椭圆性不成立: σ(t={witness['t']:.4g}, x={witness['x']:.4g})"
                              f" = {witness['sigma']:.4g}", witness)

    drift = model.b(tt, xx)
    drift_bound = float(np.max(np.abs(drift)))
    if model.alpha <= 1.0 and drift_bound > 0.0:
        idx = np.unravel_index(int(np.argmax(np.abs(drift))), drift.shape)
        witness = {'rule': 'drift_vanishes_for_alpha_le_1', 't': float(tt[idx]),
                   'x': float(xx[idx]), 'drift': float(drift[idx]), 'alpha': model.alpha}
        raise AssumptionError(f"α = {model.alpha} ≤ 1 时漂移必须为零", witness)

    holder_ratio = max(_pairwise_holder(row, xs, model.eta) for row in sig)
    report = ValidationReport(passed=True, sigma2_min=float(np.min(sig2)),
                              sigma2_max=float(np.max(sig2)), holder_ratio=holder_ratio,
                              drift_bound=drift_bound)
    if family is not None:
        report.levy_holder_constant = levy_holder_constant(model, family, delta)
    logger.info(f"假设检查通过: σ² ∈ [{report.sigma2_min:.4g}, {report.sigma2_max:.4g}], "
                f"Hölder 比值 {holder_ratio:.4g}, |b| ≤ {drift_bound:.4g}")
    return report


def _family_times(model: SdeModel, lattice: ValidationLattice) -> np.ndarray:
    ts, _ = _grid(lattice)
    return ts[:1] if model.time_homogeneous else ts


def levy_holder_constant(model: SdeModel, family: DeltaTestFamily, delta: float = Config.DELTA_CAP) -> float:
    """sup_A sup_{x≠x'} |ν_t(x, A) - ν_t(x', A)| / ((δ∧|x-x'|^{η(α∧1)}) m(A))"""
    if not family.intervals:
        raise ConfigurationError("Δ_n 测试集族为空")
    _, xs = _grid(family.lattice)
    exponent = model.holder_exponent()
    best = 0.0
    for t in _family_times(model, family.lattice):
        for a, b in family.intervals:
            mass = dominating_mass(model.noise, a, b)
            if mass <= 0.0:
                continue
            nu = np.atleast_1d(pushforward_measure(model, float(t), xs, a, b))
            best = max(best, _pairwise_holder(nu, xs, exponent, delta) / mass)
    return best


def estimate_delta_n(base: SdeModel, perturbed: SdeModel, family: DeltaTestFamily,
                     delta: float = Config.DELTA_CAP, c_b: float = Config.DRIFT_CONSTANT) -> DeltaEstimate:
    """
    Δ_n 的有限格点估计, 取三个分量的最大值:
      测度项      sup |ν - ν_n|(A) / m(A)
      Hölder 项   sup |(ν - ν_n)(x, A) - (ν - ν_n)(x', A)| / ((δ∧|x-x'|^{η(α∧1)}) m(A))
      漂移项      sup |b - b_n| / C_b
    """
    if not family.intervals:
        raise ConfigurationError("Δ_n 测试集族为空")
    ts, xs = _grid(family.lattice)
    if base.noise != perturbed.noise:
        raise ConfigurationError("基准模型与扰动模型必须共享同一噪声")
    exponent = base.holder_exponent()
    homogeneous = base.time_homogeneous and perturbed.time_homogeneous
    times = ts[:1] if homogeneous else ts

    measure_term = 0.0
    holder_term = 0.0
    counted = 0
    for t in times:
        for a, b in family.intervals:
            mass = dominating_mass(base.noise, a, b)
            if mass <= 0.0:
                continue
            counted += 1
            diff = (np.atleast_1d(pushforward_measure(base, float(t), xs, a, b))
                    - np.atleast_1d(pushforward_measure(perturbed, float(t), xs, a, b)))
            measure_term = max(measure_term, float(np.max(np.abs(diff))) / mass)
            holder_term = max(holder_term, _pairwise_holder(diff, xs, exponent, delta) / mass)

    tt, xx = np.meshgrid(ts, xs, indexing='ij')
    drift_term = float(np.max(np.abs(base.b(tt, xx) - perturbed.b(tt, xx)))) / c_b
    value = max(measure_term, holder_term, drift_term)
    return DeltaEstimate(value=value, measure_term=measure_term, holder_term=holder_term,
                         drift_term=drift_term, n_intervals=counted)


def perturb_model(base: SdeModel, kind: str, amplitude: float, n: int,
                  lattice: Optional[ValidationLattice] = None) -> SdeModel:
    """构造扰动族中的第 n 个模型"""
    if kind not in PERTURBATION_KINDS:
        raise ConfigurationError(f"未知的扰动类型: {kind}")
    if n < 1:
        raise ConfigurationError(f"扰动序号必须为正整数: {n}")
    drift, sigma = base.drift, base.sigma
    if kind in ('sigma_sine', 'combined'):
        sigma = ScaledField(sigma, SinusoidalField(0.0, amplitude / n, 2.0, 0.0))
    if kind in ('drift_shift', 'combined'):
        drift = ShiftedField(drift, ConstantField(amplitude / n))
    if kind == 'lattice_aliased':
        if lattice is None:
            raise ConfigurationError("lattice_aliased 扰动需要验证格点")
        sigma = ScaledField(sigma, LatticeAliasedField(amplitude / n, lattice.xs[0], lattice.spacing))
    return replace(base, drift=drift, sigma=sigma, name=f"n={n}")


def build_perturbation_sequence(base: SdeModel, kind: str, amplitude: float, n_values: Sequence[int],
                                family: Optional[DeltaTestFamily] = None,
                                delta: float = Config.DELTA_CAP) -> PerturbationSequence:
    """构造扰动序列; 给出测试集族时同时估计每个 Δ_n"""
    n_tuple = tuple(int(n) for n in n_values)
    if not n_tuple:
        raise ConfigurationError("n_values 为空")
    if any(b <= a for a, b in zip(n_tuple, n_tuple[1:])):
        raise ConfigurationError(f"n_values 必须严格递增: {n_tuple}")
    lattice = family.lattice if family is not None else None
    perturbed = tuple(perturb_model(base, kind, amplitude, n, lattice) for n in n_tuple)
    deltas: Tuple[DeltaEstimate, ...] = ()
    if family is not None:
        deltas = tuple(estimate_delta_n(base, model, family, delta) for model in perturbed)
        values = [d.value for d in deltas]
        if any(b > a * (1.0 + 1e-9) for a, b in zip(values, values[1:])):
            logger.warning(f"Δ_n 不是单调递减的: {values}")
        logger.info(f"扰动族 {kind}: Δ_n = {[f'{v:.4g}' for v in values]}")
    return PerturbationSequence(base=base, perturbed=perturbed, n_values=n_tuple,
                                measured_delta=deltas, kind=kind)
