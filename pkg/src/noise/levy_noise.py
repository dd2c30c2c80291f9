"""
Lévy 噪声 - 对称 (调和) 稳定类 Lévy 测度

ν(dz) = w(sign z)·c·q̄(|z|)·|z|^{-1-α} dz, 其中 q̄ 为调和函数:
  none:        q̄ ≡ 1
  exponential: q̄(s) = e^{-λs}
  tabulated:   log q̄ 对 log s 线性插值, 网格外常数外推
"""
import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate, interpolate, special

from config.config import Config
from src.exceptions import ConfigurationError, NumericalFailureError, SingularityError

logger = logging.getLogger(__name__)

TEMPERING_KINDS = ('none', 'exponential', 'tabulated')
DIMENSION = 1

# 谱数组求值所用样条的频率范围
_SPLINE_P_MIN = 1e-4
_SPLINE_P_MAX = 1e4
_SPLINE_POINTS = 321
# 不同 |p| 不超过该数目的数组直接逐点求积
_DIRECT_QUADRATURE_LIMIT = 64


def _is_unit_alpha(alpha: float) -> bool:
    return math.isclose(alpha, 1.0, rel_tol=0.0, abs_tol=1e-12)


@dataclass(frozen=True)
class Tempering:
    """调和函数 q̄ 的描述"""

    kind: str = 'none'
    lam: Optional[float] = None
    s_grid: Tuple[float, ...] = ()
    values: Tuple[float, ...] = ()

    def q_bar(self, s: Any) -> np.ndarray:
        """q̄(s), s ≥ 0, 向量化"""
        s = np.abs(np.asarray(s, dtype=float))
        if self.kind == 'none':
            return np.ones_like(s)
        if self.kind == 'exponential':
            return np.exp(-self.lam * s)
        log_grid = np.log(np.asarray(self.s_grid))
        log_vals = np.log(np.asarray(self.values))
        log_s = np.log(np.maximum(s, np.finfo(float).tiny))
        return np.exp(np.interp(log_s, log_grid, log_vals))

    @property
    def asymptotic_value(self) -> float:
        """q̄(∞), 用于幂律尾部的周期像修正"""
        if self.kind == 'none':
            return 1.0
        if self.kind == 'exponential':
            return 0.0
        return float(self.values[-1])

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {'kind': self.kind}
        if self.kind == 'exponential':
            data['lambda'] = self.lam
        elif self.kind == 'tabulated':
            data['s'] = list(self.s_grid)
            data['values'] = list(self.values)
        return data


@dataclass(frozen=True)
class TemperedStableSpec:
    """对称调和稳定噪声; scale_c 为 None 时按 c_eff = 1 归一化"""

    alpha: float
    tempering: Tempering = field(default_factory=Tempering)
    weight_plus: float = 1.0
    weight_minus: float = 1.0
    scale_c: Optional[float] = None
    gamma: float = 1.0

    def __post_init__(self) -> None:
        validate_spec(self)

    @property
    def weight_sum(self) -> float:
        return self.weight_plus + self.weight_minus

    @property
    def c(self) -> float:
        """实际使用的强度常数"""
        if self.scale_c is not None:
            return float(self.scale_c)
        return normalized_scale(self.alpha, self.weight_sum)

    def q_bar(self, s: Any) -> np.ndarray:
        return self.tempering.q_bar(s)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'alpha': self.alpha,
            'tempering': self.tempering.to_dict(),
            'weights': [self.weight_plus, self.weight_minus],
            'scale_c': self.scale_c,
            'gamma': self.gamma,
        }


@dataclass
class H2Report:
    """φ(p) ≤ -K|p|^α 的逐点检查结果"""

    p_grid: np.ndarray
    exponent: np.ndarray
    passed: np.ndarray
    k_requested: float
    largest_k: float

    @property
    def all_passed(self) -> bool:
        return bool(np.all(self.passed))


@dataclass
class DoublingReport:
    """q̄(s) ≤ C q̄(2s) 的检查结果"""

    constant: float
    monotone: bool
    grid: np.ndarray = field(repr=False, default_factory=lambda: np.empty(0))


def _unit_integral(alpha: float) -> float:
    """∫_0^∞ (1 - cos u) u^{-1-α} du"""
    if _is_unit_alpha(alpha):
        return math.pi / 2.0
    return special.gamma(1.0 - alpha) * math.cos(math.pi * alpha / 2.0) / alpha


def normalized_scale(alpha: float, weight_sum: float = 2.0) -> float:
    """使 c_eff = 1 的强度常数 c"""
    return 1.0 / (weight_sum * _unit_integral(alpha))


def pure_stable_constant(spec: TemperedStableSpec) -> float:
    """c_eff, 纯稳定情形 φ(p) = -c_eff|p|^α"""
    if spec.scale_c is None:
        return 1.0
    return spec.weight_sum * spec.scale_c * _unit_integral(spec.alpha)


def validate_spec(spec: TemperedStableSpec) -> None:
    """检查噪声描述的不变量, 失败时抛出 ConfigurationError"""
    alpha = spec.alpha
    if not (isinstance(alpha, (int, float)) and 0.0 < alpha < 2.0):
        raise ConfigurationError(f"alpha 必须位于 (0, 2): {alpha}")
    tempering = spec.tempering
    if tempering.kind not in TEMPERING_KINDS:
        raise ConfigurationError(f"未知的调和类型: {tempering.kind}")
    if tempering.kind == 'exponential':
        if tempering.lam is None or not tempering.lam > 0:
            raise ConfigurationError(f"指数调和需要 lambda > 0: {tempering.lam}")
    if tempering.kind == 'tabulated':
        grid = np.asarray(tempering.s_grid, dtype=float)
        values = np.asarray(tempering.values, dtype=float)
        if grid.size < 2 or grid.size != values.size:
            raise ConfigurationError("表格调和需要长度一致且至少两个点的 s 与 q̄")
        if np.any(grid <= 0) or np.any(np.diff(grid) <= 0):
            raise ConfigurationError("表格调和的 s 网格必须为正且严格递增")
        if np.any(values <= 0):
            raise ConfigurationError("q̄ 必须为正")
        if np.any(np.diff(values) > 0):
            raise ConfigurationError("q̄ 必须单调不增")
    for name, weight in (('weight_plus', spec.weight_plus), ('weight_minus', spec.weight_minus)):
        if not 0.0 < weight <= 1.0:
            raise ConfigurationError(f"{name} 必须位于 (0, 1]: {weight}")
    if abs(spec.weight_plus - spec.weight_minus) > 1e-12:
        raise ConfigurationError("仅支持对称噪声, 两侧权重必须相等")
    if spec.scale_c is not None and not spec.scale_c > 0:
        raise ConfigurationError(f"scale_c 必须为正: {spec.scale_c}")
    if not 1.0 <= spec.gamma <= DIMENSION:
        raise ConfigurationError(f"gamma 必须位于 [1, {DIMENSION}]: {spec.gamma}")
    if spec.gamma + alpha <= DIMENSION:
        logger.warning(f"gamma + alpha = {spec.gamma + alpha} ≤ d, 密度上界条件不成立")


# ---------------------------------------------------------------- 特征指数

def _quad(func, a: float, b: float, epsabs: float = 0.0, **kwargs) -> float:
    value, _ = integrate.quad(func, a, b, epsabs=epsabs, epsrel=Config.QUAD_EPSREL,
                              limit=Config.QUAD_LIMIT, **kwargs)
    return value


def _radial_integral(spec: TemperedStableSpec, p: float) -> float:
    """
    J(p) = ∫_0^∞ (1 - cos ps) q̄(s) s^{-1-α} ds.

    在 s0 = min(1, 1/p) 与 s1 = max(1, 1/p) 处分割: ps ≤ 1 的部分直接积分 2 sin²(ps/2),
    大 p 时 [s0, 1] 用 cos 权重求积; s ≥ s1 的振荡尾部拆成非振荡部分 (取 s = e^u)
    与 cos 权重部分. 小 p 时各段同为 O(p²) 量级, 不产生相消.
    """
    alpha = spec.alpha
    q = spec.tempering.q_bar
    if p == 0.0:
        return 0.0

    def radial(s: float) -> float:
        return float(q(s)) * s ** (-1.0 - alpha)

    def smooth(u: float) -> float:
        s = math.exp(u)
        return 2.0 * math.sin(0.5 * p * s) ** 2 * float(q(s)) * math.exp(-alpha * u)

    s0, s1 = min(1.0, 1.0 / p), max(1.0, 1.0 / p)
    total = _quad(lambda s: 2.0 * math.sin(0.5 * p * s) ** 2 * radial(s), 0.0, s0)
    if s0 < 1.0:
        total += _quad(radial, s0, 1.0)
        total -= _quad(radial, s0, 1.0, weight='cos', wvar=p)
    if s1 > 1.0:
        total += _quad(smooth, 0.0, math.log(s1))
    # 尾部量级为 s1^{-α}; 无穷区间上的 cos 权重求积只接受绝对容差
    tail_tol = 1e-3 * Config.QUAD_EPSREL * s1 ** (-alpha)
    total += _quad(lambda u: float(q(math.exp(u))) * math.exp(-alpha * u), math.log(s1), np.inf,
                   epsabs=tail_tol)
    total -= _quad(radial, s1, np.inf, epsabs=tail_tol, weight='cos', wvar=p)
    return total


def _exponent_by_quadrature(spec: TemperedStableSpec, p: float) -> float:
    return -spec.weight_sum * spec.c * _radial_integral(spec, abs(p))


@lru_cache(maxsize=32)
def _exponent_interpolant(spec: TemperedStableSpec):
    """-φ 在对数频率网格上的三次样条 (log-log)"""
    grid = np.logspace(math.log10(_SPLINE_P_MIN), math.log10(_SPLINE_P_MAX), _SPLINE_POINTS)
    values = np.array([-_exponent_by_quadrature(spec, p) for p in grid])
    if np.any(~np.isfinite(values)) or np.any(values <= 0):
        raise NumericalFailureError("特征指数样条节点非有限或非负", point=float(grid[0]))
    spline = interpolate.CubicSpline(np.log(grid), np.log(values))
    logger.debug(f"已构建特征指数样条: alpha={spec.alpha}, tempering={spec.tempering.kind}")
    return spline


def _exponent_from_spline(spec: TemperedStableSpec, ap: np.ndarray) -> np.ndarray:
    spline = _exponent_interpolant(spec)
    log_lo, log_hi = math.log(_SPLINE_P_MIN), math.log(_SPLINE_P_MAX)
    slope_lo = float(spline(log_lo, 1))
    slope_hi = float(spline(log_hi, 1))
    out = np.zeros_like(ap)
    positive = ap > 0
    log_p = np.log(ap[positive])
    inner = np.clip(log_p, log_lo, log_hi)
    log_val = spline(inner)
    log_val = np.where(log_p < log_lo, float(spline(log_lo)) + slope_lo * (log_p - log_lo), log_val)
    log_val = np.where(log_p > log_hi, float(spline(log_hi)) + slope_hi * (log_p - log_hi), log_val)
    out[positive] = -np.exp(log_val)
    return out


def levy_exponent(spec: TemperedStableSpec, p: Any) -> Any:
    """
    φ_Z(p) = ∫ (cos pz - 1) ν(dz), 实值, 非正, 偶函数.

    标量输入返回 float; 数组输入逐点求值. 需要求积的情形中, 小数组直接求积,
    大数组经由缓存样条.
    """
    p_arr = np.asarray(p, dtype=float)
    ap = np.abs(p_arr)
    alpha = spec.alpha
    kind = spec.tempering.kind

    with np.errstate(over='ignore', invalid='ignore'):
        if kind == 'none':
            result = -pure_stable_constant(spec) * ap ** alpha
        elif kind == 'exponential' and not _is_unit_alpha(alpha):
            lam = spec.tempering.lam
            bracket = ((lam ** 2 + ap ** 2) ** (alpha / 2.0) * np.cos(alpha * np.arctan(ap / lam))
                       - lam ** alpha)
            result = spec.weight_sum * spec.c * special.gamma(-alpha) * bracket
            result = np.minimum(result, 0.0)
        elif p_arr.ndim == 0:
            result = np.asarray(_exponent_by_quadrature(spec, float(ap)))
        else:
            unique, inverse = np.unique(ap, return_inverse=True)
            if unique.size <= _DIRECT_QUADRATURE_LIMIT:
                direct = np.array([_exponent_by_quadrature(spec, float(v)) for v in unique])
                result = direct[inverse].reshape(ap.shape)
            else:
                result = _exponent_from_spline(spec, ap)

    if not np.all(np.isfinite(result)):
        bad = p_arr[~np.isfinite(result)] if p_arr.ndim else p_arr
        raise NumericalFailureError(f"特征指数非有限: p={bad}", point=np.asarray(bad).tolist())
    if np.ndim(result) == 0:
        return float(result)
    return result


def verify_h2(spec: TemperedStableSpec, K: float, p_grid: Sequence[float]) -> H2Report:
    """逐点检查 φ(p) ≤ -K|p|^α (|p| > 1), 并给出最大可取的 K"""
    grid = np.asarray(p_grid, dtype=float).ravel()
    if grid.size == 0:
        raise ConfigurationError("H2 检查的频率网格为空")
    if np.any(np.abs(grid) <= 1.0):
        raise ConfigurationError("H2 检查只在 |p| > 1 上定义")
    exponent = np.array([levy_exponent(spec, p) for p in grid])
    power = np.abs(grid) ** spec.alpha
    ratios = -exponent / power
    passed = ratios >= K * (1.0 - 1e-12)
    report = H2Report(p_grid=grid, exponent=exponent, passed=passed,
                      k_requested=float(K), largest_k=float(np.min(ratios)))
    if not report.all_passed:
        logger.warning(f"H2 检查未通过 {int(np.sum(~passed))} 个频率点, 最大可取 K={report.largest_k:.6g}")
    return report


# ---------------------------------------------------------------- Lévy 测度

def levy_density(spec: TemperedStableSpec, z: Any) -> Any:
    """Lévy 密度 w(sign z)·c·q̄(|z|)/|z|^{1+α}"""
    z_arr = np.asarray(z, dtype=float)
    if np.any(z_arr == 0.0):
        raise SingularityError("Lévy 密度在 z = 0 处奇异")
    az = np.abs(z_arr)
    weight = np.where(z_arr > 0, spec.weight_plus, spec.weight_minus)
    result = weight * spec.c * spec.q_bar(az) * az ** (-1.0 - spec.alpha)
    if result.ndim == 0:
        return float(result)
    return result


@lru_cache(maxsize=65536)
def _tail_mass_scalar(spec: TemperedStableSpec, r: float) -> float:
    alpha = spec.alpha
    q = spec.tempering.q_bar

    def integrand(u: float) -> float:
        return float(q(math.exp(u))) * math.exp(-alpha * u)

    log_r = math.log(r)
    if log_r < 0.0:
        value = _quad(integrand, log_r, 0.0) + _quad(integrand, 0.0, np.inf)
    else:
        value = _quad(integrand, log_r, np.inf)
    return spec.c * value


def tail_mass(spec: TemperedStableSpec, r: Any) -> Any:
    """T(r) = ∫_r^∞ c q̄(s) s^{-1-α} ds (单位权重), r > 0"""
    r_arr = np.asarray(r, dtype=float)
    if np.any(r_arr <= 0):
        raise SingularityError("尾部质量只在 r > 0 上定义")
    if spec.tempering.kind == 'none':
        with np.errstate(divide='ignore'):
            result = spec.c * r_arr ** (-spec.alpha) / spec.alpha
        result = np.where(np.isinf(r_arr), 0.0, result)
    else:
        flat = r_arr.ravel()
        result = np.array([0.0 if math.isinf(v) else _tail_mass_scalar(spec, float(v))
                           for v in flat]).reshape(r_arr.shape)
    if result.ndim == 0:
        return float(result)
    return result


def _oriented_radii(a: float, b: float) -> Tuple[float, float, bool]:
    if a > b:
        raise ConfigurationError(f"区间端点顺序错误: [{a}, {b}]")
    if a <= 0.0 <= b:
        raise SingularityError(f"区间 [{a}, {b}] 包含奇点 0")
    if a > 0:
        return a, b, True
    return -b, -a, False


def dominating_mass(spec: TemperedStableSpec, a: float, b: float) -> float:
    """支配测度 m([a, b]) (单位权重), 半直线允许 b = ±∞"""
    if a == b:
        return 0.0
    lo, hi, _ = _oriented_radii(a, b)
    return tail_mass(spec, lo) - tail_mass(spec, hi)


def levy_measure(spec: TemperedStableSpec, a: float, b: float) -> float:
    """ν([a, b]), 使用实际两侧权重"""
    if a == b:
        return 0.0
    lo, hi, positive = _oriented_radii(a, b)
    weight = spec.weight_plus if positive else spec.weight_minus
    return weight * (tail_mass(spec, lo) - tail_mass(spec, hi))


@lru_cache(maxsize=256)
def second_moment(spec: TemperedStableSpec, eps: float) -> float:
    """∫_{|z|≤ε} z² ν(dz)"""
    if not eps > 0:
        raise ConfigurationError(f"截断半径必须为正: {eps}")
    alpha = spec.alpha
    if spec.tempering.kind == 'none':
        return spec.weight_sum * spec.c * eps ** (2.0 - alpha) / (2.0 - alpha)
    q = spec.tempering.q_bar
    value = _quad(lambda s: float(q(s)) * s ** (1.0 - alpha), 0.0, eps)
    return spec.weight_sum * spec.c * value


def check_doubling(spec: TemperedStableSpec, grid: Optional[Sequence[float]] = None) -> DoublingReport:
    """在对数网格上计算 sup q̄(s)/q̄(2s) 并检查单调性"""
    s = np.asarray(grid if grid is not None else np.logspace(-3, 2, 51), dtype=float)
    s = np.sort(s[s > 0])
    if s.size == 0:
        raise ConfigurationError("倍增检查的网格为空")
    with np.errstate(over='ignore', divide='ignore'):
        ratios = spec.q_bar(s) / spec.q_bar(2.0 * s)
    q_vals = spec.q_bar(s)
    monotone = bool(np.all(np.diff(q_vals) <= 1e-15))
    report = DoublingReport(constant=float(np.max(ratios)), monotone=monotone, grid=s)
    if not monotone:
        logger.warning("q̄ 在检查网格上不单调")
    return report


# ---------------------------------------------------------------- 序列化

def spec_from_dict(data: Dict[str, Any]) -> TemperedStableSpec:
    """从实验配置的 noise 段构造噪声描述"""
    try:
        tempering_data = data.get('tempering') or {'kind': 'none'}
        kind = tempering_data.get('kind', 'none')
        tempering = Tempering(
            kind=kind,
            lam=tempering_data.get('lambda'),
            s_grid=tuple(float(v) for v in tempering_data.get('s', ())),
            values=tuple(float(v) for v in tempering_data.get('values', ())),
        )
        weights = data.get('weights', [1.0, 1.0])
        scale_c = data.get('scale_c')
        return TemperedStableSpec(
            alpha=float(data['alpha']),
            tempering=tempering,
            weight_plus=float(weights[0]),
            weight_minus=float(weights[1]),
            scale_c=None if scale_c is None else float(scale_c),
            gamma=float(data.get('gamma', 1.0)),
        )
    except (KeyError, TypeError, ValueError, IndexError) as e:
        raise ConfigurationError(f"noise 配置无法解析: {e}") from e
