"""
冻结密度 - 冻结系数过程的转移密度 p̃ 及其上界 p̄

冻结在 y 的过程 X̃_s = x + ∫_t^s b(u, y) du + ∫_t^s σ(u, y) dZ_u, 其特征指数为
Ψ_y(p) = i p B_y + ∫_t^T φ_Z(σ(u, y) p) du, B_y = ∫_t^T b(u, y) du.
密度由零填充 FFT 反演得到, 周期像按尾部渐近展开扣除.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import integrate, special

from config.config import Config
from src.exceptions import ConfigurationError, ResolutionError
from src.models.sde_model import SdeModel
from src.noise.levy_noise import (
    TemperedStableSpec,
    levy_density,
    levy_exponent,
    levy_measure,
    pure_stable_constant,
)
from src.utils.fourier import fourier_inverse, frequency_grid, is_power_of_two, offset_grid
from src.utils.quadrature import interval_gauss_legendre

logger = logging.getLogger(__name__)

# 时间非齐次系数的时间求积节点数
TIME_QUADRATURE_NODES = 16
# 纯稳定尾部渐近展开的项数与一般情形显式周期像个数
TAIL_SERIES_TERMS = 6
EXPLICIT_IMAGES = 3
# 默认请求允许落在格点外的尾部概率, 及半宽加倍次数上限
TAIL_BUDGET = 0.25 * (1.0 - Config.MASS_BAND[0])
MAX_WIDENINGS = 6


@dataclass
class DensityGrid:
    """
    一个时间对 (t, T) 上的密度格点.

    x 与 y 中恰有一个是数组 (格点变量), 另一个是标量.
    """

    t: float
    T: float
    x: Any
    y: Any
    values: np.ndarray
    errors: Optional[np.ndarray] = None
    metadata: Dict[str, Any] = field(default_factory=dict)

    @property
    def variable(self) -> str:
        return 'x' if np.ndim(self.x) else 'y'

    @property
    def lattice(self) -> np.ndarray:
        return np.asarray(self.x if self.variable == 'x' else self.y, dtype=float)

    @property
    def spacing(self) -> float:
        lattice = self.lattice
        return float(lattice[1] - lattice[0])

    def mass(self) -> float:
        return float(integrate.trapezoid(self.values, self.lattice))

    def interpolate(self, points: Any) -> np.ndarray:
        return np.interp(np.asarray(points, dtype=float), self.lattice, self.values)

    def to_frame(self) -> pd.DataFrame:
        n = len(self.values)
        frame = pd.DataFrame({
            't': np.full(n, self.t),
            'T': np.full(n, self.T),
            'y': np.broadcast_to(np.asarray(self.y, dtype=float), (n,)),
            'x': np.broadcast_to(np.asarray(self.x, dtype=float), (n,)),
            'value': self.values,
        })
        if self.errors is not None:
            frame['error'] = self.errors
        return frame


@dataclass(frozen=True)
class FrozenDensityRequest:
    """冻结密度的格点请求: 格点 x_m = center + (m - points/2)·h, h = 2·half_width/points"""

    model: SdeModel
    t: float
    T: float
    y: float
    center: float
    half_width: float
    points: int = Config.FFT_POINTS
    padding: int = Config.FFT_PADDING

    def __post_init__(self) -> None:
        if not self.T > self.t:
            raise ConfigurationError(f"需要 T > t: t={self.t}, T={self.T}")
        if not is_power_of_two(self.points):
            raise ConfigurationError(f"格点数必须为 2 的幂: {self.points}")
        if self.padding < 1:
            raise ConfigurationError(f"零填充倍数必须 ≥ 1: {self.padding}")
        scale = (self.T - self.t) ** (1.0 / self.model.alpha)
        if self.half_width - abs(self.mode - self.center) < 10.0 * scale:
            raise ConfigurationError(
                f"格点半宽 {self.half_width} 不足以覆盖 center 与 y - B_y 周围 10 个尺度单位 ({scale:.4g})")

    @classmethod
    def default(cls, model: SdeModel, t: float, T: float, y: float,
                center: Optional[float] = None) -> 'FrozenDensityRequest':
        """以 y - B_y 为中心; 半宽从 40 个尺度单位起加倍, 直到格外尾部概率不超过 TAIL_BUDGET"""
        if not T > t:
            raise ConfigurationError(f"需要 T > t: t={t}, T={T}")
        scale = (T - t) ** (1.0 / model.alpha)
        mode = y - float(drift_shift(model, t, T, y)[0])
        center = mode if center is None else center
        half_width = max(Config.FFT_HALF_WIDTH_FACTOR * scale, Config.FFT_HALF_WIDTH_FACTOR)
        half_width += abs(mode - center)
        for _ in range(MAX_WIDENINGS):
            tail = _tail_beyond(model, t, T, y, mode - center - half_width, mode - center + half_width)
            if tail <= TAIL_BUDGET:
                break
            half_width *= 2.0
        return cls(model=model, t=t, T=T, y=y, center=center, half_width=half_width)

    @property
    def mode(self) -> float:
        """p̃(t, T, ·, y) 的对称中心 y - B_y"""
        return self.y - float(drift_shift(self.model, self.t, self.T, self.y)[0])

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_width / self.points

    @property
    def lattice(self) -> np.ndarray:
        return self.center + offset_grid(self.points, self.spacing)


# ---------------------------------------------------------------- 特征指数

def sigma_nodes(model: SdeModel, t: float, T: float, points: Any) -> Tuple[np.ndarray, np.ndarray]:
    """
    冻结点上 σ 的时间求积: 返回 σ(u_q, points) 形状 (C, Q) 与权重 (Q,), 权重和为 T - t.
    时间齐次时 Q = 1.
    """
    points = np.atleast_1d(np.asarray(points, dtype=float))
    if model.sigma.time_homogeneous:
        return model.s(t, points)[:, None], np.array([T - t])
    nodes, weights = interval_gauss_legendre(t, T, TIME_QUADRATURE_NODES)
    return model.s(nodes[None, :], points[:, None]), weights


def columns_exponent(noise: TemperedStableSpec, sig: np.ndarray, weights: np.ndarray,
                     p: np.ndarray) -> np.ndarray:
    """Σ_q w_q φ(σ_{c,q} p), 形状 (C, len(p))"""
    out = np.zeros((sig.shape[0], p.size))
    for q, weight in enumerate(weights):
        out += weight * levy_exponent(noise, sig[:, q, None] * p[None, :])
    return out


def drift_shift(model: SdeModel, t: float, T: float, points: Any) -> np.ndarray:
    """冻结点上的漂移位移 B = ∫_t^T b(u, points) du, 形状 (C,)"""
    points = np.atleast_1d(np.asarray(points, dtype=float))
    if model.drift.is_zero():
        return np.zeros(points.size)
    if model.drift.time_homogeneous:
        return (T - t) * np.asarray(model.b(t, points), dtype=float)
    nodes, weights = interval_gauss_legendre(t, T, TIME_QUADRATURE_NODES)
    return model.b(nodes[None, :], points[:, None]) @ weights


def frozen_exponent(model: SdeModel, t: float, T: float, y: float, p: Any) -> Any:
    """冻结在 y 的过程在 [t, T] 上的特征指数 Ψ_y(p); 漂移不为零时为复数"""
    if not T > t:
        raise ConfigurationError(f"需要 T > t: t={t}, T={T}")
    sig, weights = sigma_nodes(model, t, T, y)
    if weights.size == 1:
        scaled = float(sig[0, 0]) * (np.asarray(p, dtype=float) if np.ndim(p) else float(p))
        out = float(weights[0]) * levy_exponent(model.noise, scaled)
    else:
        p_arr = np.asarray(p, dtype=float)
        values = levy_exponent(model.noise, np.multiply.outer(sig[0], p_arr))
        out = np.tensordot(weights, values, axes=1)
    shift = float(drift_shift(model, t, T, y)[0])
    if shift != 0.0:
        out = out + 1j * shift * np.asarray(p, dtype=float)
    if np.ndim(out) == 0:
        return complex(out) if shift != 0.0 else float(out)
    return out


# ---------------------------------------------------------------- 周期像修正

def _stable_series_coefficient(k: int, alpha: float) -> float:
    """单位尺度对称稳定密度尾部展开 Σ a_k |x|^{-kα-1} 的系数"""
    return ((-1) ** (k + 1) * special.gamma(k * alpha + 1.0) / math.factorial(k)
            * math.sin(k * math.pi * alpha / 2.0) / math.pi)


def _image_sums(exponent: float, w: np.ndarray, period: float, first: int = 1) -> np.ndarray:
    """Σ_{k≥first} [(kP + w)^{-s} + (kP - w)^{-s}], 由 Hurwitz zeta 给出"""
    return period ** (-exponent) * (special.zeta(exponent, first + w / period)
                                    + special.zeta(exponent, first - w / period))


def periodic_image_correction(noise: TemperedStableSpec, sig: np.ndarray, weights: np.ndarray,
                              w: np.ndarray, period: float) -> np.ndarray:
    """
    周期化误差 Σ_{k≠0} f(w + kP) 的近似.

    纯稳定噪声使用尾部渐近展开的前若干项 (每项对全部周期像求和);
    其余情形使用一阶尾部 f(r) ≈ Σ_q w_q ν(r/σ_q)/σ_q, 近处像显式求和, 远处幂律部分用 Hurwitz zeta.
    sig: (C, Q), weights: (Q,), w 可广播到 (C, M).
    """
    alpha = noise.alpha
    sig_alpha = (sig ** alpha) @ weights
    w = np.asarray(w, dtype=float)
    shape = np.broadcast_shapes((sig.shape[0], 1), w.shape if w.ndim == 2 else (1,) + w.shape)
    total = np.zeros(shape)

    if noise.tempering.kind == 'none':
        scale_alpha = pure_stable_constant(noise) * sig_alpha
        for k in range(1, TAIL_SERIES_TERMS + 1):
            coefficient = _stable_series_coefficient(k, alpha)
            if abs(coefficient) < 1e-14:
                continue
            sums = _image_sums(k * alpha + 1.0, w, period)
            total += coefficient * (scale_alpha ** k)[:, None] * sums
        return total

    for k in range(1, EXPLICIT_IMAGES + 1):
        for sign in (1.0, -1.0):
            r = w + sign * k * period
            for q, weight in enumerate(weights):
                s_q = sig[:, q, None]
                total += weight * levy_density(noise, r / s_q) / s_q
    q_inf = noise.tempering.asymptotic_value
    if q_inf > 0.0:
        amplitude = noise.weight_plus * noise.c * q_inf * sig_alpha
        total += amplitude[:, None] * _image_sums(1.0 + alpha, w, period, first=EXPLICIT_IMAGES + 1)
    return total


# ---------------------------------------------------------------- 反演

def frozen_columns(model: SdeModel, t: float, T: float, points: Any, h: float, n_fft: int,
                   shifts: Optional[Sequence[float]] = None, correct_images: bool = True) -> np.ndarray:
    """
    冻结在 points[c] 的增量密度 f_c 在 w = d_c - B_c - v_k 上的值 (v_k 为 n_fft 点偏移格点,
    B_c 为冻结漂移位移).

    返回形状 (C, n_fft). 低于截断阈值的频率分量置零.
    """
    points = np.atleast_1d(np.asarray(points, dtype=float))
    p = frequency_grid(n_fft, h)
    sig, weights = sigma_nodes(model, t, T, points)
    char = np.exp(columns_exponent(model.noise, sig, weights, p))
    char[char < Config.FREQUENCY_CUTOFF] = 0.0
    d = np.zeros(points.size) if shifts is None else np.asarray(shifts, dtype=float)
    d = d - drift_shift(model, t, T, points)
    if np.any(d != 0.0):
        char = char * np.exp(-1j * d[:, None] * p[None, :])
    inverted = fourier_inverse(char, h)
    values = inverted.real
    residue = float(np.max(np.abs(inverted.imag)))
    if residue > 1e-9 * max(float(np.max(np.abs(values))), 1e-300):
        logger.debug(f"傅里叶反演虚部残差 {residue:.3g}")
    if correct_images:
        w = d[:, None] - offset_grid(n_fft, h)[None, :]
        values = values - periodic_image_correction(model.noise, sig, weights, w, n_fft * h)
    return values


def _tail_beyond(model: SdeModel, t: float, T: float, y: float, w_low: float, w_high: float) -> float:
    """一阶近似下 w 落在 [w_low, w_high] 之外的概率"""
    sig, weights = sigma_nodes(model, t, T, y)
    total = 0.0
    for q, weight in enumerate(weights):
        s_q = float(sig[0, q])
        if w_high > 0:
            total += weight * levy_measure(model.noise, w_high / s_q, math.inf)
        if w_low < 0:
            total += weight * levy_measure(model.noise, -math.inf, w_low / s_q)
    return total


def clip_and_check(values: np.ndarray, context: str) -> Tuple[np.ndarray, float]:
    """检查负值不低于裁剪下限后截断为非负, 返回 (截断后的值, 截断幅度)"""
    minimum = float(np.min(values))
    if minimum < Config.CLIP_FLOOR:
        raise ResolutionError(f"{context}: 出现显著负值 {minimum:.3g}, 需要更细的格点")
    return np.maximum(values, 0.0), max(0.0, -minimum)


def frozen_density_grid(request: FrozenDensityRequest) -> DensityGrid:
    """p̃(t, T, x, y) 在 x 格点上的值, 冻结在 y"""
    model = request.model
    n, h = request.points, request.spacing
    n_fft = n * request.padding
    d = request.y - request.center
    full = frozen_columns(model, request.t, request.T, [request.y], h, n_fft, shifts=[d])[0]
    start = (n_fft - n) // 2
    values, clipped = clip_and_check(full[start:start + n], "冻结密度")

    x = request.lattice
    mode = request.mode
    inside = float(integrate.trapezoid(values, dx=h))
    tail = _tail_beyond(model, request.t, request.T, request.y, mode - x[-1], mode - x[0])
    masses = {'mass_inside': inside, 'tail_estimate': tail, 'mass_with_tail': inside + tail}
    low, high = Config.MASS_BAND
    # 质量带只针对格点梯形质量, 尾部估计仅作记录
    if not low <= inside <= high:
        raise ResolutionError(f"冻结密度格点质量 {inside:.6f} 不在 [{low}, {high}] 内, "
                              f"需要更大的格点半宽 (尾部估计 {tail:.3g})", masses)
    logger.debug(f"冻结密度: y={request.y}, 格内质量 {inside:.6f}, 尾部估计 {tail:.3g}")
    return DensityGrid(t=request.t, T=request.T, x=x, y=request.y, values=values,
                       metadata={**masses, 'clip_magnitude': clipped, 'spacing': h, 'mode': mode})


# ---------------------------------------------------------------- 上界

def q_function(spec: TemperedStableSpec, rho: Any) -> np.ndarray:
    """Q(ρ) = min(1, ρ^{γ-1}) q̄(ρ)"""
    rho = np.abs(np.asarray(rho, dtype=float))
    return np.minimum(1.0, rho ** (spec.gamma - 1.0)) * spec.q_bar(rho)


def pbar(t: float, T: float, x: Any, y: Any, spec: TemperedStableSpec) -> Any:
    """p̄(t, T, x, y) = (T-t)^{-1/α} (1 + |y-x|/(T-t)^{1/α})^{-(γ+α)} Q(|y-x|)"""
    horizon = T - t
    if not horizon > 0:
        raise ConfigurationError(f"需要 T > t: t={t}, T={T}")
    alpha = spec.alpha
    scale = horizon ** (1.0 / alpha)
    rho = np.abs(np.asarray(y, dtype=float) - np.asarray(x, dtype=float))
    value = (1.0 + rho / scale) ** (-(spec.gamma + alpha)) * q_function(spec, rho) / scale
    return float(value) if np.ndim(value) == 0 else value


def fit_bound_constant(values: Any, envelope: Any, relative_floor: float = 0.0) -> float:
    """拟合 |values| ≤ C·envelope 的最小常数; 只使用 envelope 超过相对下限的点"""
    values = np.abs(np.asarray(values, dtype=float))
    envelope = np.asarray(envelope, dtype=float)
    mask = envelope > max(relative_floor * float(np.max(envelope)), 0.0)
    if not np.any(mask):
        raise ConfigurationError("上界拟合没有可用的点")
    return float(np.max(values[mask] / envelope[mask]))
