"""
Lévy-Itô 参考密度 - 冻结过程 = 截断小跳鞅 + 复合泊松大跳

截断半径 r₀ = (T-t)^{1/α}. 鞅部分由截断跳特征指数的傅里叶反演得到,
大跳部分在格点上写成 e^{-Λ} Σ_k μ^{*k}/k!, 两者再做格点卷积.
"""
import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import integrate, signal, stats

from config.config import Config
from src.density.frozen_density import (
    DensityGrid,
    FrozenDensityRequest,
    clip_and_check,
    frozen_exponent,
    sigma_nodes,
)
from src.exceptions import ConfigurationError, ResolutionError
from src.models.sde_model import SdeModel
from src.noise.levy_noise import levy_density, levy_measure
from src.utils.fourier import fourier_inverse, frequency_grid

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LevyItoSplit:
    """小跳/大跳分解: jump_mass 为 [t, T] 上累计的大跳强度 Λ"""

    t: float
    T: float
    y: float
    radius: float
    jump_mass: float
    k_max: int
    required_k: int


def poisson_truncation(mean: float, tol: float = Config.POISSON_TAIL_TOL) -> int:
    """使 P(N > k) < tol 的最小 k, N ~ Poisson(mean)"""
    if mean <= 0.0:
        return 0
    k = 0
    while stats.poisson.sf(k, mean) >= tol:
        k += 1
    return k


def _jump_mass(model: SdeModel, t: float, T: float, y: float, radius: float) -> float:
    sig, weights = sigma_nodes(model, t, T, y)
    total = 0.0
    for q, weight in enumerate(weights):
        s_q = float(sig[0, q])
        total += weight * (levy_measure(model.noise, radius / s_q, math.inf)
                           + levy_measure(model.noise, -math.inf, -radius / s_q))
    return total


def build_levy_ito_split(model: SdeModel, t: float, T: float, y: float,
                         tol: float = Config.POISSON_TAIL_TOL, radius: Optional[float] = None,
                         k_max: Optional[int] = None) -> LevyItoSplit:
    """构造分解; 默认 r₀ = (T-t)^{1/α}, k_max 取泊松尾概率低于 tol 的最小值"""
    if not T > t:
        raise ConfigurationError(f"需要 T > t: t={t}, T={T}")
    r0 = (T - t) ** (1.0 / model.alpha) if radius is None else float(radius)
    if not r0 > 0:
        raise ConfigurationError(f"截断半径必须为正: {r0}")
    mass = _jump_mass(model, t, T, y, r0)
    required = poisson_truncation(mass, tol)
    chosen = required if k_max is None else int(k_max)
    logger.debug(f"Lévy-Itô 分解: r0={r0:.4g}, Λ={mass:.4g}, k_max={chosen} (需要 {required})")
    return LevyItoSplit(t=t, T=T, y=y, radius=r0, jump_mass=mass, k_max=chosen, required_k=required)


def _small_jump_exponent(model: SdeModel, sig: np.ndarray, weights: np.ndarray, radius: float,
                         p: float) -> float:
    """Σ_q w_q ∫_{|z| ≤ r₀/σ_q} (cos(pσ_q z) - 1) ν(dz)"""
    noise = model.noise
    total = 0.0
    for q, weight in enumerate(weights):
        s_q = float(sig[0, q])
        bound = radius / s_q

        def integrand(z: float) -> float:
            return 2.0 * math.sin(0.5 * p * s_q * z) ** 2 * float(levy_density(noise, z))

        value, _ = integrate.quad(integrand, 0.0, bound, epsabs=0.0, epsrel=Config.QUAD_EPSREL,
                                  limit=Config.QUAD_LIMIT)
        # 两侧权重相等
        total -= 2.0 * weight * value
    return total


def _cell_masses(model: SdeModel, split: LevyItoSplit, h: float, half_cells: int) -> np.ndarray:
    """大跳测度在格点 ξ_i = i·h (|i| ≤ half_cells) 单元上的质量"""
    sig, weights = sigma_nodes(model, split.t, split.T, split.y)
    noise = model.noise
    r0 = split.radius
    xi = np.arange(-half_cells, half_cells + 1) * h
    lower = np.abs(xi) - 0.5 * h
    upper = np.abs(xi) + 0.5 * h
    masses = np.zeros_like(xi)

    outside = lower >= r0
    for q, weight in enumerate(weights):
        s_q = float(sig[0, q])

        def dens(z: np.ndarray) -> np.ndarray:
            return levy_density(noise, z / s_q) / s_q

        a, b = lower[outside], upper[outside]
        simpson = (b - a) / 6.0 * (dens(a) + 4.0 * dens(0.5 * (a + b)) + dens(b))
        masses[outside] += weight * simpson

        straddle = np.flatnonzero((lower < r0) & (upper > r0))
        for i in straddle:
            masses[i] += weight * levy_measure(noise, r0 / s_q, upper[i] / s_q)
    return masses


def compound_poisson_law(model: SdeModel, split: LevyItoSplit, h: float, half_cells: int) -> np.ndarray:
    """格点上的复合泊松分布 e^{-Λ}(δ₀ + Σ_{k≤k_max} μ^{*k}/k!)"""
    masses = _cell_masses(model, split, h, half_cells)
    term = np.zeros_like(masses)
    term[half_cells] = 1.0
    total = term.copy()
    for k in range(1, split.k_max + 1):
        term = signal.fftconvolve(term, masses, mode='same') / k
        total += term
    return math.exp(-split.jump_mass) * total


def levy_ito_reference_density(request: FrozenDensityRequest, split: LevyItoSplit,
                               strict: bool = True) -> DensityGrid:
    """冻结密度的独立参考值: 鞅部分密度与复合泊松分布的格点卷积"""
    if (split.t, split.T, split.y) != (request.t, request.T, request.y):
        raise ConfigurationError("Lévy-Itô 分解与密度请求的 (t, T, y) 不一致")
    if strict and split.k_max < split.required_k:
        raise ResolutionError(f"k_max={split.k_max} 不足, 泊松截断需要 {split.required_k}")
    model = request.model
    n, h = request.points, request.spacing
    n_fft = n * request.padding
    d = request.mode - request.center

    p = frequency_grid(n_fft, h)
    sig, weights = sigma_nodes(model, request.t, request.T, request.y)
    # Ψ_M ≤ Ψ + 2Λ, 由此确定需要求积的频率
    bound = np.real(frozen_exponent(model, request.t, request.T, request.y, p)) + 2.0 * split.jump_mass
    active = bound > math.log(Config.FREQUENCY_CUTOFF)
    abs_p = np.abs(p[active])
    unique_p, inverse = np.unique(abs_p, return_inverse=True)
    small = np.array([_small_jump_exponent(model, sig, weights, split.radius, float(v)) for v in unique_p])
    char = np.zeros(n_fft, dtype=complex)
    char[active] = np.exp(small[inverse]) * np.exp(-1j * d * p[active])
    martingale = fourier_inverse(char, h).real

    # 重排为 w = d + (j - n_fft/2 + 1)h 递增
    martingale = martingale[::-1]
    half_cells = n_fft // 2 - 1
    law = compound_poisson_law(model, split, h, half_cells)
    combined = signal.fftconvolve(martingale, law, mode='same')

    m = np.arange(n)
    index = n_fft // 2 - 1 - (m - n // 2)
    values, clipped = clip_and_check(combined[index], "Lévy-Itô 参考密度")
    logger.debug(f"Lévy-Itô 参考密度: Λ={split.jump_mass:.4g}, k_max={split.k_max}, "
                 f"格内质量 {float(integrate.trapezoid(values, dx=h)):.6f}")
    return DensityGrid(t=request.t, T=request.T, x=request.lattice, y=request.y, values=values,
                       metadata={'radius': split.radius, 'jump_mass': split.jump_mass,
                                 'k_max': split.k_max, 'clip_magnitude': clipped})


@dataclass
class CompoundPoissonComparison:
    tv_distance: float
    jump_mass_a: float
    jump_mass_b: float


def compound_poisson_difference(model_a: SdeModel, model_b: SdeModel, t: float, T: float, y: float,
                                h: float, half_cells: int,
                                tol: float = Config.POISSON_TAIL_TOL) -> CompoundPoissonComparison:
    """两模型在同一截断半径下大跳分布的全变差距离"""
    split_a = build_levy_ito_split(model_a, t, T, y, tol)
    split_b = build_levy_ito_split(model_b, t, T, y, tol, radius=split_a.radius)
    k = max(split_a.k_max, split_b.k_max)
    split_a = build_levy_ito_split(model_a, t, T, y, tol, radius=split_a.radius, k_max=k)
    split_b = build_levy_ito_split(model_b, t, T, y, tol, radius=split_a.radius, k_max=k)
    law_a = compound_poisson_law(model_a, split_a, h, half_cells)
    law_b = compound_poisson_law(model_b, split_b, h, half_cells)
    return CompoundPoissonComparison(tv_distance=float(np.sum(np.abs(law_a - law_b))),
                                     jump_mass_a=split_a.jump_mass, jump_mass_b=split_b.jump_mass)

