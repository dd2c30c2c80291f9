"""
参数展开核 H = (L_t - L̃_t^y) p̃

逐点版本在频率空间做分级 Gauss-Legendre 求积; 格点版本按冻结点逐列做 FFT,
σ 对符号的依赖用 Chebyshev 展开分离, 使每列只需一次反演.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from numpy.polynomial import chebyshev

from config.config import Config
from src.density.frozen_density import columns_exponent, drift_shift, frozen_columns, sigma_nodes
from src.exceptions import ConfigurationError, ResolutionError
from src.models.sde_model import SdeModel
from src.noise.levy_noise import levy_exponent
from src.parametrix.config import ParametrixConfig
from src.utils.fourier import fourier_inverse, frequency_grid
from src.utils.quadrature import frequency_rule

logger = logging.getLogger(__name__)

# 每个 16 点面板允许的最大振荡周期数
PERIODS_PER_PANEL = 2.0
PANEL_ORDER = 16
# 同时反演的列数上限
COLUMN_CHUNK = 32


def generator_symbol(model: SdeModel, t: float, z: Any, p: Any) -> Any:
    """生成元在 z 处的符号 l(t, z, p) = i b(t, z) p + φ_Z(σ(t, z) p)"""
    z_arr = np.asarray(z, dtype=float)
    p_arr = np.asarray(p, dtype=float)
    drift = model.b(t, z_arr)
    sig = model.s(t, z_arr)
    value = 1j * drift * p_arr + levy_exponent(model.noise, sig * p_arr)
    return complex(value) if np.ndim(value) == 0 else value


def frequency_cutoff(model: SdeModel, t: float, T: float, points: Any) -> float:
    """使所有冻结点上 exp(Ψ_y(p)) 低于截断阈值的频率 (2 的幂)"""
    points = np.atleast_1d(np.asarray(points, dtype=float))
    sig, weights = sigma_nodes(model, t, T, points)
    log_cut = math.log(Config.FREQUENCY_CUTOFF)
    p = 1.0
    for _ in range(64):
        psi = columns_exponent(model.noise, sig, weights, np.array([p]))
        if float(np.max(psi)) < log_cut:
            return p
        p *= 2.0
    raise ResolutionError(f"找不到频率截断: t={t}, T={T}")


def kernel_H(model: SdeModel, t: float, T: float, x: Any, y: Any,
             config: Optional[ParametrixConfig] = None) -> Any:
    """
    H(t, T, x, y) = π^{-1} ∫_0^∞ [Δφ(p) cos(pv) - Δb p sin(pv)] e^{Re Ψ_y(p)} dp,
    v = x - y + B_y (B_y 为冻结漂移位移), Δφ = φ(σ(t,x)p) - φ(σ(t,y)p), Δb = b(t,x) - b(t,y).

    x, y 可广播; 符号相同时返回精确的 0.
    """
    config = config or ParametrixConfig()
    if not T > t:
        raise ConfigurationError(f"需要 T > t: t={t}, T={T}")
    xb, yb = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    flat_x, flat_y = xb.ravel(), yb.ravel()
    unique_y, inverse = np.unique(flat_y, return_inverse=True)

    p_max = frequency_cutoff(model, t, T, unique_y)
    offsets = flat_x - flat_y + drift_shift(model, t, T, unique_y)[inverse]
    max_dist = float(np.max(np.abs(offsets))) if flat_x.size else 0.0
    # 分级面板中最宽一段约为 3 p_max / n
    required = math.ceil(3.0 * p_max * max_dist / (2.0 * math.pi * PERIODS_PER_PANEL))
    budget = config.freq_nodes // PANEL_ORDER
    if required > budget:
        raise ResolutionError(f"频率预算不足: 需要 {required} 个面板, 预算 {budget}",
                              {'p_max': p_max, 'max_distance': max_dist})
    n_panels = min(max(required, 16), budget)
    nodes, weights = frequency_rule(p_max, n_panels, PANEL_ORDER)

    sig_nodes, time_weights = sigma_nodes(model, t, T, unique_y)
    envelope = np.exp(columns_exponent(model.noise, sig_nodes, time_weights, nodes))[inverse]
    sig_x, sig_y = model.s(t, flat_x), model.s(t, flat_y)
    d_phi = (levy_exponent(model.noise, sig_x[:, None] * nodes[None, :])
             - levy_exponent(model.noise, sig_y[:, None] * nodes[None, :]))
    d_b = model.b(t, flat_x) - model.b(t, flat_y)
    phase = np.outer(offsets, nodes)
    integrand = (d_phi * np.cos(phase) - d_b[:, None] * nodes[None, :] * np.sin(phase)) * envelope
    values = integrand @ weights / math.pi
    if xb.ndim == 0:
        return float(values[0])
    return values.reshape(xb.shape)


@dataclass
class _SymbolExpansion:
    """某一时刻格点上的符号: 漂移值与 σ 方向的 Chebyshev 展开"""

    drift: np.ndarray
    drift_constant: bool
    basis: Optional[np.ndarray] = None
    coefficients: Optional[np.ndarray] = None

    @property
    def vanishes(self) -> bool:
        return self.drift_constant and self.basis is None


class LatticeOperators:
    """均匀格点上的冻结密度矩阵 P̃[x, z] = p̃(u, v, x, z) 与核矩阵 Ĥ[z, w] = H(u, v, z, w)"""

    def __init__(self, model: SdeModel, lattice: np.ndarray, config: ParametrixConfig,
                 workers: int = Config.MAX_WORKERS):
        self.model = model
        self.x = np.asarray(lattice, dtype=float)
        self.n = self.x.size
        self.h = float(self.x[1] - self.x[0])
        self.config = config
        self.workers = max(int(workers), 1)
        self.n_fft = 2 * self.n * config.fft_padding
        self.p = frequency_grid(self.n_fft, self.h)
        idx = np.arange(self.n)
        # gather[w, z] 为偏移 z - w 在 n_fft 偏移格点上的下标
        self.gather = idx[None, :] - idx[:, None] + self.n_fft // 2
        self._symbols: Dict[Optional[float], _SymbolExpansion] = {}
        self._column_phi: Optional[np.ndarray] = None
        self.logger = logging.getLogger(__name__)

    # ------------------------------------------------------------ 符号

    def symbol(self, u: float) -> _SymbolExpansion:
        key = None if self.model.time_homogeneous else float(u)
        if key in self._symbols:
            return self._symbols[key]
        model = self.model
        drift = np.asarray(model.b(u, self.x), dtype=float)
        expansion = _SymbolExpansion(drift=drift, drift_constant=bool(np.all(drift == drift[0])))
        sig = np.asarray(model.s(u, self.x), dtype=float)
        lo, hi = float(np.min(sig)), float(np.max(sig))
        if hi - lo > 1e-14 * max(1.0, hi):
            degree = self.config.chebyshev_degree
            nodes_hat = np.cos(math.pi * (np.arange(degree + 1) + 0.5) / (degree + 1))
            sig_nodes = 0.5 * (lo + hi) + 0.5 * (hi - lo) * nodes_hat
            samples = levy_exponent(model.noise, sig_nodes[:, None] * self.p[None, :])
            expansion.coefficients = chebyshev.chebfit(nodes_hat, samples, degree)
            expansion.basis = chebyshev.chebvander((2.0 * sig - lo - hi) / (hi - lo), degree)
        if self.model.time_homogeneous:
            self._symbols[key] = expansion
        return expansion

    def kernel_vanishes(self, u: float) -> bool:
        return self.symbol(u).vanishes

    # ------------------------------------------------------------ 列指数

    def _column_exponent(self, u: float, v: float, columns: np.ndarray) -> np.ndarray:
        if self.model.sigma.time_homogeneous:
            if self._column_phi is None:
                sig = self.model.s(0.0, self.x)
                self._column_phi = levy_exponent(self.model.noise, sig[:, None] * self.p[None, :])
            return (v - u) * self._column_phi[columns]
        sig, weights = sigma_nodes(self.model, u, v, self.x[columns])
        return columns_exponent(self.model.noise, sig, weights, self.p)

    def _column_shift(self, u: float, v: float, columns: np.ndarray) -> Optional[np.ndarray]:
        """冻结在各列的漂移位移 B_w; 漂移为零时为 None"""
        if self.model.drift.is_zero():
            return None
        return drift_shift(self.model, u, v, self.x[columns])

    # ------------------------------------------------------------ 矩阵

    def kernel_matrix(self, u: float, v: float, columns: Optional[Sequence[int]] = None) -> np.ndarray:
        """Ĥ[z, w], w 取 columns (默认全部)"""
        cols = np.arange(self.n) if columns is None else np.asarray(columns, dtype=int)
        sym = self.symbol(u)
        if sym.vanishes:
            return np.zeros((self.n, cols.size))
        multipliers: List[np.ndarray] = []
        if not sym.drift_constant:
            multipliers.append(1j * self.p)
        if sym.coefficients is not None:
            multipliers.extend(sym.coefficients)
        stack = np.asarray(multipliers)

        chunks = [cols[i:i + COLUMN_CHUNK] for i in range(0, cols.size, COLUMN_CHUNK)]

        def build(chunk: np.ndarray) -> np.ndarray:
            envelope = np.exp(self._column_exponent(u, v, chunk))
            envelope[envelope < Config.FREQUENCY_CUTOFF] = 0.0
            shift = self._column_shift(u, v, chunk)
            if shift is not None:
                envelope = envelope * np.exp(1j * shift[:, None] * self.p[None, :])
            values = fourier_inverse(envelope[:, None, :] * stack[None, :, :], self.h).real
            picked = np.take_along_axis(values, self.gather[chunk][:, None, :], axis=2)
            block = np.zeros((chunk.size, self.n))
            offset = 0
            if not sym.drift_constant:
                block += (sym.drift[None, :] - sym.drift[chunk][:, None]) * picked[:, 0, :]
                offset = 1
            if sym.basis is not None:
                parts = picked[:, offset:, :]
                block += np.einsum('zk,ckz->cz', sym.basis, parts)
                block -= np.einsum('ck,ckz->cz', sym.basis[chunk], parts)
            return block

        if len(chunks) > 1 and self.workers > 1:
            with ThreadPoolExecutor(max_workers=self.workers) as executor:
                blocks = list(executor.map(build, chunks))
        else:
            blocks = [build(chunk) for chunk in chunks]
        return np.concatenate(blocks, axis=0).T

    def frozen_matrix(self, u: float, v: float, rows: Optional[Sequence[int]] = None,
                      columns: Optional[Sequence[int]] = None) -> np.ndarray:
        """P̃[x, z] = p̃(u, v, x, z), 冻结在 z; 可只取部分行或列"""
        cols = np.arange(self.n) if columns is None else np.asarray(columns, dtype=int)
        values = frozen_columns(self.model, u, v, self.x[cols], self.h, self.n_fft)
        # 列 z 在偏移 x - z 处取值
        picked = np.take_along_axis(values, self.gather[cols], axis=1).T
        if rows is not None:
            picked = picked[np.asarray(rows, dtype=int)]
        return picked
