"""
上界函数 - H̄, ρ, ρ_m
"""
import math
from typing import Any

import numpy as np

from src.density.frozen_density import pbar
from src.exceptions import ConfigurationError
from src.models.sde_model import SdeModel
from src.parametrix.config import ParametrixConfig


def _holder_weight(model: SdeModel, x: Any, y: Any, delta: float) -> np.ndarray:
    """δ ∧ |y - x|^{η(α∧1)}"""
    rho = np.abs(np.asarray(y, dtype=float) - np.asarray(x, dtype=float))
    return np.minimum(delta, rho ** model.holder_exponent())


def rho(model: SdeModel, t: float, T: float, x: Any, y: Any, config: ParametrixConfig) -> Any:
    """ρ(t, T, x, y) = (δ ∧ |y-x|^{η(α∧1)}) p̄"""
    value = _holder_weight(model, x, y, config.delta_cap) * pbar(t, T, x, y, model.noise)
    return float(value) if np.ndim(value) == 0 else value


def hbar(model: SdeModel, t: float, T: float, x: Any, y: Any, config: ParametrixConfig) -> Any:
    """H̄ = ρ / (T - t)"""
    value = np.asarray(rho(model, t, T, x, y, config)) / (T - t)
    return float(value) if np.ndim(value) == 0 else value


def rho_m(model: SdeModel, t: float, T: float, x: Any, y: Any, m: int,
          config: ParametrixConfig) -> Any:
    """
    第 m 项的上界:
      m = 2k:   U^{kω}/(k! ω^{2k}) (U^{kω} p̄ + p̄ + ρ)
      m = 2k+1: U^{kω}/((k+1)! ω^{2k+1}) (U^{(k+1)ω} p̄ + U^ω (p̄ + ρ) + ρ)
    """
    if m < 0:
        raise ConfigurationError(f"m 必须非负: {m}")
    omega = config.resolve_omega(model.alpha, model.eta)
    horizon = T - t
    p_bar = np.asarray(pbar(t, T, x, y, model.noise))
    r = np.asarray(rho(model, t, T, x, y, config))
    k, odd = divmod(m, 2)
    grow = horizon ** (k * omega)
    if odd:
        value = grow / (math.factorial(k + 1) * omega ** (2 * k + 1)) * (
            horizon ** ((k + 1) * omega) * p_bar + horizon ** omega * (p_bar + r) + r)
    else:
        value = grow / (math.factorial(k) * omega ** (2 * k)) * (grow * p_bar + p_bar + r)
    return float(value) if np.ndim(value) == 0 else value
