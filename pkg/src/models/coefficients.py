"""
系数场 - 漂移 b(t, x) 与扩散 σ(t, x) 的向量化描述
"""
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any, Callable, Dict

import numpy as np

from src.exceptions import ConfigurationError


def _broadcast_shape(t: Any, x: Any) -> tuple:
    return np.broadcast(np.asarray(t, dtype=float), np.asarray(x, dtype=float)).shape


class CoefficientField(ABC):
    """系数场基类: 对 (t, x) 广播求值"""

    kind = 'abstract'

    @property
    def time_homogeneous(self) -> bool:
        return True

    @abstractmethod
    def __call__(self, t: Any, x: Any) -> np.ndarray:
        pass

    @abstractmethod
    def to_dict(self) -> Dict[str, Any]:
        pass

    def is_zero(self) -> bool:
        return False


@dataclass(frozen=True)
class ConstantField(CoefficientField):
    value: float
    kind = 'constant'

    def __call__(self, t: Any, x: Any) -> np.ndarray:
        return np.full(_broadcast_shape(t, x), float(self.value))

    def to_dict(self) -> Dict[str, Any]:
        return {'kind': self.kind, 'value': self.value}

    def is_zero(self) -> bool:
        return self.value == 0.0


@dataclass(frozen=True)
class AffineClampedField(CoefficientField):
    """clip(intercept + slope·x, lower, upper)"""

    intercept: float
    slope: float
    lower: float
    upper: float
    kind = 'affine_clamped'

    def __call__(self, t: Any, x: Any) -> np.ndarray:
        x = np.broadcast_to(np.asarray(x, dtype=float), _broadcast_shape(t, x))
        return np.clip(self.intercept + self.slope * x, self.lower, self.upper)

    def to_dict(self) -> Dict[str, Any]:
        return {'kind': self.kind, 'intercept': self.intercept, 'slope': self.slope,
                'lower': self.lower, 'upper': self.upper}


@dataclass(frozen=True)
class SinusoidalField(CoefficientField):
    """a + b·sin(c·x + d)"""

    a: float
    b: float
    c: float = 1.0
    d: float = 0.0
    kind = 'sinusoidal'

    def __call__(self, t: Any, x: Any) -> np.ndarray:
        x = np.broadcast_to(np.asarray(x, dtype=float), _broadcast_shape(t, x))
        return self.a + self.b * np.sin(self.c * x + self.d)

    def to_dict(self) -> Dict[str, Any]:
        return {'kind': self.kind, 'a': self.a, 'b': self.b, 'c': self.c, 'd': self.d}

    def is_zero(self) -> bool:
        return self.a == 0.0 and self.b == 0.0


@dataclass(frozen=True)
class TimeLinearField(CoefficientField):
    """a + b·t, 与空间无关"""

    a: float
    b: float
    kind = 'time_linear'

    @property
    def time_homogeneous(self) -> bool:
        return self.b == 0.0

    def __call__(self, t: Any, x: Any) -> np.ndarray:
        t = np.broadcast_to(np.asarray(t, dtype=float), _broadcast_shape(t, x))
        return self.a + self.b * t

    def to_dict(self) -> Dict[str, Any]:
        return {'kind': self.kind, 'a': self.a, 'b': self.b}

    def is_zero(self) -> bool:
        return self.a == 0.0 and self.b == 0.0


@dataclass(frozen=True)
class ScaledField(CoefficientField):
    """base·(1 + modulation), 用于扩散系数的扰动族"""

    base: CoefficientField
    modulation: CoefficientField
    kind = 'scaled'

    @property
    def time_homogeneous(self) -> bool:
        return self.base.time_homogeneous and self.modulation.time_homogeneous

    def __call__(self, t: Any, x: Any) -> np.ndarray:
        return self.base(t, x) * (1.0 + self.modulation(t, x))

    def to_dict(self) -> Dict[str, Any]:
        return {'kind': self.kind, 'base': self.base.to_dict(),
                'modulation': self.modulation.to_dict()}


@dataclass(frozen=True)
class ShiftedField(CoefficientField):
    """base + shift, 用于漂移的扰动族"""

    base: CoefficientField
    shift: CoefficientField
    kind = 'shifted'

    @property
    def time_homogeneous(self) -> bool:
        return self.base.time_homogeneous and self.shift.time_homogeneous

    def __call__(self, t: Any, x: Any) -> np.ndarray:
        return self.base(t, x) + self.shift(t, x)

    def to_dict(self) -> Dict[str, Any]:
        return {'kind': self.kind, 'base': self.base.to_dict(), 'shift': self.shift.to_dict()}

    def is_zero(self) -> bool:
        return self.base.is_zero() and self.shift.is_zero()


@dataclass(frozen=True)
class LatticeAliasedField(CoefficientField):
    """a·sin²(π(x - origin)/spacing), 在验证格点上为零"""

    amplitude: float
    origin: float
    spacing: float
    kind = 'lattice_aliased'

    def __call__(self, t: Any, x: Any) -> np.ndarray:
        x = np.broadcast_to(np.asarray(x, dtype=float), _broadcast_shape(t, x))
        frac = (x - self.origin) / self.spacing
        frac = frac - np.round(frac)
        return self.amplitude * np.sin(math.pi * frac) ** 2

    def to_dict(self) -> Dict[str, Any]:
        return {'kind': self.kind, 'amplitude': self.amplitude, 'origin': self.origin,
                'spacing': self.spacing}


@dataclass(frozen=True, eq=False)
class CallableField(CoefficientField):
    """任意向量化函数 func(t, x)"""

    func: Callable[[Any, Any], Any]
    homogeneous: bool = True
    name: str = 'callable'
    kind = 'callable'

    @property
    def time_homogeneous(self) -> bool:
        return self.homogeneous

    def __call__(self, t: Any, x: Any) -> np.ndarray:
        values = np.asarray(self.func(t, x), dtype=float)
        return np.broadcast_to(values, _broadcast_shape(t, x)).copy()

    def to_dict(self) -> Dict[str, Any]:
        return {'kind': self.kind, 'name': self.name}


_SIMPLE_FIELDS = {
    'constant': ConstantField,
    'affine_clamped': AffineClampedField,
    'sinusoidal': SinusoidalField,
    'time_linear': TimeLinearField,
    'lattice_aliased': LatticeAliasedField,
}


def field_from_dict(data: Any) -> CoefficientField:
    """从配置构造系数场; 数字视为常数场"""
    if isinstance(data, (int, float)):
        return ConstantField(float(data))
    if not isinstance(data, dict) or 'kind' not in data:
        raise ConfigurationError(f"系数场配置无法解析: {data!r}")
    kind = data['kind']
    params = {k: v for k, v in data.items() if k != 'kind'}
    try:
        if kind == 'scaled':
            return ScaledField(field_from_dict(params['base']), field_from_dict(params['modulation']))
        if kind == 'shifted':
            return ShiftedField(field_from_dict(params['base']), field_from_dict(params['shift']))
        if kind in _SIMPLE_FIELDS:
            return _SIMPLE_FIELDS[kind](**{k: float(v) for k, v in params.items()})
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigurationError(f"系数场 {kind} 参数错误: {e}") from e
    raise ConfigurationError(f"未知的系数场类型: {kind}")
