"""
异常定义 - 数值引擎的统一错误层次
"""
from typing import Any, Dict, Optional


class LevyParametrixError(Exception):
    """所有引擎错误的基类, exit_code 由命令行层使用"""

    exit_code = 1

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.details = details or {}


class ConfigurationError(LevyParametrixError):
    """配置或前置条件错误"""

    exit_code = 3


class AssumptionError(LevyParametrixError):
    """模型假设不成立 (椭圆性, 漂移为零等)"""

    exit_code = 2

    def __init__(self, message: str, witness: Optional[Dict[str, Any]] = None):
        super().__init__(message, witness)
        self.witness = witness or {}


class NumericalFailureError(LevyParametrixError):
    """积分结果非有限"""

    exit_code = 3

    def __init__(self, message: str, point: Any = None):
        super().__init__(message, {'point': point})
        self.point = point


class SingularityError(ConfigurationError):
    """在奇点处求值 (z = 0 或区间包含 0)"""


class ResolutionError(LevyParametrixError):
    """网格或频率分辨率不足"""

    exit_code = 3


class QuadratureError(LevyParametrixError):
    """时间网格加倍后结果不一致"""

    exit_code = 3


class SeriesDivergenceError(LevyParametrixError):
    """参数展开级数不收敛"""

    exit_code = 4


class InconsistencyError(LevyParametrixError):
    """Δ_n 为零但密度不一致"""

    exit_code = 5


class OracleMismatchError(LevyParametrixError):
    """蒙特卡洛对照超出置信带"""

    exit_code = 6


class SimulationError(LevyParametrixError):
    """模拟失败 (拒绝采样超预算, 非有限路径过多)"""

    exit_code = 3
