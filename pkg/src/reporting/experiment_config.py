"""
实验配置 - JSON 文件, 默认值合并, 环境变量覆盖与配置哈希
"""
import copy
import hashlib
import json
import logging
import os
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional

from config.config import Config
from src import __version__
from src.exceptions import ConfigurationError
from src.models.sde_model import (
    PERTURBATION_KINDS,
    DeltaTestFamily,
    SdeModel,
    ValidationLattice,
    default_delta_family,
    model_from_dict,
)
from src.parametrix.config import ParametrixConfig
from src.simulation.euler import SimulationPlan
from src.utils.fourier import is_power_of_two, offset_grid

logger = logging.getLogger(__name__)

DEFAULTS: Dict[str, Any] = {
    'name': 'experiment',
    'noise': {
        'alpha': 1.5,
        'tempering': {'kind': 'none'},
        'weights': [1.0, 1.0],
        'scale_c': None,
        'gamma': 1.0,
    },
    'coefficients': {
        'drift': 0.0,
        'sigma': 1.0,
        'eta': 1.0,
        'kappa': 4.0,
        'perturbation': None,
    },
    'horizon': {
        't': 0.0,
        'T': 1.0,
        'y': 0.0,
        'x0': 0.0,
        'lattice': {'center': 0.0, 'half_width': 16.0, 'points': 128},
    },
    'parametrix': {},
    'mc': {
        'n_steps': 200,
        'n_paths': 100000,
        'seed': 0,
        'batch_size': 10000,
        'epsilon': None,
        'bandwidth_rule': 'iqr',
        'bandwidth': None,
        'window': 8.0,
        'write_samples': False,
    },
    'bounds': {
        'frozen_horizons': [0.25, 1.0, 4.0],
        'kernel_horizons': [0.25, 0.5, 1.0],
        'max_order': 4,
        'factor': 2.0,
    },
    'validate': {
        'h2_constant': 0.01,
    },
    'output_dir': None,
}

# 不参与哈希的字段: 只影响产物位置
UNHASHED_KEYS = ('output_dir',)


def deep_merge(base: Mapping[str, Any], override: Mapping[str, Any]) -> Dict[str, Any]:
    """递归合并, override 中的字典逐层覆盖, 其它值整体替换"""
    merged = copy.deepcopy(dict(base))
    for key, value in override.items():
        if isinstance(value, Mapping) and isinstance(merged.get(key), Mapping):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def _parse_value(raw: str) -> Any:
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def env_overrides(environ: Optional[Mapping[str, str]] = None,
                  prefix: str = Config.ENV_PREFIX) -> Dict[str, Any]:
    """LEVYPX__SECTION__KEY=value 形式的覆盖, 值尽量按 JSON 解析"""
    environ = os.environ if environ is None else environ
    marker = f"{prefix}__"
    result: Dict[str, Any] = {}
    for name in sorted(environ):
        if not name.startswith(marker):
            continue
        path = [part.lower() for part in name[len(marker):].split('__') if part]
        if not path:
            continue
        node = result
        for part in path[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigurationError(f"环境变量覆盖路径冲突: {name}")
        node[path[-1]] = _parse_value(environ[name])
        logger.debug(f"环境变量覆盖: {'.'.join(path)}")
    return result


def canonical_json(data: Any) -> str:
    return json.dumps(data, sort_keys=True, separators=(',', ':'), ensure_ascii=True)


def config_hash(data: Mapping[str, Any]) -> str:
    """规范 JSON 的 sha256; 与键顺序无关"""
    hashed = {k: v for k, v in data.items() if k not in UNHASHED_KEYS}
    return hashlib.sha256(canonical_json(hashed).encode('utf-8')).hexdigest()


def _require(section: Mapping[str, Any], keys: List[str], name: str) -> None:
    missing = [key for key in keys if key not in section or section[key] is None]
    if missing:
        raise ConfigurationError(f"配置段 {name} 缺少字段: {missing}")


def validate_schema(data: Mapping[str, Any]) -> None:
    """检查配置段完整性, n 列表严格递增, 格点点数为 2 的幂"""
    for section in ('noise', 'coefficients', 'horizon', 'parametrix', 'mc'):
        if not isinstance(data.get(section), Mapping):
            raise ConfigurationError(f"缺少配置段: {section}")
    _require(data['noise'], ['alpha'], 'noise')
    _require(data['coefficients'], ['sigma'], 'coefficients')
    horizon = data['horizon']
    _require(horizon, ['t', 'T', 'y', 'x0', 'lattice'], 'horizon')
    lattice = horizon['lattice']
    _require(lattice, ['center', 'half_width', 'points'], 'horizon.lattice')
    if not is_power_of_two(int(lattice['points'])):
        raise ConfigurationError(f"horizon.lattice.points 必须为 2 的幂: {lattice['points']}")
    if not float(horizon['T']) > float(horizon['t']):
        raise ConfigurationError(f"需要 T > t: {horizon['t']}, {horizon['T']}")

    perturbation = data['coefficients'].get('perturbation')
    if perturbation is not None:
        _require(perturbation, ['kind', 'amplitude', 'n_values'], 'coefficients.perturbation')
        if perturbation['kind'] not in PERTURBATION_KINDS:
            raise ConfigurationError(f"未知的扰动类型: {perturbation['kind']}")
        n_values = [int(n) for n in perturbation['n_values']]
        if not n_values or any(b <= a for a, b in zip(n_values, n_values[1:])):
            raise ConfigurationError(f"n_values 必须非空且严格递增: {n_values}")


@dataclass
class ExperimentConfig:
    """完全合并后的实验配置"""

    data: Dict[str, Any]
    source: Optional[str] = None
    overrides: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        validate_schema(self.data)

    @property
    def name(self) -> str:
        return str(self.data.get('name', 'experiment'))

    @property
    def hash(self) -> str:
        return config_hash(self.data)

    @property
    def horizon(self) -> Dict[str, Any]:
        return self.data['horizon']

    @property
    def t(self) -> float:
        return float(self.horizon['t'])

    @property
    def T(self) -> float:
        return float(self.horizon['T'])

    @property
    def output_dir(self) -> str:
        out = self.data.get('output_dir')
        return out if out else os.path.join(Config.OUTPUT_DIR, self.name)

    @property
    def perturbation(self) -> Optional[Dict[str, Any]]:
        return self.data['coefficients'].get('perturbation')

    def build_model(self) -> SdeModel:
        return model_from_dict(self.data['noise'], self.data['coefficients'], name=self.name)

    def parametrix_config(self) -> ParametrixConfig:
        """parametrix 段; 格点点数与半宽缺省时取 horizon.lattice"""
        lattice = self.horizon['lattice']
        section = {'lattice_points': int(lattice['points']),
                   'lattice_half_width': float(lattice['half_width'])}
        section.update(self.data['parametrix'])
        return ParametrixConfig.from_dict(section)

    def lattice(self) -> Any:
        """输出格点: center + (m - points/2)·h"""
        lattice = self.horizon['lattice']
        points = int(lattice['points'])
        h = 2.0 * float(lattice['half_width']) / points
        return float(lattice['center']) + offset_grid(points, h)

    def validation_lattice(self) -> ValidationLattice:
        lattice = self.horizon['lattice']
        return ValidationLattice.regular(self.t, self.T, float(lattice['center']),
                                         float(lattice['half_width']))

    def delta_family(self) -> DeltaTestFamily:
        return default_delta_family(self.validation_lattice())

    def simulation_plan(self, model: Optional[SdeModel] = None) -> SimulationPlan:
        mc = self.data['mc']
        try:
            return SimulationPlan(
                model=model or self.build_model(),
                t0=self.t,
                T=self.T,
                x0=float(self.horizon['x0']),
                n_steps=int(mc['n_steps']),
                n_paths=int(mc['n_paths']),
                seed=int(mc['seed']),
                batch_size=int(mc.get('batch_size', 10000)),
                epsilon=None if mc.get('epsilon') is None else float(mc['epsilon']),
            )
        except KeyError as e:
            raise ConfigurationError(f"mc 配置缺少字段: {e}") from e

    def header(self) -> Dict[str, Any]:
        """CSV 注释头"""
        return {'experiment': self.name, 'config_hash': self.hash}


def load_experiment(path: Optional[str] = None, seed: Optional[int] = None,
                    output_dir: Optional[str] = None,
                    environ: Optional[Mapping[str, str]] = None) -> ExperimentConfig:
    """文件 → 默认值合并 → 环境变量覆盖 → 命令行参数"""
    path = path or Config.DEFAULT_EXPERIMENT
    try:
        with open(path, 'r', encoding='utf-8') as f:
            raw = json.load(f)
    except FileNotFoundError as e:
        raise ConfigurationError(f"找不到配置文件: {path}") from e
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"配置文件不是合法 JSON: {path}: {e}") from e
    if not isinstance(raw, dict):
        raise ConfigurationError(f"配置文件顶层必须是对象: {path}")

    data = deep_merge(DEFAULTS, raw)
    overrides = env_overrides(environ)
    data = deep_merge(data, overrides)
    if seed is not None:
        data['mc']['seed'] = int(seed)
    if output_dir is not None:
        data['output_dir'] = output_dir
    experiment = ExperimentConfig(data=data, source=path, overrides=overrides)
    logger.info(f"已加载实验配置 {experiment.name} ({path}), 哈希 {experiment.hash[:12]}, "
                f"版本 {__version__}")
    return experiment
