"""
实验管理器 - 编排 validate / density / stability / oracle / bounds 并写出产物
"""
import logging
import os
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional

import numpy as np
import pandas as pd

from config.config import Config
from src import __version__
from src.density.frozen_density import DensityGrid
from src.exceptions import AssumptionError, ConfigurationError, LevyParametrixError, OracleMismatchError
from src.models.sde_model import (
    PerturbationSequence,
    SdeModel,
    build_perturbation_sequence,
    validate_assumptions,
)
from src.noise.levy_noise import check_doubling, verify_h2
from src.parametrix.series import ParametrixSeries
from src.parametrix.stability import stability_ratio
from src.reporting.bounds_suite import BoundsSuite
from src.reporting.experiment_config import ExperimentConfig
from src.simulation.euler import euler_simulate
from src.simulation.kde import compare_densities, kde
from src.utils.export_utils import ExportUtils, read_csv

FORWARD_DENSITY_CSV = 'density_forward.csv'
MANIFEST_NAME = 'manifest.json'
COMMANDS = ('validate', 'density', 'stability', 'oracle', 'bounds')


@dataclass
class RunManifest:
    """一次运行的清单: 配置哈希, 产物列表, 检查结果与拟合常数"""

    command: str
    config_hash: str
    experiment: str
    version: str = __version__
    artifacts: List[str] = field(default_factory=list)
    checks: Dict[str, bool] = field(default_factory=dict)
    constants: Dict[str, Any] = field(default_factory=dict)
    status: str = 'ok'
    exit_code: int = 0
    error: Optional[Dict[str, Any]] = None

    def add(self, filepath: str) -> None:
        name = os.path.basename(filepath)
        if name not in self.artifacts:
            self.artifacts.append(name)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'command': self.command,
            'config_hash': self.config_hash,
            'experiment': self.experiment,
            'version': self.version,
            'artifacts': sorted(self.artifacts),
            'checks': self.checks,
            'constants': self.constants,
            'status': self.status,
            'exit_code': self.exit_code,
            'error': self.error,
        }


class ExperimentManager:
    """按子命令运行实验; 每次运行写出 manifest.json"""

    def __init__(self, experiment: ExperimentConfig, workers: int = Config.MAX_WORKERS,
                 progress: bool = True):
        self.experiment = experiment
        self.workers = workers
        self.progress = progress
        self.logger = logging.getLogger(__name__)
        self.exporter = ExportUtils(experiment.output_dir)
        self.header = experiment.header()

    def _manifest(self, command: str) -> RunManifest:
        return RunManifest(command=command, config_hash=self.experiment.hash,
                           experiment=self.experiment.name)

    def execute(self, command: str) -> RunManifest:
        """运行子命令; 失败时写出带错误信息的清单后重新抛出"""
        runners: Dict[str, Callable[[RunManifest], None]] = {
            'validate': self.run_validate,
            'density': self.run_density,
            'stability': self.run_stability,
            'oracle': self.run_oracle,
            'bounds': self.run_bounds,
        }
        if command not in runners:
            raise ConfigurationError(f"未知的子命令: {command}")
        manifest = self._manifest(command)
        self.logger.info(f"开始运行 {command}: 实验 {self.experiment.name}, 输出 {self.experiment.output_dir}")
        try:
            runners[command](manifest)
        except LevyParametrixError as e:
            manifest.status = 'failed'
            manifest.exit_code = e.exit_code
            manifest.error = {'type': type(e).__name__, 'message': str(e),
                              'details': _jsonable(e.details)}
            self.exporter.export_json(manifest.to_dict(), MANIFEST_NAME)
            self.logger.error(f"{command} 失败 (退出码 {e.exit_code}): {e}")
            raise
        self.exporter.export_json(manifest.to_dict(), MANIFEST_NAME)
        self.logger.info(f"{command} 完成, 产物 {len(manifest.artifacts)} 个")
        return manifest

    # ------------------------------------------------------------ validate

    def run_validate(self, manifest: RunManifest) -> None:
        """假设检查: 椭圆性, 漂移规则, 频率下界 φ(p) ≤ -K|p|^α, q̄ 倍增; 扰动族时估计 Δ_n"""
        model = self.experiment.build_model()
        config = self.experiment.parametrix_config()
        lattice = self.experiment.validation_lattice()
        family = self.experiment.delta_family()
        report = validate_assumptions(model, lattice, config.delta_cap, family)
        manifest.checks['ellipticity'] = True
        manifest.checks['drift_rule'] = True

        k_requested = float(self.experiment.data['validate']['h2_constant'])
        h2 = verify_h2(model.noise, k_requested, np.logspace(np.log10(1.01), 3.0, 61))
        manifest.checks['h2'] = h2.all_passed
        if not h2.all_passed:
            index = int(np.argmin(h2.passed))
            raise AssumptionError(f"φ(p) ≤ -K|p|^α 不成立, 最大可取 K = {h2.largest_k:.4g}",
                                  {'rule': 'h2', 'p': float(h2.p_grid[index]),
                                   'largest_k': h2.largest_k, 'k_requested': k_requested})
        doubling = check_doubling(model.noise)
        manifest.checks['q_bar_monotone'] = doubling.monotone

        result: Dict[str, Any] = {
            'model': model.to_dict(),
            'assumptions': report.to_dict(),
            'h2_largest_k': h2.largest_k,
            'doubling_constant': doubling.constant,
        }
        sequence = self._perturbation_sequence(model, with_delta=True)
        if sequence is not None:
            for perturbed in sequence.perturbed:
                validate_assumptions(perturbed, lattice, config.delta_cap)
            result['delta_n'] = [
                {'n': n, 'value': d.value, 'measure_term': d.measure_term,
                 'holder_term': d.holder_term, 'drift_term': d.drift_term}
                for n, d in zip(sequence.n_values, sequence.measured_delta)
            ]
        manifest.constants['levy_holder_constant'] = report.levy_holder_constant
        manifest.constants['h2_largest_k'] = h2.largest_k
        manifest.add(self.exporter.export_json(result, 'validation.json'))

    # ------------------------------------------------------------ density

    def run_density(self, manifest: RunManifest) -> None:
        """后向 (x 格点) 与前向 (y 格点) 参数展开密度及逐项诊断"""
        model = self.experiment.build_model()
        config = self.experiment.parametrix_config()
        horizon = self.experiment.horizon
        t, T = self.experiment.t, self.experiment.T
        lattice = self.experiment.lattice()
        series = ParametrixSeries(model, config, self.workers)

        backward = series.backward(t, T, float(horizon['y']), lattice)
        manifest.add(self.exporter.export_density_csv(
            backward.density, 'density_backward.csv', self._series_header(backward)))
        manifest.add(self.exporter.export_frame_csv(backward.terms_frame(), 'terms_backward.csv', self.header))

        forward = series.forward(t, T, float(horizon['x0']), lattice)
        manifest.add(self.exporter.export_density_csv(
            forward.density, FORWARD_DENSITY_CSV, self._series_header(forward)))
        manifest.add(self.exporter.export_frame_csv(forward.terms_frame(), 'terms_forward.csv', self.header))

        manifest.checks['backward_converged'] = backward.converged
        manifest.checks['forward_converged'] = forward.converged
        manifest.checks['forward_mass'] = bool(0.98 <= forward.mass <= 1.02)
        for result in (backward, forward):
            if result.metadata['quadrature_converged'] is not None:
                manifest.checks[f'{result.direction}_quadrature'] = result.metadata['quadrature_converged']
                manifest.constants[f'doubling_error_{result.direction}'] = result.metadata['doubling_error']
        manifest.constants.update({
            'order_backward': backward.order,
            'order_forward': forward.order,
            'mass_forward': forward.mass,
            'clip_backward': backward.clip_magnitude,
            'clip_forward': forward.clip_magnitude,
        })

    def _series_header(self, result: Any) -> Dict[str, Any]:
        header = dict(self.header)
        header.update({'direction': result.direction, 'order': result.order})
        return header

    # ------------------------------------------------------------ stability

    def _perturbation_sequence(self, model: SdeModel, with_delta: bool) -> Optional[PerturbationSequence]:
        section = self.experiment.perturbation
        if section is None:
            return None
        family = self.experiment.delta_family() if with_delta else None
        config = self.experiment.parametrix_config()
        return build_perturbation_sequence(model, section['kind'], float(section['amplitude']),
                                           section['n_values'], family, config.delta_cap)

    def run_stability(self, manifest: RunManifest) -> None:
        """R_n 表 (冻结/核/密度三层) 与一致有界判据"""
        model = self.experiment.build_model()
        sequence = self._perturbation_sequence(model, with_delta=True)
        if sequence is None:
            raise ConfigurationError("stability 需要 coefficients.perturbation 配置段")
        config = self.experiment.parametrix_config()
        report = stability_ratio(sequence, self.experiment.t, self.experiment.T,
                                 float(self.experiment.horizon['y']), self.experiment.lattice(),
                                 config, self.workers)
        manifest.add(self.exporter.export_frame_csv(report.to_frame(), 'stability.csv', self.header))

        term_rows = [{'n': row.n, 'm': m, 'ratio': ratio}
                     for row in report.rows for m, ratio in enumerate(row.term_ratios)]
        term_frame = pd.DataFrame(term_rows, columns=['n', 'm', 'ratio'])
        manifest.add(self.exporter.export_frame_csv(term_frame, 'stability_terms.csv', self.header))

        exact = all(row.status == 'exact-match' for row in report.rows)
        for level in ('r_frozen', 'r_kernel', 'r_density'):
            manifest.checks[f'bounded_{level}'] = report.verdict(level)
        manifest.checks['monotone_sup_diff'] = report.monotone_decrease
        manifest.constants['verdict'] = 'exact-match' if exact else (
            'pass' if report.verdict('r_density') else 'fail')
        manifest.constants['R_n'] = {str(row.n): row.r_density for row in report.rows}
        if manifest.constants['verdict'] == 'fail':
            self.logger.warning("R_n 不满足 max ≤ 2·median")

    # ------------------------------------------------------------ oracle

    def _load_reference(self) -> DensityGrid:
        path = os.path.join(self.experiment.output_dir, FORWARD_DENSITY_CSV)
        if not os.path.exists(path):
            raise ConfigurationError(f"oracle 需要先运行 density 生成 {path}")
        frame, header = read_csv(path)
        if header.get('config_hash') != self.experiment.hash:
            self.logger.warning("参考密度的配置哈希与当前配置不同")
        horizon = self.experiment.horizon
        x0, t, T = float(horizon['x0']), self.experiment.t, self.experiment.T
        if not (np.allclose(frame['x'], x0) and np.allclose(frame['t'], t) and np.allclose(frame['T'], T)):
            raise ConfigurationError("参考密度的 (t, T, x0) 与当前配置不一致")
        return DensityGrid(t=t, T=T, x=x0, y=frame['y'].to_numpy(), values=frame['value'].to_numpy())

    def run_oracle(self, manifest: RunManifest) -> None:
        """Euler + KDE 对照此前写出的前向参数展开密度"""
        reference = self._load_reference()
        model = self.experiment.build_model()
        plan = self.experiment.simulation_plan(model)
        mc = self.experiment.data['mc']
        result = euler_simulate(plan, self.workers, self.progress)
        if mc.get('write_samples'):
            sample_path, sidecar = self.exporter.export_samples(
                result.samples, 'samples.bin',
                {'config_hash': self.experiment.hash, 'seed': plan.seed, 'n_paths': plan.n_paths,
                 'n_steps': plan.n_steps, 'excluded': result.excluded})
            manifest.add(sample_path)
            manifest.add(sidecar)

        estimate = kde(result.samples, reference.lattice, mc.get('bandwidth_rule', 'iqr'), mc.get('bandwidth'))
        manifest.add(self.exporter.export_frame_csv(estimate.to_frame(), 'kde.csv', self.header))
        comparison = compare_densities(reference, estimate, plan.x0, float(mc.get('window', 8.0)))
        manifest.add(self.exporter.export_frame_csv(comparison.frame, 'comparison.csv', self.header))

        manifest.checks['oracle_band'] = comparison.passed
        manifest.checks['kde_reliable'] = comparison.reliable
        manifest.constants.update({'bandwidth': estimate.bandwidth, 'n_samples': estimate.n_samples,
                                   'excluded_paths': result.excluded,
                                   'max_excess': comparison.max_excess})
        if not comparison.passed:
            raise OracleMismatchError(f"蒙特卡洛密度超出置信带, 最大超出 {comparison.max_excess:.3g}",
                                      {'max_excess': comparison.max_excess})

    # ------------------------------------------------------------ bounds

    def run_bounds(self, manifest: RunManifest) -> None:
        """上界与不变量批量检查"""
        model = self.experiment.build_model()
        config = self.experiment.parametrix_config()
        section = self.experiment.data['bounds']
        suite = BoundsSuite(model, config, self.experiment.t, float(self.experiment.horizon['y']),
                            float(section.get('factor', 2.0)), self.workers)
        sequence = self._perturbation_sequence(model, with_delta=True)
        report = suite.run(self.experiment.T, section['frozen_horizons'], section['kernel_horizons'],
                           int(section['max_order']), sequence)
        manifest.add(self.exporter.export_frame_csv(report.to_frame(), 'bounds.csv', self.header))
        manifest.checks.update({check.name: check.passed for check in report.checks})
        manifest.constants.update(report.constants)
        if not report.all_passed:
            self.logger.warning("部分上界检查未通过, 详见 bounds.csv")


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (str, int, float, bool)) or value is None:
        return value
    return repr(value)
