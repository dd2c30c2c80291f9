"""
命令行: 子命令, 退出码与运行清单
"""
import json
import os

import numpy as np
import pytest
from scipy import stats

import main
from config.config import Config
from src.reporting.experiment_config import load_experiment
from src.simulation.euler import SimulationResult
from src.utils.export_utils import read_csv

CAUCHY = {
    'name': 'cauchy-small',
    'noise': {'alpha': 1.0},
    'coefficients': {'drift': 0.0, 'sigma': 1.0},
    'horizon': {'lattice': {'center': 0.0, 'half_width': 64.0, 'points': 512}},
    'parametrix': {'k_max': 2, 'time_nodes': 4},
    'mc': {'n_steps': 1, 'n_paths': 200000, 'seed': 5, 'bandwidth_rule': 'fixed',
           'bandwidth': 0.02, 'window': 5.0},
}


@pytest.fixture(autouse=True)
def workspace(tmp_path, monkeypatch):
    """日志目录与输出目录都放在临时目录下"""
    monkeypatch.chdir(tmp_path)
    for name in list(os.environ):
        if name.startswith(f"{Config.ENV_PREFIX}__"):
            monkeypatch.delenv(name)
    return tmp_path


def _config(workspace, data, name='experiment.json'):
    path = workspace / name
    path.write_text(json.dumps(data), encoding='utf-8')
    return str(path)


def _run(command, config, out, *extra):
    return main.main([command, '--config', config, '--out', str(out), '--quiet', *extra])


def _manifest(out):
    with open(os.path.join(str(out), 'manifest.json'), encoding='utf-8') as f:
        return json.load(f)


def _quantile_samples(plan, workers=None, progress=True):
    """分层的柯西分位点, 代替随机路径"""
    u = (np.arange(plan.n_paths) + 0.5) / plan.n_paths
    return SimulationResult(samples=plan.x0 + stats.cauchy.ppf(u), excluded=0, plan=plan)


def test_no_command_prints_help(capsys):
    assert main.main([]) == 0
    assert 'validate' in capsys.readouterr().out


def test_validate_writes_manifest(workspace):
    out = workspace / 'validate'
    assert _run('validate', _config(workspace, CAUCHY), out) == 0
    manifest = _manifest(out)
    assert manifest['status'] == 'ok'
    assert manifest['checks']['h2'] is True
    assert manifest['checks']['q_bar_monotone'] is True
    assert 'validation.json' in manifest['artifacts']
    assert manifest['constants']['h2_largest_k'] == pytest.approx(1.0, rel=1e-6)


def test_seed_changes_hash_and_out_does_not(workspace):
    config = _config(workspace, CAUCHY)
    assert _run('validate', config, workspace / 'a', '--seed', '99') == 0
    assert _run('validate', config, workspace / 'b', '--seed', '99') == 0
    assert _run('validate', config, workspace / 'c') == 0
    first, second, third = (_manifest(workspace / name) for name in 'abc')
    assert first['config_hash'] == second['config_hash']
    assert first['config_hash'] == load_experiment(config, seed=99, environ={}).hash
    assert third['config_hash'] != first['config_hash']


def test_missing_config_exits_3(workspace):
    assert _run('validate', str(workspace / 'missing.json'), workspace / 'out') == 3


@pytest.mark.parametrize('coefficients, noise', [
    ({'sigma': {'kind': 'sinusoidal', 'a': 1.0, 'b': 1.0, 'c': 1.0, 'd': 0.0}}, {'alpha': 1.5}),
    ({'sigma': 1.0, 'drift': 0.1}, {'alpha': 0.8}),
])
def test_assumption_violations_exit_2(workspace, coefficients, noise):
    data = dict(CAUCHY, coefficients=coefficients, noise=noise)
    out = workspace / 'out'
    assert _run('validate', _config(workspace, data), out) == 2
    manifest = _manifest(out)
    assert manifest['status'] == 'failed'
    assert manifest['exit_code'] == 2
    assert manifest['error']['type'] == 'AssumptionError'


def test_h2_constant_override_exits_2(workspace, monkeypatch):
    monkeypatch.setenv('LEVYPX__VALIDATE__H2_CONSTANT', '2.0')
    out = workspace / 'out'
    assert _run('validate', _config(workspace, CAUCHY), out) == 2
    assert _manifest(out)['error']['details']['rule'] == 'h2'


def test_density_then_oracle(workspace, monkeypatch):
    config = _config(workspace, CAUCHY)
    out = workspace / 'out'
    assert _run('density', config, out) == 0
    manifest = _manifest(out)
    assert set(manifest['artifacts']) == {'density_backward.csv', 'density_forward.csv',
                                          'terms_backward.csv', 'terms_forward.csv'}
    assert manifest['constants']['order_backward'] == 0
    assert manifest['checks']['forward_mass'] is True
    frame, header = read_csv(str(out / 'density_forward.csv'))
    assert header['direction'] == 'forward'
    assert header['config_hash'] == manifest['config_hash']
    inner = np.abs(frame['y'].to_numpy()) <= 5.0
    np.testing.assert_allclose(frame['value'].to_numpy()[inner],
                               stats.cauchy.pdf(frame['y'].to_numpy()[inner]), rtol=1e-3)

    monkeypatch.setattr('src.reporting.experiment_manager.euler_simulate', _quantile_samples)
    assert _run('oracle', config, out) == 0
    manifest = _manifest(out)
    assert manifest['command'] == 'oracle'
    assert manifest['checks']['oracle_band'] is True
    assert {'kde.csv', 'comparison.csv'} <= set(manifest['artifacts'])


def test_oracle_mismatch_exits_6(workspace, monkeypatch):
    config = _config(workspace, CAUCHY)
    out = workspace / 'out'
    assert _run('density', config, out) == 0
    path = out / 'density_forward.csv'
    lines = path.read_text(encoding='utf-8').splitlines(keepends=True)
    header = [line for line in lines if line.startswith('#')]
    frame, _ = read_csv(str(path))
    frame['value'] = 3.0 * frame['value']
    with open(path, 'w', encoding='utf-8', newline='') as f:
        f.writelines(header)
        frame.to_csv(f, index=False, lineterminator='\n')

    monkeypatch.setattr('src.reporting.experiment_manager.euler_simulate', _quantile_samples)
    assert _run('oracle', config, out) == 6
    manifest = _manifest(out)
    assert manifest['error']['type'] == 'OracleMismatchError'
    assert manifest['error']['details']['max_excess'] > 0.0


def test_oracle_requires_density(workspace):
    assert _run('oracle', _config(workspace, CAUCHY), workspace / 'out') == 3


def test_oracle_rejects_other_starting_point(workspace):
    out = workspace / 'out'
    assert _run('density', _config(workspace, CAUCHY), out) == 0
    moved = dict(CAUCHY, horizon={'x0': 1.0, 'lattice': CAUCHY['horizon']['lattice']})
    assert _run('oracle', _config(workspace, moved, 'moved.json'), out) == 3


def test_identical_stability_is_exact_match(workspace):
    out = workspace / 'out'
    config = os.path.join(Config.EXPERIMENTS_DIR, 'identical.json')
    assert _run('stability', config, out) == 0
    manifest = _manifest(out)
    assert manifest['constants']['verdict'] == 'exact-match'
    frame, _ = read_csv(str(out / 'stability.csv'))
    assert frame['n'].tolist() == [2, 4, 8]
    assert (frame['status'] == 'exact-match').all()


def test_aliased_perturbation_exits_5(workspace):
    out = workspace / 'out'
    config = os.path.join(Config.EXPERIMENTS_DIR, 'adversarial.json')
    assert _run('stability', config, out) == 5
    manifest = _manifest(out)
    assert manifest['status'] == 'failed'
    assert manifest['error']['type'] == 'InconsistencyError'


def test_stability_without_perturbation_exits_3(workspace):
    assert _run('stability', _config(workspace, CAUCHY), workspace / 'out') == 3


@pytest.mark.slow
def test_series_divergence_exits_4(workspace):
    out = workspace / 'out'
    config = os.path.join(Config.EXPERIMENTS_DIR, 'divergence.json')
    assert _run('density', config, out) == 4
    manifest = _manifest(out)
    assert manifest['exit_code'] == 4
    assert manifest['error']['type'] == 'SeriesDivergenceError'
    norms = manifest['error']['details']['sup_norms']
    assert norms[-1] >= norms[-2] >= norms[-3]
    assert manifest['artifacts'] == []
