"""
参数展开: 配置, 核, 时空卷积, 级数与上界
"""
import math
from dataclasses import replace

import numpy as np
import pytest
from numpy.polynomial import legendre
from scipy import integrate, special

from src.density.frozen_density import fit_bound_constant
from src.exceptions import ConfigurationError, QuadratureError, SeriesDivergenceError
from src.models.coefficients import ConstantField, SinusoidalField
from src.models.sde_model import SdeModel
from src.noise.levy_noise import TemperedStableSpec, Tempering, levy_density
from src.parametrix.bounds import hbar, rho, rho_m
from src.parametrix.config import ParametrixConfig
from src.parametrix.convolution import envelope_exponent, space_time_convolve
from src.parametrix.kernel import LatticeOperators, generator_symbol, kernel_H
from src.parametrix.series import (
    ParametrixSeries,
    parametrix_series,
    parametrix_series_forward,
    select_order,
)


def _gaussian_left(t, u, x, z):
    return np.exp(-0.5 * (z - x) ** 2)


def _gaussian_right(u, T, z, y):
    return np.exp(-0.5 * (y - z) ** 2)


def test_config_from_dict():
    config = ParametrixConfig.from_dict({'k_max': 6, 'tail_tol': 1e-8})
    assert config.k_max == 6
    assert config.resolve_omega(1.5, 1.0) == pytest.approx(1.0 / 1.5)
    assert ParametrixConfig.from_dict(None) == ParametrixConfig()
    with pytest.raises(ConfigurationError):
        ParametrixConfig.from_dict({'kmax': 6})
    with pytest.raises(ConfigurationError):
        ParametrixConfig(lattice_points=100)
    with pytest.raises(ConfigurationError):
        ParametrixConfig(omega=1.5)


def test_select_order_stops_before_small_term():
    norms = [1.0, 0.5, 0.25, 1e-8]
    order, converged, ratios = select_order(norms, norms, 1e-6, 3)
    assert (order, converged) == (2, True)
    assert ratios[0] is None
    assert ratios[1] == pytest.approx(0.5)


def test_select_order_hits_k_max():
    norms = [1.0, 0.5, 0.25, 0.125]
    order, converged, _ = select_order(norms, norms, 1e-6, 3)
    assert (order, converged) == (3, False)


def test_select_order_zero_kernel():
    order, converged, ratios = select_order([1.0, 0.0, 0.0], [1.0, 0.0, 0.0], 1e-6, 2)
    assert (order, converged) == (0, True)
    assert ratios[2] is None


def test_select_order_detects_divergence():
    norms = [1.0, 2.0, 4.0, 8.0]
    with pytest.raises(SeriesDivergenceError) as info:
        select_order(norms, norms, 1e-6, 3)
    assert info.value.exit_code == 4
    # 截断阶之后的增长不算发散
    order, _, _ = select_order([1.0, 1e-9, 2e-9, 4e-9], [1.0, 1e-9, 2e-9, 4e-9], 1e-6, 3)
    assert order == 0


def test_generator_symbol(acceptance_model):
    value = generator_symbol(acceptance_model, 0.0, 0.0, 2.0)
    # b(0) = 0.2 cos 0, σ(0) = 1
    assert value.imag == pytest.approx(0.4)
    assert value.real == pytest.approx(-2.0 ** 1.5)


def test_kernel_vanishes_for_constant_coefficients(cauchy_model):
    x = np.linspace(-3.0, 3.0, 7)
    assert np.all(kernel_H(cauchy_model, 0.0, 1.0, x, 0.5) == 0.0)
    config = ParametrixConfig(lattice_points=32, lattice_half_width=8.0)
    ops = LatticeOperators(cauchy_model, config.lattice(0.0), config, workers=1)
    assert ops.kernel_vanishes(0.0)
    assert not np.any(ops.kernel_matrix(0.0, 1.0))


def test_lattice_kernel_matches_pointwise(acceptance_model):
    config = ParametrixConfig(lattice_points=128, lattice_half_width=16.0)
    lattice = config.lattice(0.0)
    ops = LatticeOperators(acceptance_model, lattice, config, workers=2)
    matrix = ops.kernel_matrix(0.0, 1.0)
    inner = np.flatnonzero(np.abs(lattice) <= 4.0)
    pointwise = kernel_H(acceptance_model, 0.0, 1.0, lattice[inner][:, None], lattice[inner][None, :],
                         config)
    block = matrix[np.ix_(inner, inner)]
    scale = float(np.max(np.abs(pointwise)))
    assert scale > 0.0
    np.testing.assert_allclose(block, pointwise, atol=1e-4 * scale)
    np.testing.assert_allclose(np.diag(block), 0.0, atol=1e-4 * scale)


def test_kernel_dominated_by_hbar(acceptance_model, fast_config):
    grid = fast_config.check_grid(0.0)
    px, py = np.meshgrid(grid, grid, indexing='ij')
    values = kernel_H(acceptance_model, 0.0, 0.5, px, py, fast_config)
    envelope = hbar(acceptance_model, 0.0, 0.5, px, py, fast_config)
    assert math.isfinite(fit_bound_constant(values, envelope, relative_floor=1e-6))


def test_convolution_of_gaussians_is_exact():
    config = ParametrixConfig(lattice_points=256, lattice_half_width=16.0, time_nodes=8)
    x = np.linspace(-4.0, 4.0, 9)
    result = space_time_convolve(_gaussian_left, _gaussian_right, 0.0, 2.0, x, 0.0, config, strict=True,
                                 envelope_decay=2.0)
    expected = 2.0 * math.sqrt(math.pi) * np.exp(-0.25 * x ** 2)
    np.testing.assert_allclose(result.values, expected, rtol=1e-10)
    assert result.converged


def test_convolution_flags_unresolved_time_singularity():
    config = ParametrixConfig(lattice_points=64, lattice_half_width=8.0, time_nodes=8)

    def singular(t, u, x, z):
        return (u - t) ** -0.9 * np.exp(-0.5 * (z - x) ** 2)

    x = np.array([0.0])
    with pytest.raises(QuadratureError):
        space_time_convolve(singular, _gaussian_right, 0.0, 1.0, x, 0.0, config, strict=True,
                            envelope_decay=2.0)
    relaxed = space_time_convolve(singular, _gaussian_right, 0.0, 1.0, x, 0.0, config, envelope_decay=2.0)
    assert not relaxed.converged
    assert relaxed.doubling_error > 0.0
    with pytest.raises(ConfigurationError):
        space_time_convolve(singular, _gaussian_right, 1.0, 1.0, x, 0.0, config, envelope_decay=2.0)


def test_cauchy_series_truncates_at_frozen_term(cauchy_model):
    config = ParametrixConfig(lattice_points=512, lattice_half_width=32.0, time_nodes=4, k_max=2)
    result = parametrix_series(cauchy_model, 0.0, 1.0, 0.0, config=config)
    assert result.order == 0
    assert result.converged
    x = result.density.lattice
    inner = np.abs(x) <= 10.0
    exact = 1.0 / (math.pi * (1.0 + x[inner] ** 2))
    np.testing.assert_allclose(result.density.values[inner], exact, rtol=1e-6)


def test_backward_and_forward_agree_at_fixed_point(sigma_only_model, fast_config):
    backward = parametrix_series(sigma_only_model, 0.0, 1.0, 0.0, config=fast_config)
    forward = parametrix_series_forward(sigma_only_model, 0.0, 1.0, 0.0, config=fast_config)
    center = fast_config.lattice_points // 2
    assert backward.density.values[center] == pytest.approx(forward.density.values[center], rel=2e-2)
    assert backward.order >= 1
    assert backward.terms[1].sup_norm < backward.terms[0].sup_norm
    assert 0.9 < forward.mass < 1.1
    assert np.all(forward.density.values >= 0.0)
    frame = backward.terms_frame()
    assert list(frame.columns) == ['k', 'sup_norm', 'weighted_sup_norm', 'ratio']
    assert len(frame) == backward.order + 1


def test_series_lattice_validation(sigma_only_model, fast_config):
    series = ParametrixSeries(sigma_only_model, fast_config, workers=1)
    with pytest.raises(ConfigurationError):
        series.backward(0.0, 1.0, 0.0, np.array([-1.0, 0.0, 0.5, 2.0, 3.0, 4.0, 5.0, 6.0]))
    with pytest.raises(ConfigurationError):
        series.backward(0.0, 1.0, 0.1, np.linspace(-4.0, 4.0, 17))
    with pytest.raises(ConfigurationError):
        series.backward(1.0, 1.0, 0.0)


def test_rho_m_and_hbar(acceptance_model, fast_config):
    # 对角线上 ρ = 0, ρ_0 = 2 p̄
    assert rho_m(acceptance_model, 0.0, 1.0, 0.0, 0.0, 0, fast_config) == pytest.approx(2.0)
    assert rho(acceptance_model, 0.0, 1.0, 0.0, 1.0, fast_config) == pytest.approx(2.0 ** -2.5)
    assert hbar(acceptance_model, 0.0, 0.5, 0.0, 0.0, fast_config) == 0.0
    x = np.linspace(-2.0, 2.0, 5)
    first = rho_m(acceptance_model, 0.0, 1.0, x, 0.0, 1, fast_config)
    assert np.all(first > 0.0)
    with pytest.raises(ConfigurationError):
        rho_m(acceptance_model, 0.0, 1.0, 0.0, 0.0, -1, fast_config)


def _second_difference_generator(noise, sig, drift, g, dg, x):
    """直接空间中的生成元 ∫_0^∞ [g(x+σr) + g(x-σr) - 2g(x)] ν(r) dr + b g'(x)"""
    def jump(r):
        return (g(x + sig * r) + g(x - sig * r) - 2.0 * g(x)) * levy_density(noise, r)

    near, _ = integrate.quad(jump, 0.0, 1.0, limit=200)
    far, _ = integrate.quad(jump, 1.0, np.inf, limit=200)
    return near + far + drift * dg(x)


@pytest.mark.parametrize('noise', [
    TemperedStableSpec(alpha=1.5, tempering=Tempering(kind='exponential', lam=1.0)),
    TemperedStableSpec(alpha=1.0, tempering=Tempering(kind='exponential', lam=1.0)),
    TemperedStableSpec(alpha=0.7),
])
def test_generator_symbol_matches_direct_space_generator(noise):
    sigma, drift = 1.3, (0.4 if noise.alpha >= 1.0 else 0.0)
    model = SdeModel(noise=noise, drift=ConstantField(drift), sigma=ConstantField(sigma))
    # g = e^{-x²/2}: L g(x) = (2/√(2π)) ∫_0^∞ Re[l(p) e^{ipx}] e^{-p²/2} dp
    nodes, weights = legendre.leggauss(400)
    p, w = 7.0 * (nodes + 1.0), 7.0 * weights
    symbol = generator_symbol(model, 0.0, 0.0, p)
    for x in (-1.0, 0.3, 1.7):
        fourier = 2.0 / math.sqrt(2.0 * math.pi) * float(
            np.sum(w * np.real(symbol * np.exp(1j * p * x)) * np.exp(-0.5 * p ** 2)))
        direct = _second_difference_generator(noise, sigma, drift, lambda u: math.exp(-0.5 * u * u),
                                              lambda u: -u * math.exp(-0.5 * u * u), x)
        assert fourier == pytest.approx(direct, rel=1e-4, abs=1e-7)


def test_cauchy_kernel_matches_direct_space_generator():
    model = SdeModel(noise=TemperedStableSpec(alpha=1.0),
                     drift=SinusoidalField(0.0, 0.2, 1.0, math.pi / 2.0),
                     sigma=SinusoidalField(1.0, 0.3, 1.0, 0.0))
    t, T, y = 0.0, 0.5, 0.3
    s = float(model.s(t, y)) * (T - t)
    shift = float(model.b(t, y)) * (T - t)

    def frozen(u):
        return s / (math.pi * (s * s + (u - y + shift) ** 2))

    def frozen_slope(u):
        w = u - y + shift
        return -2.0 * s * w / (math.pi * (s * s + w * w) ** 2)

    xs = y + np.array([-1.5, -0.6, 0.2, 0.9, 2.0])
    values = kernel_H(model, t, T, xs, y)
    expected = []
    for x in xs:
        at_x = _second_difference_generator(model.noise, float(model.s(t, x)), float(model.b(t, x)),
                                            frozen, frozen_slope, x)
        at_y = _second_difference_generator(model.noise, float(model.s(t, y)), float(model.b(t, y)),
                                            frozen, frozen_slope, x)
        expected.append(at_x - at_y)
    expected = np.array(expected)
    # 柯西情形 L^σ 作用于尺度 s 的柯西密度等于 σ ∂_s
    w = xs - y + shift
    d_sigma = model.s(t, xs) - model.s(t, y)
    d_drift = model.b(t, xs) - model.b(t, y)
    closed = (d_sigma * (w ** 2 - s ** 2) - d_drift * 2.0 * s * w) / (math.pi * (s * s + w * w) ** 2)
    scale = float(np.max(np.abs(closed)))
    np.testing.assert_allclose(expected, closed, atol=1e-6 * scale)
    np.testing.assert_allclose(values, closed, atol=1e-6 * scale)


def _constant_drift_model(drift):
    return SdeModel(noise=TemperedStableSpec(alpha=1.5), drift=ConstantField(drift),
                    sigma=ConstantField(1.0))


def test_constant_drift_series_is_translated_frozen_density():
    # h = 0.25, B = 0.5 为两个格距; 常系数时核为零
    config = ParametrixConfig(lattice_points=256, lattice_half_width=32.0, time_nodes=8, k_max=2)
    plain_forward = parametrix_series_forward(_constant_drift_model(0.0), 0.0, 1.0, 0.0, config=config)
    forward = parametrix_series_forward(_constant_drift_model(0.5), 0.0, 1.0, 0.0, config=config)
    backward = parametrix_series(_constant_drift_model(0.5), 0.0, 1.0, 0.0, config=config)
    plain_backward = parametrix_series(_constant_drift_model(0.0), 0.0, 1.0, 0.0, config=config)
    assert forward.order == backward.order == 0
    peak = float(np.max(plain_forward.density.values))
    np.testing.assert_allclose(forward.density.values[2:], plain_forward.density.values[:-2],
                               rtol=1e-9, atol=1e-13 * peak)
    np.testing.assert_allclose(backward.density.values[:-2], plain_backward.density.values[2:],
                               rtol=1e-9, atol=1e-13 * peak)
    lattice = forward.density.lattice
    assert lattice[int(np.argmax(forward.density.values))] == pytest.approx(0.5)
    assert lattice[int(np.argmax(backward.density.values))] == pytest.approx(-0.5)


def test_series_reports_time_doubling(acceptance_model, fast_config, cauchy_model):
    result = parametrix_series(acceptance_model, 0.0, 1.0, 0.0, config=fast_config)
    error = result.metadata['doubling_error']
    assert math.isfinite(error) and error > 0.0
    assert isinstance(result.metadata['quadrature_converged'], bool)
    assert result.density.metadata['time_nodes'] == 2 * fast_config.time_nodes

    strict = replace(fast_config, strict_doubling=True, doubling_tol=1e-12)
    with pytest.raises(QuadratureError) as info:
        parametrix_series(acceptance_model, 0.0, 1.0, 0.0, config=strict)
    assert info.value.details['direction'] == 'backward'

    unchecked = replace(fast_config, check_doubling=False)
    skipped = parametrix_series_forward(acceptance_model, 0.0, 1.0, 0.0, config=unchecked)
    assert skipped.metadata['doubling_error'] is None
    assert skipped.metadata['quadrature_converged'] is None

    config = ParametrixConfig(lattice_points=512, lattice_half_width=32.0, time_nodes=4, k_max=2)
    constant = parametrix_series(cauchy_model, 0.0, 1.0, 0.0, config=config)
    assert constant.metadata['doubling_error'] == 0.0
    assert constant.metadata['quadrature_converged'] is True


@pytest.mark.slow
def test_large_drift_series_diverges():
    model = SdeModel(noise=TemperedStableSpec(alpha=1.5), drift=SinusoidalField(0.0, 10.0, 1.0, 0.0),
                     sigma=ConstantField(1.0))
    config = ParametrixConfig(lattice_points=256, lattice_half_width=64.0, time_nodes=16, k_max=10)
    with pytest.raises(SeriesDivergenceError) as info:
        parametrix_series(model, 0.0, 2.0, 0.0, config=config)
    norms = info.value.details['sup_norms']
    assert norms[-1] >= norms[-2] >= norms[-3]


def test_envelope_exponent_follows_noise(stable_noise, cauchy_noise):
    assert envelope_exponent(stable_noise) == pytest.approx(2.5)
    assert envelope_exponent(cauchy_noise) == pytest.approx(2.0)


def test_convolution_tail_uses_noise_envelope(stable_noise):
    # f ~ |z|^{-2.5}, 与 α = 1.5, γ = 1 的包络同阶; ∫ (1 + z²)^{-5/4} dz = B(1/2, 3/4)
    config = ParametrixConfig(lattice_points=256, lattice_half_width=16.0, time_nodes=4)

    def power_left(t, u, x, z):
        return (1.0 + (z - x) ** 2) ** -1.25

    def flat_right(u, T, z, y):
        return np.ones_like(np.asarray(z, dtype=float))

    x = np.array([0.0])
    exact = special.beta(0.5, 0.75)
    matched = space_time_convolve(power_left, flat_right, 0.0, 1.0, x, 0.0, config, noise=stable_noise)
    assert matched.envelope_decay == pytest.approx(2.5)
    assert matched.values[0] == pytest.approx(exact, rel=1e-3)
    light = space_time_convolve(power_left, flat_right, 0.0, 1.0, x, 0.0, config, envelope_decay=2.0)
    assert abs(light.values[0] - exact) > 3e-3 * exact
    with pytest.raises(ConfigurationError):
        space_time_convolve(power_left, flat_right, 0.0, 1.0, x, 0.0, config)
