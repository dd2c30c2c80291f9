"""
Lévy 噪声: 特征指数, Lévy 测度与噪声描述校验
"""
import math

import numpy as np
import pytest

from src.exceptions import ConfigurationError, SingularityError
from src.noise.levy_noise import (
    TemperedStableSpec,
    Tempering,
    _exponent_by_quadrature,
    check_doubling,
    dominating_mass,
    levy_density,
    levy_exponent,
    levy_measure,
    normalized_scale,
    pure_stable_constant,
    second_moment,
    spec_from_dict,
    tail_mass,
    verify_h2,
)


def test_normalized_noise_has_unit_constant(stable_noise):
    assert pure_stable_constant(stable_noise) == 1.0
    assert levy_exponent(stable_noise, 2.0) == pytest.approx(-2.0 ** 1.5, rel=1e-14)


def test_explicit_scale_constant():
    spec = TemperedStableSpec(alpha=1.0, scale_c=1.0)
    # (w₊ + w₋)·c·π/2
    assert pure_stable_constant(spec) == pytest.approx(math.pi, rel=1e-14)
    spec = TemperedStableSpec(alpha=1.5, scale_c=normalized_scale(1.5))
    assert pure_stable_constant(spec) == pytest.approx(1.0, rel=1e-12)


def test_exponent_is_even_and_nonpositive(tempered_noise):
    p = np.linspace(-20.0, 20.0, 41)
    values = levy_exponent(tempered_noise, p)
    assert np.all(values <= 0.0)
    np.testing.assert_allclose(values, values[::-1], atol=1e-12)


def test_pure_stable_scaling(stable_noise):
    p = np.array([0.3, 1.0, 7.5])
    lam = 3.7
    np.testing.assert_allclose(levy_exponent(stable_noise, lam * p),
                               lam ** 1.5 * levy_exponent(stable_noise, p), rtol=1e-10)


def test_tempered_closed_form_matches_quadrature(tempered_noise):
    for p in (0.5, 2.0, 9.0):
        closed = levy_exponent(tempered_noise, p)
        numeric = _exponent_by_quadrature(tempered_noise, p)
        assert closed == pytest.approx(numeric, rel=1e-7)


def test_tempered_unit_alpha_quadrature():
    """α = 1 的指数调和: φ(p) = -(2/π)[p·arctan(p/λ) - (λ/2)·log(1 + p²/λ²)]"""
    lam = 1.0
    spec = TemperedStableSpec(alpha=1.0, tempering=Tempering(kind='exponential', lam=lam))

    def exact(p):
        return -(2.0 / math.pi) * (p * math.atan(p / lam) - 0.5 * lam * math.log1p((p / lam) ** 2))

    for p in (0.2, 3.0, 40.0):
        assert levy_exponent(spec, p) == pytest.approx(exact(p), rel=1e-7)
    grid = np.array([0.05, 0.7, 5.0, 80.0])
    np.testing.assert_allclose(levy_exponent(spec, grid), [exact(p) for p in grid], rtol=1e-5)


def test_tabulated_tempering_between_bounds(stable_noise):
    spec = TemperedStableSpec(alpha=1.5, tempering=Tempering(kind='tabulated', s_grid=(0.5, 2.0, 8.0),
                                                             values=(1.0, 0.5, 0.25)))
    p = 4.0
    value = levy_exponent(spec, p)
    assert levy_exponent(stable_noise, p) < value < 0.0
    np.testing.assert_allclose(spec.q_bar(np.array([0.1, 100.0])), [1.0, 0.25], rtol=1e-12)


def test_verify_h2(stable_noise):
    report = verify_h2(stable_noise, 0.5, [1.5, 4.0, 100.0])
    assert report.all_passed
    assert report.largest_k == pytest.approx(1.0, rel=1e-12)
    assert not verify_h2(stable_noise, 2.0, [2.0]).all_passed
    with pytest.raises(ConfigurationError):
        verify_h2(stable_noise, 0.5, [])
    with pytest.raises(ConfigurationError):
        verify_h2(stable_noise, 0.5, [0.5, 2.0])


def test_levy_density_and_singularity(tempered_noise):
    z = np.array([-2.0, 0.5, 3.0])
    expected = tempered_noise.c * np.exp(-np.abs(z)) * np.abs(z) ** -2.5
    np.testing.assert_allclose(levy_density(tempered_noise, z), expected, rtol=1e-14)
    with pytest.raises(SingularityError):
        levy_density(tempered_noise, 0.0)


def test_dominating_mass_is_additive(tempered_noise):
    whole = dominating_mass(tempered_noise, 0.25, 4.0)
    parts = dominating_mass(tempered_noise, 0.25, 1.0) + dominating_mass(tempered_noise, 1.0, 4.0)
    assert whole == pytest.approx(parts, rel=1e-10)
    assert dominating_mass(tempered_noise, -4.0, -0.25) == pytest.approx(whole, rel=1e-12)
    assert dominating_mass(tempered_noise, 2.0, math.inf) == pytest.approx(tail_mass(tempered_noise, 2.0))


def test_interval_touching_zero_is_singular(stable_noise):
    with pytest.raises(SingularityError):
        dominating_mass(stable_noise, -1.0, 1.0)
    with pytest.raises(SingularityError):
        levy_measure(stable_noise, 0.0, 1.0)


def test_measure_dominated_by_unit_weight_mass():
    spec = TemperedStableSpec(alpha=0.8, weight_plus=0.5, weight_minus=0.5, scale_c=1.0)
    for a, b in ((0.1, 0.2), (1.0, math.inf), (-3.0, -1.0)):
        assert levy_measure(spec, a, b) <= dominating_mass(spec, a, b) + 1e-12


def test_tail_mass_closed_form(stable_noise):
    c = stable_noise.c
    np.testing.assert_allclose(tail_mass(stable_noise, np.array([0.5, 2.0])),
                               c * np.array([0.5, 2.0]) ** -1.5 / 1.5, rtol=1e-14)
    assert tail_mass(stable_noise, math.inf) == 0.0


def test_second_moment(stable_noise, tempered_noise):
    eps = 0.3
    assert second_moment(stable_noise, eps) == pytest.approx(2.0 * stable_noise.c * eps ** 0.5 / 0.5)
    assert second_moment(tempered_noise, eps) < second_moment(TemperedStableSpec(alpha=1.5), eps)
    with pytest.raises(ConfigurationError):
        second_moment(stable_noise, 0.0)


def test_check_doubling(stable_noise):
    report = check_doubling(stable_noise)
    assert report.monotone
    assert report.constant == pytest.approx(1.0)


@pytest.mark.parametrize('kwargs', [
    {'alpha': 2.0},
    {'alpha': 1.5, 'weight_plus': 1.0, 'weight_minus': 0.5},
    {'alpha': 1.5, 'scale_c': -1.0},
    {'alpha': 1.5, 'tempering': Tempering(kind='exponential')},
    {'alpha': 1.5, 'tempering': Tempering(kind='tabulated', s_grid=(1.0, 2.0), values=(0.5, 1.0))},
    {'alpha': 1.5, 'gamma': 2.0},
])
def test_invalid_specs_rejected(kwargs):
    with pytest.raises(ConfigurationError):
        TemperedStableSpec(**kwargs)


def test_spec_from_dict(tempered_noise):
    data = {'alpha': 1.5, 'tempering': {'kind': 'exponential', 'lambda': 1.0}, 'weights': [1.0, 1.0]}
    assert spec_from_dict(data) == tempered_noise
    assert spec_from_dict(tempered_noise.to_dict()) == tempered_noise
    with pytest.raises(ConfigurationError):
        spec_from_dict({'tempering': {'kind': 'none'}})


def _unit_alpha_exact(p, lam=1.0):
    return -(2.0 / math.pi) * (p * math.atan(p / lam) - 0.5 * lam * math.log1p((p / lam) ** 2))


@pytest.mark.parametrize('tempering', [
    Tempering(kind='tabulated', s_grid=(0.5, 2.0, 8.0), values=(1.0, 0.5, 0.25)),
    Tempering(kind='exponential', lam=1.0),
])
def test_spline_path_matches_quadrature(tempering):
    alpha = 1.5 if tempering.kind == 'tabulated' else 1.0
    spec = TemperedStableSpec(alpha=alpha, tempering=tempering)
    grid = np.logspace(-4.0, 4.0, 200)
    spline = levy_exponent(spec, grid)
    direct = np.array([_exponent_by_quadrature(spec, p) for p in grid])
    np.testing.assert_allclose(spline, direct, rtol=1e-5)
    if tempering.kind == 'exponential':
        np.testing.assert_allclose(spline, [_unit_alpha_exact(p) for p in grid], rtol=1e-5)


def test_small_arrays_use_direct_quadrature():
    spec = TemperedStableSpec(alpha=1.0, tempering=Tempering(kind='exponential', lam=1.0))
    p = np.array([[0.3, 2.0], [0.3, 0.0]])
    values = levy_exponent(spec, p)
    assert values.shape == (2, 2)
    expected = [[_exponent_by_quadrature(spec, 0.3), _exponent_by_quadrature(spec, 2.0)],
                [_exponent_by_quadrature(spec, 0.3), 0.0]]
    np.testing.assert_array_equal(values, expected)


def test_quadrature_accurate_at_small_frequency():
    # φ(p) ≈ -p²/π, 直接积分 1 - cos 会相消
    spec = TemperedStableSpec(alpha=1.0, tempering=Tempering(kind='exponential', lam=1.0))
    for p in (1e-4, 1e-3, 0.05):
        assert _exponent_by_quadrature(spec, p) == pytest.approx(_unit_alpha_exact(p), rel=1e-7)
