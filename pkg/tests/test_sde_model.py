"""
SDE 模型: 系数场, 假设检查, 推前测度, Δ_n 与扰动族
"""
import math

import numpy as np
import pytest

from src.exceptions import AssumptionError, ConfigurationError, SingularityError
from src.models.coefficients import (
    AffineClampedField,
    CallableField,
    ConstantField,
    LatticeAliasedField,
    SinusoidalField,
    TimeLinearField,
    field_from_dict,
)
from src.models.sde_model import (
    SdeModel,
    ValidationLattice,
    build_perturbation_sequence,
    default_delta_family,
    estimate_delta_n,
    model_from_dict,
    perturb_model,
    pushforward_measure,
    validate_assumptions,
)
from src.noise.levy_noise import TemperedStableSpec, levy_measure


@pytest.fixture
def lattice():
    return ValidationLattice.regular(0.0, 1.0, 0.0, 4.0)


def test_field_from_dict_builds_compositions():
    field = field_from_dict({'kind': 'scaled', 'base': 2.0,
                             'modulation': {'kind': 'sinusoidal', 'a': 0.0, 'b': 0.1, 'c': 2.0}})
    x = np.array([0.0, 0.3])
    np.testing.assert_allclose(field(0.0, x), 2.0 * (1.0 + 0.1 * np.sin(2.0 * x)))
    assert field_from_dict(field.to_dict())(0.0, x) == pytest.approx(field(0.0, x))
    with pytest.raises(ConfigurationError):
        field_from_dict({'kind': 'unknown'})
    with pytest.raises(ConfigurationError):
        field_from_dict('1.0')


def test_time_dependence_flags(stable_noise):
    assert not TimeLinearField(1.0, 0.5).time_homogeneous
    assert TimeLinearField(1.0, 0.0).time_homogeneous
    model = SdeModel(noise=stable_noise, drift=ConstantField(0.0), sigma=TimeLinearField(1.0, 0.1))
    assert not model.time_homogeneous
    clamped = AffineClampedField(1.0, 0.5, 0.5, 1.5)
    np.testing.assert_allclose(clamped(0.0, np.array([-4.0, 0.0, 4.0])), [0.5, 1.0, 1.5])


def test_callable_field_broadcasts():
    field = CallableField(lambda t, x: 1.0 + 0.0 * x)
    assert field(0.5, np.zeros((2, 3))).shape == (2, 3)


def test_model_from_dict_requires_sigma():
    with pytest.raises(ConfigurationError):
        model_from_dict({'alpha': 1.5}, {'drift': 0.0})
    model = model_from_dict({'alpha': 1.5}, {'sigma': 1.0, 'eta': 0.5})
    assert model.holder_exponent() == pytest.approx(0.5)


def test_validate_constant_model_passes(stable_noise, lattice):
    model = SdeModel(noise=stable_noise, drift=ConstantField(0.5), sigma=ConstantField(1.0))
    report = validate_assumptions(model, lattice)
    assert report.passed
    assert report.holder_ratio == 0.0
    assert report.drift_bound == pytest.approx(0.5)


def test_sigma_touching_zero_reports_witness(stable_noise, lattice):
    model = SdeModel(noise=stable_noise, drift=ConstantField(0.0), sigma=SinusoidalField(1.0, 1.0))
    with pytest.raises(AssumptionError) as info:
        validate_assumptions(model, lattice)
    witness = info.value.witness
    assert witness['rule'] == 'ellipticity'
    assert witness['sigma'] ** 2 < 1.0 / model.kappa


def test_drift_must_vanish_for_small_alpha(lattice):
    model = SdeModel(noise=TemperedStableSpec(alpha=0.8), drift=ConstantField(0.1),
                     sigma=ConstantField(1.0))
    with pytest.raises(AssumptionError) as info:
        validate_assumptions(model, lattice)
    assert info.value.witness['rule'] == 'drift_vanishes_for_alpha_le_1'
    assert info.value.exit_code == 2


def test_levy_holder_constant_reported(sigma_only_model, lattice):
    family = default_delta_family(lattice)
    report = validate_assumptions(sigma_only_model, lattice, family=family)
    assert report.levy_holder_constant is not None and report.levy_holder_constant > 0.0


def test_pushforward_is_additive_and_scaled(sigma_only_model):
    x = np.array([-1.0, 0.0, 2.0])
    whole = pushforward_measure(sigma_only_model, 0.0, x, 0.5, 4.0)
    parts = (pushforward_measure(sigma_only_model, 0.0, x, 0.5, 1.5)
             + pushforward_measure(sigma_only_model, 0.0, x, 1.5, 4.0))
    np.testing.assert_allclose(whole, parts, rtol=1e-10)
    sig = float(sigma_only_model.s(0.0, 2.0))
    assert whole[2] == pytest.approx(levy_measure(sigma_only_model.noise, 0.5 / sig, 4.0 / sig), rel=1e-12)
    with pytest.raises(SingularityError):
        pushforward_measure(sigma_only_model, 0.0, x, -1.0, 1.0)


def test_default_family_layout(lattice):
    family = default_delta_family(lattice)
    assert len(family.intervals) == 21 * 4
    assert (2.0 ** -10, 2.0 ** -9) in family.intervals
    assert (-math.inf, -1.0) in family.intervals


def test_delta_vanishes_on_identical_models(acceptance_model, lattice):
    family = default_delta_family(lattice)
    estimate = estimate_delta_n(acceptance_model, acceptance_model, family)
    assert estimate.value == 0.0
    assert estimate.is_zero


def test_delta_is_symmetric_and_tracks_drift(acceptance_model, lattice):
    family = default_delta_family(lattice)
    shifted = perturb_model(acceptance_model, 'drift_shift', 0.1, 4)
    estimate = estimate_delta_n(acceptance_model, shifted, family)
    assert estimate.drift_term == pytest.approx(0.025, rel=1e-12)
    assert estimate.measure_term == 0.0
    scaled = perturb_model(acceptance_model, 'sigma_sine', 0.1, 2)
    forward = estimate_delta_n(acceptance_model, scaled, family)
    backward = estimate_delta_n(scaled, acceptance_model, family)
    assert forward.value == pytest.approx(backward.value, rel=1e-12)
    assert forward.value > 0.0


def test_estimate_delta_requires_family(acceptance_model, lattice):
    family = default_delta_family(lattice)
    empty = type(family)(intervals=(), lattice=lattice)
    with pytest.raises(ConfigurationError):
        estimate_delta_n(acceptance_model, acceptance_model, empty)


def test_perturbation_sequence_decreases(acceptance_model, lattice):
    family = default_delta_family(lattice)
    sequence = build_perturbation_sequence(acceptance_model, 'combined', 0.1, [2, 4, 8], family)
    values = [d.value for d in sequence.measured_delta]
    assert values[0] > values[1] > values[2] > 0.0
    assert [m.name for m in sequence.perturbed] == ['n=2', 'n=4', 'n=8']
    with pytest.raises(ConfigurationError):
        build_perturbation_sequence(acceptance_model, 'combined', 0.1, [4, 2])
    with pytest.raises(ConfigurationError):
        build_perturbation_sequence(acceptance_model, 'bogus', 0.1, [1])


def test_lattice_aliased_perturbation_is_invisible_on_lattice(acceptance_model, lattice):
    family = default_delta_family(lattice)
    sequence = build_perturbation_sequence(acceptance_model, 'lattice_aliased', 0.2, [1], family)
    assert sequence.measured_delta[0].is_zero
    perturbed = sequence.perturbed[0]
    midpoint = lattice.xs[0] + 0.5 * lattice.spacing
    assert perturbed.s(0.0, midpoint) != pytest.approx(acceptance_model.s(0.0, midpoint))
    field = LatticeAliasedField(0.2, lattice.xs[0], lattice.spacing)
    assert float(np.max(np.abs(field(0.0, np.asarray(lattice.xs))))) < 1e-20
