import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gasedge import (
    ContractViolation,
    GasParameters,
    ParticleConfiguration,
    PotentialSpec,
    configuration_energy,
    deviation_scale,
    interaction_eval,
    log_interaction,
    potential_eval,
    potential_grad,
    rate_function,
    riesz_interaction,
)


def test_potential_values():
    assert potential_eval(PotentialSpec(0.5, 2.0), 2.0) == pytest.approx(2.0)
    assert potential_eval(PotentialSpec(1.0, 2.0), 0.0) == 0.0
    assert potential_eval(PotentialSpec(1.0, 3.0), -2.0) == pytest.approx(8.0)


def test_potential_with_perturbation():
    spec = PotentialSpec(1.0, 2.0, perturbation=np.cos, perturbation_derivative=lambda x: -np.sin(x))
    assert spec.value(0.0) == pytest.approx(1.0)
    assert spec.grad(0.5) == pytest.approx(1.0 - math.sin(0.5))


def test_potential_validation():
    with pytest.raises(ContractViolation):
        PotentialSpec(0.0, 2.0)
    with pytest.raises(ContractViolation):
        PotentialSpec(1.0, 0.5)


def test_grad_matches_central_difference(gen):
    # 100 random points across several (kappa, alpha) pairs, phi = 0
    for kappa, alpha in [(0.5, 2.0), (1.0, 3.0), (2.0, 1.5), (0.7, 4.0)]:
        spec = PotentialSpec(kappa, alpha)
        xs = gen.uniform(0.3, 4.0, size=25) * gen.choice([-1.0, 1.0], size=25)
        h = 1e-6 * np.maximum(np.abs(xs), 1.0)
        fd = (spec.value(xs + h) - spec.value(xs - h)) / (2 * h)
        g = spec.grad(xs)
        assert np.max(np.abs(fd - g) / np.maximum(np.abs(g), 1e-12)) < 1e-6


def test_interaction_values():
    assert interaction_eval(log_interaction(), 1.0) == 0.0
    assert interaction_eval(riesz_interaction(0.5), 4.0) == pytest.approx(0.5)
    assert interaction_eval(log_interaction(), 0.0) == math.inf
    assert interaction_eval(riesz_interaction(0.3), 0.0) == math.inf


def test_riesz_exponent_range():
    for bad in (0.0, 1.0, 1.5, -0.2):
        with pytest.raises(ContractViolation):
            riesz_interaction(bad)


def test_configuration_energy_examples():
    pot = PotentialSpec(0.5, 2.0)
    params = GasParameters(n=2, pressure=0.5, beta=1.0,
                           interaction=log_interaction(), potential=pot)
    e = configuration_energy(params, ParticleConfiguration(np.array([0.0, 1.0])))
    assert e == pytest.approx(0.5)

    coincide = configuration_energy(params, ParticleConfiguration(np.array([0.3, 0.3])))
    assert coincide == math.inf

    # three Riesz particles, direct double sum
    params3 = GasParameters(n=3, pressure=0.3, beta=0.2,
                            interaction=riesz_interaction(0.5),
                            potential=PotentialSpec(1.0, 1.0))
    e3 = configuration_energy(params3, ParticleConfiguration(np.array([0.0, 1.0, 4.0])))
    expected = 5.0 + 0.2 * (1.0 + 0.5 + 1.0 / math.sqrt(3.0))
    assert e3 == pytest.approx(expected, rel=1e-14)


def test_configuration_energy_length_mismatch():
    params = GasParameters(n=3, pressure=0.0, beta=0.0,
                           interaction=log_interaction(),
                           potential=PotentialSpec(1.0, 2.0))
    with pytest.raises(ContractViolation):
        configuration_energy(params, ParticleConfiguration(np.array([0.0, 1.0])))


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=2, max_size=6, unique=True),
       st.integers(0, 10**6))
def test_energy_permutation_invariant(xs, perm_seed):
    params = GasParameters(n=len(xs), pressure=0.5, beta=2 * 0.5 / len(xs),
                           interaction=log_interaction(),
                           potential=PotentialSpec(0.5, 2.0))
    base = configuration_energy(params, ParticleConfiguration(np.array(xs)))
    shuffled = np.random.default_rng(perm_seed).permutation(xs)
    again = configuration_energy(params, ParticleConfiguration(shuffled))
    assert again == pytest.approx(base, rel=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=2, max_size=6, unique=True),
       st.floats(0.2, 5.0))
def test_log_energy_scaling_identity(xs, c):
    # scaling positions by c shifts the log-interaction part by
    # -beta * C(N,2) * log c, plus the potential difference
    n = len(xs)
    pot = PotentialSpec(0.5, 2.0)
    params = GasParameters(n=n, pressure=1.0, beta=2.0 / n,
                           interaction=log_interaction(), potential=pot)
    x = np.array(xs)
    e1 = configuration_energy(params, ParticleConfiguration(x))
    e2 = configuration_energy(params, ParticleConfiguration(c * x))
    pairs = n * (n - 1) / 2
    predicted = (
        e1
        - params.beta * pairs * math.log(c)
        + float(np.sum(pot.value(c * x)) - np.sum(pot.value(x)))
    )
    assert e2 == pytest.approx(predicted, rel=1e-10, abs=1e-10)


def test_rate_function_values():
    assert rate_function(2.0, 1.0) == 0.0
    assert rate_function(2.0, 2.0) == pytest.approx(3.0)
    assert rate_function(2.0, 0.5) == math.inf


@settings(max_examples=60, deadline=None)
@given(st.floats(1.0, 5.0), st.floats(-2.0, 4.0), st.floats(0.0, 2.0))
def test_rate_function_shape(alpha, x, step):
    val = rate_function(alpha, x)
    if x < 1:
        assert math.isinf(val)
    else:
        # nondecreasing on [1, inf), zero exactly at 1
        assert val >= 0.0
        assert rate_function(alpha, x + step) >= val
    assert rate_function(alpha, 1.0) == 0.0


def test_high_temperature_coupling():
    params = GasParameters.high_temperature(
        50, 1.5, log_interaction(), PotentialSpec(0.5, 2.0)
    )
    assert params.beta == pytest.approx(2 * 1.5 / 50)
    assert GasParameters.high_temperature(
        10, 0.0, log_interaction(), PotentialSpec(0.5, 2.0)
    ).beta == 0.0


def test_configuration_sorted():
    config = ParticleConfiguration(np.array([3.0, -1.0, 2.0]))
    assert np.all(np.diff(config.positions) >= 0)
    assert config.x_max == 3.0


def test_deviation_scale():
    pot = PotentialSpec(0.5, 2.0)
    assert deviation_scale(pot, 100) == pytest.approx(math.sqrt(2 * math.log(100)))
