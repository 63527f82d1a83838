"""
Tests for the proportional-tail model: normalisation, sampling and oracles.
Run with: pytest test_model.py
"""
import math
import numpy as np
import pytest
from pydantic import ValidationError
from scipy import integrate, stats
from conftest import build_model
from proptail.core.model import (
    conditional_quantile_function, conditional_tail, conditional_tail_quantile, covariate_density,
    discretize_covariates, normalize_skedasis, sample_dataset, second_order_rate, skedasis_value,
    tail_given_sigma, true_conditional_quantile, true_integrated_skedasis, unconditional_tail,
    unconditional_tail_quantile,
)
from proptail.models import CovariateKind, CovariateSpec, SkedasisFamily, SkedasisSpec
from proptail.utils.errors import ModelSpecError, OutsideSupportError


# Skedasis normalisation
def test_constant_skedasis_normalizes_to_one():
    """Any constant level is a density only at 1."""
    spec = normalize_skedasis(SkedasisSpec(family='constant', params=[3.7]), CovariateSpec())
    values = skedasis_value(spec, np.linspace(0, 1, 11).reshape(-1, 1))
    assert np.allclose(values, 1.0, rtol=0, atol=1e-15)
    assert spec.sup_bound == pytest.approx(1.0)


def test_affine_skedasis_normalizes_to_2x():
    spec = normalize_skedasis(SkedasisSpec(family='affine', params=[0.0, 1.0]), CovariateSpec())
    assert spec.normalization == pytest.approx(0.5, abs=1e-15)
    for x in (0.0, 0.25, 0.5, 1.0):
        assert skedasis_value(spec, [[x]])[0] == pytest.approx(2 * x, abs=1e-12)


def test_step_skedasis_divides_by_mean():
    """Levels (1 on [0, 0.5), 3 on [0.5, 1]) have mean 2."""
    spec = normalize_skedasis(SkedasisSpec(family='step', params=[1.0, 0.5, 3.0]), CovariateSpec())
    assert skedasis_value(spec, [[0.2]])[0] == pytest.approx(0.5, abs=1e-12)
    assert skedasis_value(spec, [[0.7]])[0] == pytest.approx(1.5, abs=1e-12)


def test_log_affine_skedasis_integrates_to_one():
    spec = normalize_skedasis(SkedasisSpec(family='log_affine', params=[0.3, 1.2]), CovariateSpec())
    grid = (np.arange(200_000) + 0.5) / 200_000
    assert np.mean(skedasis_value(spec, grid.reshape(-1, 1))) == pytest.approx(1.0, abs=1e-9)


def test_negative_skedasis_rejected_with_point():
    with pytest.raises(ModelSpecError) as exc:
        normalize_skedasis(SkedasisSpec(family='affine', params=[-0.5, 1.0]), CovariateSpec())
    assert exc.value.point == (0.0,)


def test_discrete_skedasis_integrates_to_one():
    cov = CovariateSpec(kind='discrete', dim=1, points=[(0.0,), (1.0,)], probs=[0.3, 0.7])
    spec = normalize_skedasis(SkedasisSpec(family='affine', params=[1.0, 2.0]), cov)
    values = skedasis_value(spec, [[0.0], [1.0]])
    assert math.fsum([0.3 * values[0], 0.7 * values[1]]) == pytest.approx(1.0, abs=1e-12)


def test_discrete_probs_must_sum_to_one():
    with pytest.raises(ValidationError):
        CovariateSpec(kind='discrete', dim=1, points=[(0.0,), (1.0,)], probs=[0.3, 0.6])


# Model invariants
def test_alpha_is_reciprocal_of_gamma(pareto_model):
    assert pareto_model.alpha * pareto_model.gamma == pytest.approx(1.0, abs=1e-15)


def test_tail_mass_above_y0_must_be_a_probability():
    """σ(x) = 2x reaches 2, so y0 = 1 leaves 2·F̄(1) = 2 > 1."""
    with pytest.raises(ValidationError, match='raise y0'):
        build_model(family=SkedasisFamily.AFFINE, params=(0.0, 1.0), y0=1.0)


def test_nonpositive_gamma_rejected():
    with pytest.raises(ValidationError):
        build_model(gamma=0.0)


def test_perturbation_needs_positive_skedasis():
    with pytest.raises(ValidationError):
        build_model(family=SkedasisFamily.AFFINE, params=(0.0, 1.0), y0=2.0, tail='hall', c=0.5, delta=0.5)


def test_exact_pareto_rejects_perturbation():
    with pytest.raises(ValidationError):
        build_model(c=0.5)


def test_model_id_is_stable(make_model):
    assert make_model().model_id == make_model().model_id
    assert make_model().model_id != make_model(gamma=0.25).model_id


# Conditional tails and quantiles
def test_conditional_tail_exact_pareto(pareto_model):
    assert conditional_tail(pareto_model, 0.3, 2.0) == pytest.approx(0.25, abs=1e-15)
    assert conditional_tail(pareto_model, 0.3, 0.0) == 1.0


def test_conditional_tail_hall(hall_model):
    """F̄(2) = 2^-2 (1 + 0.5/2) / 1.5."""
    assert conditional_tail(hall_model, 0.5, 2.0) == pytest.approx(0.25 * 1.25 / 1.5, abs=1e-12)


def test_conditional_tail_outside_support(pareto_model):
    with pytest.raises(OutsideSupportError):
        conditional_tail(pareto_model, 1.5, 2.0)


def test_hall_density_integrates_to_tail(hall_model):
    """∫_2^∞ of the hall density (α y^-α-1 + c(α+β) y^-α-β-1)/(1+c) equals F̄(2)."""
    alpha, beta, c = hall_model.alpha, hall_model.beta, hall_model.c

    def density(y):
        return (alpha * y ** (-alpha - 1) + c * (alpha + beta) * y ** (-alpha - beta - 1)) / (1 + c)

    mass, _ = integrate.quad(density, 2.0, np.inf, epsabs=1e-13)
    assert unconditional_tail(hall_model, 2.0) == pytest.approx(mass, abs=1e-10)


def test_tail_quantile_exact_pareto(pareto_model):
    assert conditional_tail_quantile(pareto_model, 0.5, 100.0) == pytest.approx(10.0, abs=1e-12)


def test_tail_quantile_scales_with_skedasis(make_model):
    """σ(x) = 2 solves 2 w^-2 = 1/t, so U_x(100) = √200."""
    model = make_model(family=SkedasisFamily.AFFINE, params=(0.0, 1.0), y0=math.sqrt(2.0))
    assert conditional_tail_quantile(model, 1.0, 100.0) == pytest.approx(math.sqrt(200.0), abs=1e-12)


def test_tail_quantile_below_branch_names_minimal_t(make_model):
    model = make_model(family=SkedasisFamily.AFFINE, params=(0.0, 1.0), y0=math.sqrt(2.0))
    # σ(0.5) = 1 and F̄(y0) = 1/2, so the tail branch starts at t = 2
    with pytest.raises(ValueError, match='2.0'):
        conditional_tail_quantile(model, 0.5, 1.5)


def test_hall_tail_quantile_round_trip(hall_model):
    for t in (10.0, 1e3, 1e6):
        u = conditional_tail_quantile(hall_model, 0.5, t)
        assert conditional_tail(hall_model, 0.5, u) == pytest.approx(1.0 / t, abs=1e-10)


def test_true_conditional_quantile_matches_tail_quantile(affine_model):
    assert true_conditional_quantile(affine_model, 0.5, 1e-3) == pytest.approx(
        conditional_tail_quantile(affine_model, 0.5, 1e3), rel=1e-15
    )
    with pytest.raises(ValueError):
        true_conditional_quantile(affine_model, 0.5, 0.9)


def test_constant_skedasis_quantile_is_unconditional(pareto_model):
    assert true_conditional_quantile(pareto_model, 0.5, 1e-4) == pytest.approx(
        unconditional_tail_quantile(pareto_model, 1e4), rel=1e-15
    )


def test_quantile_function_inverts_body_and_tail(affine_model):
    sigma = np.array([0.5, 1.0, 1.5])
    u = np.array([0.2, 0.5, 0.999])
    y = conditional_quantile_function(affine_model, sigma, u)
    assert y[0] < affine_model.y0 < y[2]
    assert np.allclose(1.0 - tail_given_sigma(affine_model, sigma, y), u, rtol=0, atol=1e-12)


# Second-order rate
def test_second_order_rate_vanishes_on_exact_pareto(pareto_model):
    assert all(second_order_rate(pareto_model, t) == 0.0 for t in (2.0, 1e3, 1e9))


def test_second_order_rate_power_law(hall_model):
    assert second_order_rate(hall_model, 100.0) / second_order_rate(hall_model, 1e4) == pytest.approx(10.0, rel=1e-12)


def test_second_order_rate_nonincreasing(hall_model):
    rates = [second_order_rate(hall_model, t) for t in np.geomspace(1.01, 1e12, 60)]
    assert all(b <= a for a, b in zip(rates, rates[1:]))
    assert rates[-1] < 1e-5


def test_second_order_rate_requires_t_above_one(hall_model):
    with pytest.raises(ValueError):
        second_order_rate(hall_model, 1.0)


def test_regular_variation_bound_on_grid(hall_model):
    """sup_z |F̄(zy)/(z^-α F̄(y)) - 1| over z in [0.5, 100] at y = U(t) stays below A(t)."""
    z = np.linspace(0.5, 100.0, 2000)
    fits = []
    for t in (1e2, 1e3, 1e4, 1e5):
        y = unconditional_tail_quantile(hall_model, t)
        ratio = np.array([unconditional_tail(hall_model, zi * y) for zi in z]) / (
            z ** -hall_model.alpha * unconditional_tail(hall_model, y)
        )
        fits.append(np.max(np.abs(ratio - 1.0)) / second_order_rate(hall_model, t))
    assert max(fits) <= 1.0 + 1e-9
    assert max(fits) / min(fits) < 2.0


def test_skedasis_perturbation_rate(discrete_hall_model):
    """sup_x |F̄_x(y)/(σ(x) F̄(y)) - 1| at y = U(t) is bounded by A(t)."""
    model = discrete_hall_model
    for t in (1e2, 1e4):
        y = unconditional_tail_quantile(model, t)
        deviation = max(
            abs(conditional_tail(model, p, y) / (skedasis_value(model.skedasis, [p])[0] * unconditional_tail(model, y)) - 1.0)
            for p in model.covariates.points
        )
        assert 0 < deviation <= second_order_rate(model, t)


# Integrated skedasis
def test_true_integrated_skedasis_affine(affine_model):
    assert true_integrated_skedasis(affine_model, 0.5) == pytest.approx(0.25, abs=1e-15)
    assert true_integrated_skedasis(affine_model, 1.0) == pytest.approx(1.0, abs=1e-15)
    assert true_integrated_skedasis(affine_model, -0.1) == 0.0


def test_true_integrated_skedasis_discrete(discrete_hall_model):
    sigma = skedasis_value(discrete_hall_model.skedasis, [[0.125], [0.375]])
    assert true_integrated_skedasis(discrete_hall_model, 0.4) == pytest.approx(0.25 * sigma.sum(), abs=1e-12)


def test_covariate_density():
    assert covariate_density(CovariateSpec(), 0.3) == 1.0
    assert covariate_density(CovariateSpec(dim=2), (0.3, 1.2)) == 0.0


# Sampling
def test_sample_dataset_is_deterministic(hall_model):
    a = sample_dataset(hall_model, 500, seed=11)
    b = sample_dataset(hall_model, 500, seed=11)
    assert np.array_equal(a.x, b.x) and np.array_equal(a.y, b.y)
    assert not np.array_equal(a.y, sample_dataset(hall_model, 500, seed=12).y)


def test_sample_exceedance_fraction(pareto_model):
    """F̄(10) = 10^-2 for γ = 0.5."""
    sample = sample_dataset(pareto_model, 100_000, seed=1)
    fraction = np.mean(sample.y > 10.0)
    assert abs(fraction - 0.01) < 4 * math.sqrt(0.01 * 0.99 / 100_000)
    assert np.all(np.isfinite(sample.y))


def perturbed_hall_model():
    """Hall tail, δ = 0.9 and σ(x) = (1 + x)/1.5 on uniform [0, 1]."""
    return build_model(family=SkedasisFamily.AFFINE, params=(1.0, 1.0), tail='hall',
                       beta=1.0, c=0.5, delta=0.9, y0=4.0)


def covariate_cells(model):
    """(mask function, expected F̄ given the cell) pairs: atoms, or quarter bins of [0, 1]."""
    cov = model.covariates
    if cov.kind == CovariateKind.DISCRETE:
        return [
            (lambda x, a=atom[0]: np.isclose(x, a), lambda y, a=atom: conditional_tail(model, a, y))
            for atom in cov.points
        ]
    edges = np.linspace(0.0, 1.0, 5)
    return [
        (
            lambda x, lo=lo, hi=hi: (x >= lo) & (x < hi),
            lambda y, lo=lo, hi=hi: integrate.quad(lambda u: conditional_tail(model, u, y), lo, hi)[0] / (hi - lo),
        )
        for lo, hi in zip(edges[:-1], edges[1:])
    ]


@pytest.mark.parametrize('name', ['affine_model', 'perturbed_hall', 'discrete_hall_model'])
def test_conditional_exceedance_fractions_match_oracle(name, request):
    """Per cell and level, the empirical exceedance fraction is within 4 binomial SDs of F̄_x(y)."""
    model = perturbed_hall_model() if name == 'perturbed_hall' else request.getfixturevalue(name)
    sample = sample_dataset(model, 1_000_000, seed=2)
    x = sample.x[:, 0]
    for in_cell, tail in covariate_cells(model):
        mask = in_cell(x)
        m = int(mask.sum())
        assert m > 200_000
        for y in (5.0, 20.0, 100.0):
            expected = tail(y)
            fraction = np.mean(sample.y[mask] > y)
            assert abs(fraction - expected) <= 4 * math.sqrt(expected * (1 - expected) / m), (name, y)


def test_constant_skedasis_makes_y_independent_of_x(pareto_model):
    sample = sample_dataset(pareto_model, 100_000, seed=2)
    y_bins = np.searchsorted(np.quantile(sample.y, [0.25, 0.5, 0.75]), sample.y)
    x_bins = np.minimum((sample.x[:, 0] * 4).astype(int), 3)
    table = np.zeros((4, 4))
    np.add.at(table, (y_bins, x_bins), 1)
    assert stats.chi2_contingency(table)[1] > 0.01


def test_affine_skedasis_tail_share(affine_model):
    """P(Y > y | X <= 0.5) / P(Y > y) → C(0.5)/0.5 = 0.5."""
    sample = sample_dataset(affine_model, 1_000_000, seed=3)
    left = sample.x[:, 0] <= 0.5
    high = sample.y > 10.0
    ratio = np.mean(high[left]) / np.mean(high)
    assert ratio == pytest.approx(0.5, abs=0.05)


def test_sample_n_must_be_positive(pareto_model):
    with pytest.raises(ValueError):
        sample_dataset(pareto_model, 0, seed=1)


# Discretisation
def test_discretize_covariates_keeps_a_density(make_model):
    model = make_model(family=SkedasisFamily.AFFINE, params=(1.0, 1.0), y0=2.0)
    grid = discretize_covariates(model, bins=5)
    points = np.asarray(grid.covariates.points)
    assert len(points) == 5
    assert np.allclose(points[:, 0], [0.1, 0.3, 0.5, 0.7, 0.9])
    sigma = skedasis_value(grid.skedasis, points)
    assert math.fsum(np.asarray(grid.covariates.probs) * sigma) == pytest.approx(1.0, abs=1e-12)
    assert grid.gamma == model.gamma
