"""
Tests for the normality diagnostics and the Monte Carlo replication engine.
Run with: pytest test_montecarlo.py
Acceptance runs are marked slow: pytest -m slow test_montecarlo.py
"""
import math
import numpy as np
import pytest
from scipy import integrate, stats
from proptail.core.model import true_integrated_skedasis, unconditional_tail_quantile
from proptail.core.montecarlo import (
    CRITERIA, check_preconditions, check_tail_regime, consistency_curve, default_schedule, ks_pvalue,
    ks_statistic, normal_cdf, normality_diagnostics, replicate, run_experiment,
)
from proptail.core import montecarlo
from proptail.events.bus import EventBus
from proptail.models import ExperimentKind, McConfig, ThresholdSpec
from proptail.utils.errors import PreconditionError


def mc_config(model, n=2000, p=0.05, replications=100, **fields) -> McConfig:
    """Config with a fixed threshold at U(1/p) of the model."""
    threshold = ThresholdSpec.fixed(unconditional_tail_quantile(model, 1.0 / p))
    return McConfig(model=model, n=n, threshold=threshold, replications=replications, **fields)


# normal_cdf
def test_normal_cdf_at_zero():
    assert normal_cdf(0.0) == 0.5


def test_normal_cdf_matches_density_integral():
    density = lambda t: math.exp(-t * t / 2) / math.sqrt(2 * math.pi)
    assert normal_cdf(1.959964) == pytest.approx(0.975, abs=1e-6)
    for z in (-3.0, -0.7, 0.4, 2.5):
        expected = 0.5 + integrate.quad(density, 0.0, z)[0]
        assert normal_cdf(z) == pytest.approx(expected, abs=1e-7)


def test_normal_cdf_symmetry():
    z = np.linspace(-8, 8, 161)
    assert np.allclose(normal_cdf(-z) + normal_cdf(z), 1.0, rtol=0, atol=1e-15)
    assert np.all(np.diff(normal_cdf(z)) >= 0)


# ks_statistic
def test_ks_two_points_vs_uniform():
    uniform = lambda v: np.clip(v, 0.0, 1.0)
    assert ks_statistic([0.25, 0.75], uniform) == pytest.approx(0.25, abs=1e-15)


def test_ks_midpoint_construction():
    n = 40
    values = stats.norm.ppf((np.arange(1, n + 1) - 0.5) / n)
    assert ks_statistic(values, normal_cdf) == pytest.approx(0.5 / n, abs=1e-9)


def test_ks_single_value_at_median():
    assert ks_statistic([0.0], normal_cdf) == 0.5


def test_ks_rejects_empty_and_unsorted():
    with pytest.raises(ValueError):
        ks_statistic([], normal_cdf)
    with pytest.raises(ValueError):
        ks_statistic([1.0, 0.0], normal_cdf)


def test_ks_pvalue_bounds():
    assert ks_pvalue(0.0, 100) == 1.0
    assert ks_pvalue(0.5, 400) < 1e-12


# normality_diagnostics
def test_diagnostics_two_values():
    diag = normality_diagnostics([-1.0, 1.0])
    assert diag.mean == 0.0
    assert diag.variance == 2.0


def test_diagnostics_constant_list():
    diag = normality_diagnostics([0.3] * 10)
    assert diag.variance == 0.0
    assert diag.ks_distance >= 0.5


def test_diagnostics_need_two_values():
    with pytest.raises(ValueError):
        normality_diagnostics([1.0])


def test_ks_pvalues_uniform_under_the_null():
    rng = np.random.default_rng(2024)
    pvalues = [normality_diagnostics(rng.standard_normal(10_000)).ks_pvalue for _ in range(100)]
    assert 0.35 < np.mean(pvalues) < 0.65
    assert stats.kstest(pvalues, 'uniform').pvalue > 1e-3


# Schedules and preconditions
def test_default_schedule_values():
    assert default_schedule(10_000) == pytest.approx((0.01, 0.25, 1e-4))
    p, h, alpha = default_schedule(10 ** 6)
    assert p == pytest.approx(1e-3)
    assert h == pytest.approx(10 ** -1.2)
    assert alpha == pytest.approx(1e-6)


def test_default_schedule_caps_small_samples():
    assert default_schedule(100) == (0.5, 0.5, 0.25)


@pytest.mark.parametrize('n', [1_000, 10_000, 123_456, 10 ** 7])
@pytest.mark.parametrize('d', [1, 2])
def test_default_schedule_meets_proxies(n, d):
    p, h, alpha = default_schedule(n, d)
    assert n * p >= 100 - 1e-9
    assert n * p * (2 * h) ** d >= 50 - 1e-9
    assert alpha == p * p


def test_default_schedule_rejects_empty_sample():
    with pytest.raises(ValueError):
        default_schedule(0)


def test_precondition_replications(pareto_model):
    cfg = mc_config(pareto_model, n=100_000, p=0.01, replications=2)
    with pytest.raises(PreconditionError) as exc:
        check_preconditions(cfg, ExperimentKind.GAMMA)
    assert exc.value.proxy == 'replications'


def test_precondition_exceedance_proxy(pareto_model):
    cfg = mc_config(pareto_model, n=1000, p=0.01)
    with pytest.raises(PreconditionError) as exc:
        check_preconditions(cfg, ExperimentKind.GAMMA)
    assert exc.value.proxy == 'n*p_n'


def test_precondition_window_proxy(affine_model):
    cfg = mc_config(affine_model, n=10_000, p=0.01, bandwidth=0.1, alpha_n=1e-4)
    with pytest.raises(PreconditionError) as exc:
        check_preconditions(cfg, ExperimentKind.SKEDASIS)
    assert exc.value.proxy == 'n*p_n*V_h'
    proxies = check_preconditions(cfg, ExperimentKind.SKEDASIS, enforce=False)
    assert proxies['n_p'] == pytest.approx(100.0)
    assert proxies['n_p_vh'] == pytest.approx(20.0)


def test_precondition_missing_kernel_fields(affine_model):
    cfg = mc_config(affine_model, n=100_000, p=0.01)
    with pytest.raises(PreconditionError) as exc:
        check_preconditions(cfg, ExperimentKind.SKEDASIS)
    assert exc.value.proxy == 'bandwidth'
    with pytest.raises(PreconditionError) as exc:
        check_preconditions(cfg, ExperimentKind.WEISSMAN)
    assert exc.value.proxy == 'mc.alpha_n'


def test_precondition_alpha_below_p(affine_model):
    cfg = mc_config(affine_model, n=100_000, p=0.01, bandwidth=0.25, alpha_n=0.02, points=[(0.5,)])
    with pytest.raises(PreconditionError) as exc:
        check_preconditions(cfg, ExperimentKind.QUANTILE)
    assert exc.value.proxy == 'mc.alpha_n'
    assert 'p_n' in exc.value.detail


def test_precondition_alpha_in_body_regime(affine_model):
    # σ(0.01) = 0.02, so P(Y > y0 | X = 0.01) = 0.02 / 2.25 < α_n < p_n
    cfg = mc_config(affine_model, n=100_000, p=0.05, bandwidth=0.25, alpha_n=0.02, points=[(0.01,)])
    with pytest.raises(PreconditionError) as exc:
        check_preconditions(cfg, ExperimentKind.QUANTILE_RATIO)
    assert exc.value.proxy == 'mc.alpha_n'
    assert check_preconditions(cfg.model_copy(update={'points': [(0.5,)]}), ExperimentKind.QUANTILE)


def test_body_regime_alpha_rejected_before_replications(affine_model):
    cfg = mc_config(affine_model, replications=2, bandwidth=0.25, alpha_n=0.5, points=[(0.5,)])
    with pytest.raises(PreconditionError) as exc:
        run_experiment(cfg, ExperimentKind.QUANTILE)
    assert exc.value.proxy == 'mc.alpha_n'
    check_tail_regime(affine_model, (0.5,), 0.44)
    with pytest.raises(PreconditionError):
        check_tail_regime(affine_model, (0.5,), 0.45)


def test_kernel_kinds_reject_discrete_covariates(discrete_hall_model):
    cfg = mc_config(discrete_hall_model, replications=2, bandwidth=0.2, alpha_n=1e-4, points=[(0.375,)])
    for kind in (ExperimentKind.SKEDASIS, ExperimentKind.QUANTILE):
        with pytest.raises(PreconditionError) as exc:
            run_experiment(cfg, kind)
        assert exc.value.proxy == 'f(x)'


def test_top_k_precondition_uses_k(pareto_model):
    cfg = McConfig(model=pareto_model, n=5000, threshold=ThresholdSpec.top_k(60), replications=100)
    assert check_preconditions(cfg, ExperimentKind.GAMMA)['n_p'] == pytest.approx(60.0)


# Experiments
def test_no_exceedances_fails_every_replication(pareto_model):
    cfg = McConfig(model=pareto_model, n=5, threshold=ThresholdSpec.fixed(1e6), replications=2)
    report = run_experiment(cfg, ExperimentKind.GAMMA)
    assert report.n_failed == 2
    assert report.failure_rate == 1.0
    assert report.statistics == []
    assert math.isnan(report.variance)
    assert not report.criteria['failure_budget']
    assert not report.passed


def test_statistics_in_replication_order(pareto_model):
    cfg = mc_config(pareto_model, replications=5, seed=11)
    report = run_experiment(cfg, ExperimentKind.GAMMA)
    assert report.statistics == [replicate(cfg, ExperimentKind.GAMMA, None, r)[0] for r in range(5)]
    assert report.n_failed == 0
    assert report.preconditions['n_p'] == pytest.approx(100.0)


def test_parallel_replications_are_bit_identical(affine_model):
    serial = mc_config(affine_model, replications=8, seed=3, bandwidth=0.2, points=[(0.5,)])
    parallel = serial.model_copy(update={'workers': 2})
    a = run_experiment(serial, ExperimentKind.SKEDASIS)
    b = run_experiment(parallel, ExperimentKind.SKEDASIS)
    assert a.statistics == b.statistics
    assert a.model_dump() == b.model_dump()


def test_quantile_reduces_to_weissman_for_constant_skedasis(pareto_model):
    """σ ≡ 1 and a window covering the whole support: σ̂ = 1, so the two statistics coincide."""
    cfg = mc_config(pareto_model, replications=3, seed=5, bandwidth=0.6, alpha_n=1e-4, points=[(0.5,)])
    for r in range(3):
        quantile, _ = replicate(cfg, ExperimentKind.QUANTILE, (0.5,), r)
        weissman, _ = replicate(cfg, ExperimentKind.WEISSMAN, None, r)
        assert quantile == pytest.approx(weissman, rel=1e-12, abs=1e-12)


def test_integrated_c_needs_interior_point(affine_model):
    cfg = mc_config(affine_model, replications=2)
    with pytest.raises(PreconditionError):
        run_experiment(cfg, ExperimentKind.INTEGRATED_C, point=(1.0,))


def test_joint_reports_correlation(affine_model):
    cfg = mc_config(affine_model, replications=20, seed=9, points=[(0.5,)])
    report = run_experiment(cfg, ExperimentKind.JOINT)
    assert 'correlation' in report.extra
    assert -1.0 <= report.extra['correlation'] <= 1.0
    assert 'correlation' in report.criteria


def test_experiment_events(pareto_model, monkeypatch):
    bus = EventBus()
    monkeypatch.setattr(montecarlo, 'event_bus', bus)
    completed, failed = [], []
    bus.register('experiment.completed', completed.append)
    bus.register('replication.failed', failed.append)
    cfg = McConfig(model=pareto_model, n=5, threshold=ThresholdSpec.fixed(1e6), replications=3)
    run_experiment(cfg, ExperimentKind.GAMMA)
    assert [e['replication'] for e in failed] == [0, 1, 2]
    assert len(completed) == 1
    assert completed[0]['passed'] is False


def test_criteria_cover_every_kind():
    assert set(CRITERIA) == set(ExperimentKind)


# Acceptance runs
@pytest.mark.slow
def test_gamma_acceptance(pareto_model):
    cfg = mc_config(pareto_model, n=100_000, p=0.01, replications=400, seed=1)
    report = run_experiment(cfg, ExperimentKind.GAMMA)
    assert abs(report.mean) <= 0.1
    assert 0.85 <= report.variance <= 1.15
    assert report.ks_pvalue > 0.01
    assert report.passed


@pytest.mark.slow
def test_integrated_c_acceptance(affine_model):
    assert true_integrated_skedasis(affine_model, 0.5) == pytest.approx(0.25)
    cfg = mc_config(affine_model, n=100_000, p=0.01, replications=400, seed=2, points=[(0.5,)])
    report = run_experiment(cfg, ExperimentKind.INTEGRATED_C)
    assert 0.8 <= report.variance <= 1.2
    assert report.passed


@pytest.mark.slow
def test_skedasis_acceptance(affine_model):
    cfg = mc_config(affine_model, n=200_000, p=0.02, replications=300, seed=3, bandwidth=0.05, points=[(0.5,)])
    report = run_experiment(cfg, ExperimentKind.SKEDASIS)
    assert 0.8 <= report.variance <= 1.2
    assert report.ks_pvalue > 0.01


@pytest.mark.slow
def test_quantile_acceptance(affine_model):
    cfg = mc_config(
        affine_model, n=200_000, p=0.02, replications=300, seed=4,
        bandwidth=0.25, alpha_n=0.02 ** 2, points=[(0.5,)],
    )
    report = run_experiment(cfg, ExperimentKind.QUANTILE)
    assert 0.75 <= report.variance <= 1.25
    assert abs(report.mean) <= 0.15


@pytest.mark.slow
def test_consistency_curve_decreases(affine_model):
    cfg = mc_config(affine_model, n=10_000, replications=300, seed=5, points=[(0.5,)])
    curve = consistency_curve(cfg, [10_000, 100_000, 400_000])
    errors = [median for _, median in curve]
    assert [n for n, _ in curve] == [10_000, 100_000, 400_000]
    assert errors[0] > errors[1] > errors[2]
