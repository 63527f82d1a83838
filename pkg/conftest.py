"""Shared fixtures: model builders and small hand-checkable samples."""
import pytest
from proptail.core.model import normalize_skedasis
from proptail.models import CovariateSpec, SampleSet, SkedasisFamily, SkedasisSpec, TailModel


def build_model(gamma=0.5, family=SkedasisFamily.CONSTANT, params=(1.0,), covariates=None, **fields) -> TailModel:
    covariates = covariates or CovariateSpec()
    raw = SkedasisSpec(family=family, params=list(params))
    return TailModel(gamma=gamma, skedasis=normalize_skedasis(raw, covariates), covariates=covariates, **fields)


@pytest.fixture
def make_model():
    """Factory: build_model(gamma, family, params, covariates, **TailModel fields)."""
    return build_model


@pytest.fixture
def pareto_model():
    """Exact Pareto, γ = 0.5, y0 = 1, σ ≡ 1 on uniform [0, 1]."""
    return build_model()


@pytest.fixture
def affine_model():
    """Exact Pareto, γ = 0.5, σ(x) = 2x on uniform [0, 1]; y0 = 1.5 keeps 2·y0^-2 <= 1."""
    return build_model(family=SkedasisFamily.AFFINE, params=(0.0, 1.0), y0=1.5)


@pytest.fixture
def hall_model():
    """Hall tail with β = 1, α = 2, c = 0.5 and σ ≡ 1."""
    return build_model(tail='hall', beta=1.0, c=0.5)


@pytest.fixture
def discrete_hall_model():
    """Hall tail with a skedasis-side perturbation on a 4-atom covariate grid."""
    covariates = CovariateSpec(
        kind='discrete', dim=1,
        points=[(0.125,), (0.375,), (0.625,), (0.875,)],
        probs=[0.25, 0.25, 0.25, 0.25],
    )
    return build_model(
        family=SkedasisFamily.AFFINE, params=(1.0, 1.0), covariates=covariates,
        tail='hall', beta=1.0, c=0.5, delta=0.9, y0=4.0,
    )


@pytest.fixture
def four_points():
    """Y = {1, 2, 4, 8} with covariates 0.1, 0.4, 0.6, 0.9."""
    return SampleSet(x=[0.1, 0.4, 0.6, 0.9], y=[1.0, 2.0, 4.0, 8.0])
