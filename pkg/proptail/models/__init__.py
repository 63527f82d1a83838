"""
Domain types: enums and pydantic schemas.
"""
from proptail.models.enums import (
    Command, CovariateKind, ExperimentKind, SkedasisFamily, TailFamily, ThresholdMode,
)
from proptail.models.schemas import (
    CliConfig, CouplingDraw, CouplingReport, CouplingSample, CovariateSpec,
    DiscreteDistribution, EstimateReport, McConfig, McReport, QuantileEstimate,
    SampleSet, ScalingReport, ScalingRow, SkedasisSpec, TailModel,
    ThinningResult, ThresholdResolution, ThresholdSpec,
)

__all__ = [
    'Command', 'CovariateKind', 'ExperimentKind', 'SkedasisFamily', 'TailFamily',
    'ThresholdMode', 'CliConfig', 'CouplingDraw', 'CouplingReport', 'CouplingSample',
    'CovariateSpec', 'DiscreteDistribution', 'EstimateReport', 'McConfig', 'McReport',
    'QuantileEstimate', 'SampleSet', 'ScalingReport', 'ScalingRow', 'SkedasisSpec',
    'TailModel', 'ThinningResult', 'ThresholdResolution', 'ThresholdSpec',
]
