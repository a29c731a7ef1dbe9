# Services package
from .correlation_service import CorrelationAccumulator, CorrelationService, GhostResult
from .experiment_service import (
    ArmIntensities,
    EnsembleConfig,
    ExperimentService,
    MeanArmIntensities,
    SpeckleReport,
)
from .retrieval_service import RetrievalProblem, RetrievalReport, RetrievalService

__all__ = [
    'CorrelationAccumulator',
    'CorrelationService',
    'GhostResult',
    'ArmIntensities',
    'EnsembleConfig',
    'ExperimentService',
    'MeanArmIntensities',
    'SpeckleReport',
    'RetrievalProblem',
    'RetrievalReport',
    'RetrievalService',
]
