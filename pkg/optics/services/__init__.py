# Services package
from .source_service import RealizationSeed, SourceService, SpeckleSpec
from .object_service import ObjectService, Transmission
from .propagation_service import PropagationPlan, PropagationService
from .oracle_service import ComparisonMetrics, OraclePattern, OracleService

__all__ = [
    'RealizationSeed',
    'SourceService',
    'SpeckleSpec',
    'ObjectService',
    'Transmission',
    'PropagationPlan',
    'PropagationService',
    'ComparisonMetrics',
    'OraclePattern',
    'OracleService',
]
