# Services package
from .grid_service import ComplexField, Grid, GridService, Pattern, SetupGeometry
from .array_io_service import ArrayIOService
from .config_service import RunConfig, RunConfigService

__all__ = [
    'ComplexField',
    'Grid',
    'GridService',
    'Pattern',
    'SetupGeometry',
    'ArrayIOService',
    'RunConfig',
    'RunConfigService',
]
