"""
Factories for the simulator's domain dataclasses.

Defaults describe a reduced desk geometry with the same physics as the shipped
configs: a 2048-sample, 1 um grid, d1 = 20 mm, d2 = 25 mm and a 0.6 mm
gaussian spot, so ensembles finish in a second or two.
"""
import factory

from core.services.grid_service import Grid, SetupGeometry
from ghost.services.experiment_service import EnsembleConfig
from optics.services.source_service import RealizationSeed, SpeckleSpec


class GridFactory(factory.Factory):
    class Meta:
        model = Grid

    dims = 1
    n = 2048
    pitch = 1.0e-6


class SetupGeometryFactory(factory.Factory):
    class Meta:
        model = SetupGeometry

    wavelength = 0.532e-6
    d0 = 0.6e-3
    d1 = 0.020
    d2 = 0.025
    d_ref = factory.LazyAttribute(lambda geometry: geometry.d1 + geometry.d2)


class SpeckleSpecFactory(factory.Factory):
    class Meta:
        model = SpeckleSpec

    spot_diameter = 0.6e-3
    amplitude_profile = 'gaussian'


class RealizationSeedFactory(factory.Factory):
    class Meta:
        model = RealizationSeed

    master_seed = 1234
    realization_index = factory.Sequence(lambda index: index)


class EnsembleConfigFactory(factory.Factory):
    class Meta:
        model = EnsembleConfig

    n_realizations = 20
    master_seed = 1234
    estimator = 'shift_averaged'
    block_size = 8
    workers = 1
