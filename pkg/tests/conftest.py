"""
Shared fixtures: desk-scale geometry, objects and run-file helpers.
"""
import textwrap

import pytest

from core.services.grid_service import Grid
from optics.services.object_service import ObjectService
from tests.factories import GridFactory, SetupGeometryFactory, SpeckleSpecFactory

SLIT_WIDTH = 31e-6
SLIT_SEPARATION = 90e-6

RUN_FILE = """
[geometry]
wavelength_m = 0.532e-6
d0_m = 0.6e-3
d1_m = 0.020
d2_m = 0.025
dref_m = {dref}

[grid]
dims = 1
n = {n}
pitch_m = 1.0e-6

[source]
profile = gaussian

[object]
type = double_slit
width_m = 31e-6
separation_m = 90e-6

[ensemble]
realizations = {realizations}
master_seed = 1234
estimator = {estimator}
block_size = 25
diagnostics = true

[output]
formats = csv, bin

[retrieval]
iterations = 200
restarts = 3
polish_iterations = 20
"""


@pytest.fixture
def grid():
    return GridFactory()


@pytest.fixture
def small_grid():
    return Grid(1, 512, 1.0e-6)


@pytest.fixture
def geometry():
    return SetupGeometryFactory()


@pytest.fixture
def speckle_spec():
    return SpeckleSpecFactory()


@pytest.fixture
def double_slit(grid):
    return ObjectService.double_slit(SLIT_WIDTH, SLIT_SEPARATION, grid)


@pytest.fixture
def write_run_file(tmp_path):
    """Write a desk-scale run file; keyword arguments fill the template"""
    def write(name='run.ini', dref=0.045, n=2048, realizations=200, estimator='shift_averaged', extra=''):
        text = RUN_FILE.format(dref=dref, n=n, realizations=realizations, estimator=estimator)
        path = tmp_path / name
        path.write_text(textwrap.dedent(text) + textwrap.dedent(extra))
        return path

    return write


@pytest.fixture
def lab_settings(settings, tmp_path):
    """Point output and worker settings at the test sandbox"""
    settings.GHOST_LAB = {
        **settings.GHOST_LAB,
        'OUTPUT_ROOT': tmp_path / 'runs',
        'WORKERS': 1,
    }
    return settings
