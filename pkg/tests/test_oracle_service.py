"""
Tests for the Fraunhofer oracle, the analytic double slit and pattern comparison.
"""
import numpy as np
import pytest

from core.exceptions import ConfigurationError, SizeGuardError
from core.services.grid_service import Grid, Pattern
from optics.services.object_service import ObjectService
from optics.services.oracle_service import OraclePattern, OracleService
from tests.conftest import SLIT_SEPARATION, SLIT_WIDTH

WAVELENGTH = 0.532e-6
D2 = 0.025


class TestAnalyticDoubleSlit:
    def test_unit_at_zero_frequency(self):
        assert OracleService.analytic_double_slit(105e-6, 302e-6, 0.0) == pytest.approx(1.0)

    def test_first_fringe_zero(self):
        nu = 1 / (2 * 302e-6)
        assert OracleService.analytic_double_slit(105e-6, 302e-6, nu) == pytest.approx(0.0, abs=1e-12)

    def test_envelope_zero(self):
        assert OracleService.analytic_double_slit(105e-6, 302e-6, 1 / 105e-6) == pytest.approx(0.0, abs=1e-12)

    def test_rejects_non_positive_sizes(self):
        with pytest.raises(ConfigurationError):
            OracleService.analytic_double_slit(0.0, 302e-6, 0.0)

    def test_pattern_provenance(self):
        nu = np.linspace(-1e4, 1e4, 101)
        pattern = OracleService.analytic_double_slit_pattern(105e-6, 302e-6, nu)
        assert pattern.provenance == 'analytic'
        assert pattern.axis_kind == 'frequency'
        with pytest.raises(ConfigurationError):
            OraclePattern(axis=nu, values=pattern.values, provenance='guess')


class TestFraunhoferModulus:
    def test_quadrature_matches_analytic(self, double_slit):
        quadrature = OracleService.fraunhofer_modulus(double_slit, WAVELENGTH, D2)
        analytic = OracleService.analytic_double_slit(SLIT_WIDTH, SLIT_SEPARATION, quadrature.axis)
        assert quadrature.provenance == 'quadrature'
        assert np.max(np.abs(quadrature.values - analytic)) < 1e-3

    def test_even_for_real_symmetric_object(self, double_slit):
        values = OracleService.fraunhofer_modulus(double_slit, WAVELENGTH, D2).values
        np.testing.assert_allclose(values[1:], values[1:][::-1], rtol=1e-9, atol=1e-12)

    def test_explicit_output_axis(self, double_slit):
        displacement = np.linspace(-500e-6, 500e-6, 201)
        pattern = OracleService.fraunhofer_modulus(double_slit, WAVELENGTH, D2, out_axis=displacement)
        np.testing.assert_allclose(pattern.axis, displacement / (WAVELENGTH * D2))
        assert pattern.values[100] == pytest.approx(1.0)

    def test_parseval(self):
        grid = Grid(1, 256, 1e-6)
        obj = ObjectService.double_slit(SLIT_WIDTH, SLIT_SEPARATION, grid)
        nu = (np.arange(grid.n) - grid.n // 2) / (grid.n * grid.pitch)
        spectrum = OracleService.transmission_spectrum(obj, nu)
        spectral_energy = np.sum(np.abs(spectrum) ** 2) / (grid.n * grid.pitch)
        assert spectral_energy == pytest.approx(np.sum(np.abs(obj.t) ** 2) * grid.pitch, rel=1e-10)

    def test_grooves_decompose_linearly(self, grid):
        nu = np.linspace(-2e4, 2e4, 301)
        plate = ObjectService.identity(grid, aperture=1e-3)
        slits = ObjectService.double_slit(SLIT_WIDTH, SLIT_SEPARATION, grid)
        phase = ObjectService.phase_grooves(SLIT_WIDTH, SLIT_SEPARATION, 0.5783e-6, 1.46, WAVELENGTH, grid,
                                            aperture=1e-3)
        opaque = ObjectService.opaque_grooves(SLIT_WIDTH, SLIT_SEPARATION, grid, aperture=1e-3)
        t_plate = OracleService.transmission_spectrum(plate, nu)
        t_slits = OracleService.transmission_spectrum(slits, nu)
        step = np.exp(1j * phase.metadata['phase_rad']) - 1
        np.testing.assert_allclose(
            OracleService.transmission_spectrum(phase, nu), t_plate + step * t_slits, atol=1e-12,
        )
        np.testing.assert_allclose(
            OracleService.transmission_spectrum(opaque, nu), t_plate - t_slits, atol=1e-12,
        )

    def test_crossed_slits_symmetric_under_transpose(self):
        grid = Grid(2, 128, 4e-6)
        obj = ObjectService.crossed_double_slit(40e-6, 120e-6, 120e-6, grid, slit_length=400e-6)
        values = OracleService.fraunhofer_modulus(obj, WAVELENGTH, D2).values
        assert values.shape == (128, 128)
        np.testing.assert_allclose(values, values.T, atol=1e-12)

    def test_size_guard(self, settings, double_slit):
        settings.GHOST_LAB = {**settings.GHOST_LAB, 'FRAUNHOFER_MAX_PAIRS': 1000}
        with pytest.raises(SizeGuardError):
            OracleService.fraunhofer_modulus(double_slit, WAVELENGTH, D2)

    def test_non_finite_axis(self, double_slit):
        with pytest.raises(ConfigurationError):
            OracleService.transmission_spectrum(double_slit, np.array([0.0, np.nan]))


class TestDominantPeriod:
    def test_cosine_squared(self):
        x = np.arange(1024) * 1.0
        values = np.cos(np.pi * x / 50.0) ** 2
        assert OracleService.dominant_period(values, 1.0) == pytest.approx(50.0, rel=0.01)

    def test_flat_profile(self):
        assert np.isnan(OracleService.dominant_period(np.ones(64), 1.0))


class TestCompare:
    @pytest.fixture
    def reference(self):
        nu = np.linspace(-1e5, 1e5, 2001)
        return OracleService.analytic_double_slit_pattern(SLIT_WIDTH, SLIT_SEPARATION, nu)

    def test_identical_patterns(self, reference):
        metrics = OracleService.compare(reference, reference)
        assert metrics.rms_error == 0.0
        assert set(metrics.peak_offsets_samples) == {0}
        assert metrics.samples_compared == 2001
        assert metrics.fringe_periods[0] == pytest.approx(1 / SLIT_SEPARATION, rel=0.02)

    def test_shift_by_one_sample(self, reference):
        shifted = Pattern(axis=reference.axis, values=np.roll(reference.values, 1), axis_kind='frequency')
        metrics = OracleService.compare(shifted, reference, k_peaks=3)
        assert metrics.peak_offsets_samples == [1, 1, 1]
        assert metrics.peak_offsets[0] == pytest.approx(reference.spacing)
        assert metrics.rms_error > 0

    def test_disjoint_axes(self, reference):
        far = Pattern(axis=reference.axis + 1e6, values=reference.values, axis_kind='frequency')
        with pytest.raises(ConfigurationError, match='do not overlap'):
            OracleService.compare(far, reference)

    def test_axis_kinds_must_match(self, reference):
        other = Pattern(axis=reference.axis, values=reference.values, axis_kind='displacement')
        with pytest.raises(ConfigurationError):
            OracleService.compare(other, reference)

    def test_metrics_serialize(self, reference):
        data = OracleService.compare(reference, reference).as_dict()
        assert data['rms_error'] == 0.0
        assert data['axis_kind'] == 'frequency'
        assert len(data['overlap']) == 2
