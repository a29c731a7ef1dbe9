"""
Tests for the angular spectrum, Fresnel, thin-lens and quadrature kernels.
"""
import logging

import numpy as np
import pytest
from hypothesis import given, settings as hypothesis_settings, strategies as st

from core.exceptions import ConfigurationError, InvalidGeometryError, SizeGuardError
from core.services.grid_service import ComplexField, Grid, GridService
from optics.services.propagation_service import PropagationPlan, PropagationService, _transfer_function

WAVELENGTH = 0.532e-6


def gaussian(grid, width, center=0.0):
    """exp(-(x - center)**2 / width**2) sampled on grid"""
    x = grid.coordinates()
    return ComplexField(grid, np.exp(-((x - center) / width) ** 2) + 0j)


def relative_difference(a, b):
    return float(np.max(np.abs(a - b)) / np.max(np.abs(b)))


class TestAngularSpectrum:
    @pytest.fixture
    def beam(self):
        return gaussian(Grid(1, 1024, 1e-6), 20e-6)

    def test_zero_distance_is_identity(self, beam):
        np.testing.assert_array_equal(
            PropagationService.angular_spectrum(beam, 0.0, WAVELENGTH).samples, beam.samples,
        )

    def test_back_propagation_inverts(self, beam):
        forward = PropagationService.angular_spectrum(beam, 5e-3, WAVELENGTH)
        back = PropagationService.angular_spectrum(forward, -5e-3, WAVELENGTH)
        assert relative_difference(back.samples, beam.samples) < 1e-9

    def test_energy_is_conserved(self, beam):
        propagated = PropagationService.angular_spectrum(beam, 2e-3, WAVELENGTH)
        assert GridService.energy(propagated) == pytest.approx(GridService.energy(beam), rel=1e-9)

    def test_semigroup(self, beam):
        twice = PropagationService.angular_spectrum(
            PropagationService.angular_spectrum(beam, 1e-3, WAVELENGTH), 2e-3, WAVELENGTH,
        )
        once = PropagationService.angular_spectrum(beam, 3e-3, WAVELENGTH)
        assert relative_difference(twice.samples, once.samples) < 1e-9

    def test_shift_covariance(self):
        grid = Grid(1, 1024, 1e-6)
        centered = PropagationService.angular_spectrum(gaussian(grid, 20e-6), 2e-3, WAVELENGTH)
        shifted = PropagationService.angular_spectrum(gaussian(grid, 20e-6, center=50e-6), 2e-3, WAVELENGTH)
        assert relative_difference(shifted.samples, np.roll(centered.samples, 50)) < 1e-9

    @hypothesis_settings(max_examples=20, deadline=None)
    @given(a=st.complex_numbers(max_magnitude=10, allow_nan=False, allow_infinity=False),
           b=st.complex_numbers(max_magnitude=10, allow_nan=False, allow_infinity=False))
    def test_linearity(self, a, b):
        grid = Grid(1, 256, 1e-6)
        f = gaussian(grid, 10e-6).samples
        g = gaussian(grid, 5e-6, center=-20e-6).samples
        combined = PropagationService.angular_spectrum(ComplexField(grid, a * f + b * g), 1e-3, WAVELENGTH)
        separate = (
            a * PropagationService.angular_spectrum(ComplexField(grid, f), 1e-3, WAVELENGTH).samples
            + b * PropagationService.angular_spectrum(ComplexField(grid, g), 1e-3, WAVELENGTH).samples
        )
        np.testing.assert_allclose(combined.samples, separate, atol=1e-9)

    def test_two_dimensional_energy(self):
        grid = Grid(2, 128, 2e-6)
        radius = grid.radius()
        field = ComplexField(grid, np.exp(-(radius / 20e-6) ** 2) + 0j)
        propagated = PropagationService.angular_spectrum(field, 1e-3, WAVELENGTH)
        assert GridService.energy(propagated) == pytest.approx(GridService.energy(field), rel=1e-9)

    def test_band_limit_warning(self, caplog):
        _transfer_function.cache_clear()
        beam = gaussian(Grid(1, 1024, 1e-6), 20e-6)
        with caplog.at_level(logging.WARNING):
            PropagationService.angular_spectrum(beam, 0.2, WAVELENGTH)
        assert 'band limit' in caplog.text

    def test_invalid_arguments(self, beam):
        with pytest.raises(InvalidGeometryError):
            PropagationService.angular_spectrum(beam, 1e-3, 0.0)
        with pytest.raises(ConfigurationError):
            PropagationService.angular_spectrum(beam, 1e-3, WAVELENGTH, pad_factor=0)


class TestFresnelSingleStep:
    def test_matches_direct_quadrature(self):
        grid = Grid(1, 512, 1e-6)
        field = gaussian(grid, 30e-6)
        z = 2e-3
        result = PropagationService.fresnel_single_step(field, z, WAVELENGTH)
        assert result.grid.pitch == pytest.approx(WAVELENGTH * z / (512 * 1e-6))
        reference = PropagationService.direct_integral_oracle(field, z, WAVELENGTH, result.grid)
        assert relative_difference(result.samples, reference.samples) < 1e-9

    def test_agrees_with_angular_spectrum_in_fresnel_regime(self):
        grid = Grid(1, 1024, 1e-6)
        x = grid.coordinates()
        field = ComplexField(grid, np.exp(-((x - 40e-6) / 10e-6) ** 2) + np.exp(-((x + 40e-6) / 10e-6) ** 2) + 0j)
        # output pitch lambda*z/(n*dx) equals the input pitch at this distance
        z = grid.n * grid.pitch ** 2 / WAVELENGTH
        single_step = PropagationService.fresnel_single_step(field, z, WAVELENGTH)
        assert single_step.grid.pitch == pytest.approx(grid.pitch)
        exact = PropagationService.angular_spectrum(field, z, WAVELENGTH)
        rms = np.sqrt(np.mean(np.abs(single_step.samples - exact.samples) ** 2))
        assert rms / np.max(np.abs(exact.samples)) < 0.01

    def test_undersampled_chirp_warns(self, caplog):
        field = gaussian(Grid(1, 512, 4e-6), 100e-6)
        with caplog.at_level(logging.WARNING):
            PropagationService.fresnel_single_step(field, 1e-3, WAVELENGTH)
        assert 'undersampled' in caplog.text

    def test_needs_positive_distance(self):
        with pytest.raises(InvalidGeometryError):
            PropagationService.fresnel_single_step(gaussian(Grid(1, 64, 1e-6), 5e-6), -1e-3, WAVELENGTH)


def direct_lens_transform(field, f, out_coords):
    """Scaled Fourier transform by explicit summation: prefactor * sum_u E(u) exp(-i*2*pi*x*u/(lambda*f)) * dx"""
    u = field.grid.coordinates()
    kernel = np.exp(-2j * np.pi * np.outer(out_coords, u) / (WAVELENGTH * f))
    return PropagationService.lens_prefactor(f, WAVELENGTH, 1) * (kernel @ field.samples) * field.grid.pitch


def relative_rms(a, b):
    return float(np.sqrt(np.mean(np.abs(a - b) ** 2) / np.mean(np.abs(b) ** 2)))


class TestFresnelTransfer:
    def test_matches_angular_spectrum_for_paraxial_beam(self):
        beam = gaussian(Grid(1, 1024, 1e-6), 30e-6)
        paraxial = PropagationService.fresnel_transfer(beam, 2e-3, WAVELENGTH)
        exact = PropagationService.angular_spectrum(beam, 2e-3, WAVELENGTH)
        assert relative_rms(paraxial.samples, exact.samples) < 1e-3

    def test_conserves_energy(self):
        beam = gaussian(Grid(1, 512, 1e-6), 20e-6, center=15e-6)
        propagated = PropagationService.fresnel_transfer(beam, 5e-3, WAVELENGTH)
        assert GridService.energy(propagated) == pytest.approx(GridService.energy(beam), rel=1e-10)


class TestLens2f:
    @pytest.fixture
    def beam(self):
        return gaussian(Grid(1, 1024, 2e-6), 100e-6)

    @pytest.fixture
    def two_beams(self):
        grid = Grid(1, 512, 2e-6)
        x = grid.coordinates()
        samples = np.exp(-((x - 60e-6) / 15e-6) ** 2) + 0.5j * np.exp(-((x + 90e-6) / 25e-6) ** 2)
        return ComplexField(grid, samples * np.exp(2j * np.pi * x / 80e-6))

    def test_natural_grid_matches_analytic_transform(self, beam):
        f = 0.1
        result = PropagationService.lens_2f(beam, f, WAVELENGTH)
        assert result.grid.pitch == pytest.approx(WAVELENGTH * f / (1024 * 2e-6))
        x = result.grid.coordinates()
        w0 = 100e-6
        expected = (
            PropagationService.lens_prefactor(f, WAVELENGTH, 1)
            * np.sqrt(np.pi) * w0 * np.exp(-(np.pi * w0 * x / (WAVELENGTH * f)) ** 2)
        )
        assert relative_difference(result.samples, expected) < 1e-6

    @pytest.mark.parametrize('pad_factor', [1, 3])
    def test_agrees_with_direct_fourier_sum(self, two_beams, pad_factor):
        f = 0.05
        result = PropagationService.lens_2f(two_beams, f, WAVELENGTH, pad_factor=pad_factor)
        assert result.grid.n == 512 * pad_factor
        expected = direct_lens_transform(two_beams, f, result.grid.coordinates())
        assert relative_rms(result.samples, expected) < 1e-6

    def test_fresnel_legs_alone_are_not_a_transform(self, two_beams):
        f = 0.05
        at_lens = PropagationService.fresnel_single_step(two_beams, f, WAVELENGTH)
        without_lens = PropagationService.fresnel_transfer(at_lens, f, WAVELENGTH)
        expected = direct_lens_transform(two_beams, f, without_lens.grid.coordinates())
        assert relative_rms(without_lens.samples, expected) > 0.1

    def test_commensurate_out_grid_is_cropped_exactly(self, two_beams):
        f = 0.05
        out_grid = Grid(1, 300, WAVELENGTH * f / (2048 * 2e-6))
        result = PropagationService.lens_2f(two_beams, f, WAVELENGTH, out_grid=out_grid)
        assert result.grid == out_grid
        expected = direct_lens_transform(two_beams, f, out_grid.coordinates())
        assert relative_rms(result.samples, expected) < 1e-6

    def test_explicit_natural_grid_matches_default(self, beam):
        natural = PropagationService.lens_2f(beam, 0.1, WAVELENGTH)
        explicit = PropagationService.lens_2f(beam, 0.1, WAVELENGTH, out_grid=natural.grid)
        assert relative_difference(explicit.samples, natural.samples) < 1e-10

    def test_incommensurate_out_grid_is_interpolated(self, beam, caplog):
        f = 0.1
        out_grid = Grid(1, 512, 1.1e-5)
        with caplog.at_level(logging.INFO):
            result = PropagationService.lens_2f(beam, f, WAVELENGTH, out_grid=out_grid)
        assert 'Interpolating' in caplog.text
        expected = direct_lens_transform(beam, f, out_grid.coordinates())
        assert relative_difference(result.samples, expected) < 5e-3

    def test_two_dimensional_is_separable(self):
        grid = Grid(2, 64, 4e-6)
        radius = grid.radius()
        field = ComplexField(grid, np.exp(-(radius / 40e-6) ** 2) + 0j)
        one_d = PropagationService.lens_2f(gaussian(Grid(1, 64, 4e-6), 40e-6), 0.05, WAVELENGTH)
        two_d = PropagationService.lens_2f(field, 0.05, WAVELENGTH)
        prefactor_ratio = (
            PropagationService.lens_prefactor(0.05, WAVELENGTH, 2)
            / PropagationService.lens_prefactor(0.05, WAVELENGTH, 1) ** 2
        )
        expected = np.outer(one_d.samples, one_d.samples) * prefactor_ratio
        assert relative_difference(two_d.samples, expected) < 1e-8

    def test_dimension_mismatch(self, beam):
        with pytest.raises(ConfigurationError):
            PropagationService.lens_2f(beam, 0.1, WAVELENGTH, out_grid=Grid(2, 16, 1e-6))

    def test_out_grid_beyond_one_period(self, beam):
        with pytest.raises(ConfigurationError, match='repeats'):
            PropagationService.lens_2f(beam, 0.1, WAVELENGTH, out_grid=Grid(1, 4096, 1e-5))

    def test_invalid_arguments(self, beam):
        with pytest.raises(InvalidGeometryError):
            PropagationService.lens_2f(beam, 0.0, WAVELENGTH)
        with pytest.raises(ConfigurationError):
            PropagationService.lens_2f(beam, 0.1, WAVELENGTH, pad_factor=0)


class TestDirectIntegralOracle:
    def test_agrees_with_angular_spectrum(self):
        grid = Grid(1, 512, 1e-6)
        x = grid.coordinates()
        sigma = 15e-6
        samples = np.exp(-(x - 30e-6) ** 2 / (2 * sigma ** 2)) + np.exp(-(x + 30e-6) ** 2 / (2 * sigma ** 2))
        field = ComplexField(grid, samples + 0j)
        asm = PropagationService.angular_spectrum(field, 2e-3, WAVELENGTH, pad_factor=4)
        oracle = PropagationService.direct_integral_oracle(field, 2e-3, WAVELENGTH, grid)
        assert relative_difference(asm.samples, oracle.samples) < 1e-4

    def test_size_guard(self, settings):
        settings.GHOST_LAB = {**settings.GHOST_LAB, 'ORACLE_MAX_SAMPLES': 1000}
        grid = Grid(1, 64, 1e-6)
        with pytest.raises(SizeGuardError, match='sample pairs'):
            PropagationService.direct_integral_oracle(gaussian(grid, 5e-6), 1e-3, WAVELENGTH, grid)


class TestPropagationPlan:
    def test_validation(self):
        with pytest.raises(ConfigurationError):
            PropagationPlan('ray_tracing', 1e-3, WAVELENGTH)
        with pytest.raises(InvalidGeometryError):
            PropagationPlan('fresnel_single_step', 0.0, WAVELENGTH)
        PropagationPlan('angular_spectrum', -1e-3, WAVELENGTH)

    def test_apply_dispatches(self):
        field = gaussian(Grid(1, 256, 1e-6), 10e-6)
        plan = PropagationPlan('angular_spectrum', 1e-3, WAVELENGTH, pad_factor=2)
        np.testing.assert_array_equal(
            PropagationService.apply(plan, field).samples,
            PropagationService.angular_spectrum(field, 1e-3, WAVELENGTH, 2).samples,
        )
        oracle = PropagationService.apply(PropagationPlan('direct_integral', 1e-3, WAVELENGTH), field)
        assert oracle.grid == field.grid
