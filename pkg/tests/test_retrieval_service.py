"""
Tests for phase retrieval, the conjugate grid and reconstruction scoring.
"""
from dataclasses import replace

import numpy as np
import pytest

from core.exceptions import ConfigurationError, DegenerateInputError
from core.services.grid_service import Grid, GridService, Pattern
from ghost.services.retrieval_service import RetrievalProblem, RetrievalService
from optics.services.object_service import ObjectService, Transmission
from optics.services.oracle_service import OracleService
from tests.conftest import SLIT_SEPARATION, SLIT_WIDTH

WAVELENGTH = 0.532e-6
D2 = 0.025


@pytest.fixture
def slits():
    return ObjectService.double_slit(SLIT_WIDTH, SLIT_SEPARATION, Grid(1, 256, 1e-6))


@pytest.fixture
def problem(slits):
    truth = slits.t.real
    return RetrievalProblem(
        modulus=np.abs(RetrievalService.forward(truth)),
        support=RetrievalService.support_from_object(slits, dilation=1.0),
        max_iterations=200,
    )


class TestTransforms:
    def test_forward_is_unitary(self):
        values = np.random.default_rng(0).standard_normal(64) + 0j
        spectrum = RetrievalService.forward(values)
        assert np.linalg.norm(spectrum) == pytest.approx(np.linalg.norm(values))
        np.testing.assert_allclose(RetrievalService.inverse(spectrum), values, atol=1e-12)

    def test_zero_frequency_at_center(self):
        spectrum = RetrievalService.forward(np.ones(16))
        assert int(np.argmax(np.abs(spectrum))) == 8


class TestProblemSetup:
    def test_conjugate_grid_frequency_spacing(self):
        detector = Grid(1, 2048, 1e-6)
        conjugate = RetrievalService.conjugate_grid(detector, WAVELENGTH, D2)
        nu = GridService.frequency_axis(detector, WAVELENGTH, D2)
        assert 1 / (conjugate.n * conjugate.pitch) == pytest.approx(nu[1] - nu[0])

    def test_modulus_from_oracle_pattern(self, grid, double_slit):
        pattern = OracleService.fraunhofer_modulus(double_slit, WAVELENGTH, D2)
        modulus, conjugate = RetrievalService.modulus_from_pattern(pattern, WAVELENGTH, D2)
        expected = RetrievalService.conjugate_grid(grid, WAVELENGTH, D2)
        assert conjugate.n == grid.n
        assert conjugate.pitch == pytest.approx(expected.pitch)
        assert modulus[grid.center_index] == pytest.approx(1.0)
        assert np.all(modulus >= 0)

    def test_displacement_axis_pattern_is_converted(self, grid, double_slit):
        pattern = OracleService.fraunhofer_modulus(double_slit, WAVELENGTH, D2)
        displaced = Pattern(axis=pattern.axis * WAVELENGTH * D2, values=pattern.values,
                            axis_kind='displacement')
        from_frequency, _ = RetrievalService.modulus_from_pattern(pattern, WAVELENGTH, D2)
        from_displacement, _ = RetrievalService.modulus_from_pattern(displaced, WAVELENGTH, D2)
        np.testing.assert_allclose(from_displacement, from_frequency, atol=1e-9)

    def test_support_from_object(self, slits):
        support = RetrievalService.support_from_object(slits, dilation=2.0)
        assert 241 <= np.count_nonzero(support) <= 243
        assert support[slits.grid.center_index]
        tight = RetrievalService.support_from_object(slits, dilation=1.0)
        assert np.all(tight[np.abs(slits.t) > 0])

    def test_support_needs_open_object(self, slits):
        with pytest.raises(DegenerateInputError):
            RetrievalService.support_from_object(Transmission(slits.grid, np.zeros(256)))
        with pytest.raises(ConfigurationError):
            RetrievalService.support_from_object(slits, dilation=0.5)

    @pytest.mark.parametrize('overrides, message', [
        ({'support': np.zeros(256, dtype=bool)}, 'empty'),
        ({'support': np.ones(256, dtype=bool)}, 'whole grid'),
        ({'beta': 1.5}, 'beta'),
        ({'mode': 'intensity'}, 'mode'),
        ({'modulus': -np.ones(256)}, 'non-negative'),
        ({'support': np.ones(128, dtype=bool)}, 'differ in shape'),
    ])
    def test_problem_validation(self, problem, overrides, message):
        arguments = {'modulus': problem.modulus, 'support': problem.support, **overrides}
        with pytest.raises(ConfigurationError, match=message):
            RetrievalProblem(**arguments)


class TestErrorReduction:
    def test_truth_is_a_fixed_point(self, slits, problem):
        truth = slits.t.real
        start = RetrievalProblem(modulus=problem.modulus, support=problem.support, initial=truth + 0j)
        report = RetrievalService.error_reduction(start)
        assert report.iterations_run == 0
        assert report.fourier_error <= 1e-10
        np.testing.assert_allclose(report.estimate, truth, atol=1e-12)

    def test_error_never_increases(self, problem):
        history = RetrievalService.error_reduction(problem).fourier_error_history
        assert len(history) > 1
        assert np.all(np.diff(history) <= 1e-12)

    def test_zero_modulus(self, problem):
        zero = RetrievalProblem(modulus=np.zeros(256), support=problem.support)
        with pytest.raises(DegenerateInputError):
            RetrievalService.retrieve(zero, 'er')


class TestHio:
    def test_truth_is_a_fixed_point(self, slits, problem):
        truth = slits.t.real
        start = RetrievalProblem(modulus=problem.modulus, support=problem.support, initial=truth + 0j)
        report = RetrievalService.hio(start)
        assert report.best_iteration == 0
        assert RetrievalService.reconstruction_error(report.estimate, truth) == pytest.approx(0.0, abs=1e-6)

    def test_reduces_fourier_error(self, problem):
        report = RetrievalService.retrieve(problem, 'hio', polish_iterations=20)
        assert report.algorithm == 'hio'
        assert report.fourier_error < 0.5 * report.fourier_error_history[0]
        assert report.iterations_run <= 220

    def test_zero_feedback_is_allowed(self, problem):
        report = RetrievalService.hio(RetrievalProblem(
            modulus=problem.modulus, support=problem.support, beta=0.0, max_iterations=5,
        ))
        assert len(report.fourier_error_history) == 6

    def test_unknown_algorithm(self, problem):
        with pytest.raises(ConfigurationError):
            RetrievalService.retrieve(problem, 'gradient')


class TestRestarts:
    def test_seeds_follow_restart_order(self, problem):
        reports = RetrievalService.run_restarts(problem, 'er', restarts=3, workers=1)
        assert [report.init_seed for report in reports] == [0, 1, 2]

    def test_pool_matches_inline(self, problem):
        inline = RetrievalService.run_restarts(problem, 'hio', restarts=2, polish_iterations=5, workers=1)
        pooled = RetrievalService.run_restarts(problem, 'hio', restarts=2, polish_iterations=5, workers=2)
        for left, right in zip(inline, pooled):
            np.testing.assert_array_equal(left.estimate, right.estimate)
            assert left.fourier_error_history == right.fourier_error_history


class TestRecoveryFromExactModulus:
    def test_hio_with_doubled_support(self):
        slits = ObjectService.double_slit(SLIT_WIDTH, SLIT_SEPARATION, Grid(1, 1024, 1e-6))
        truth = slits.t.real
        problem = RetrievalProblem(
            modulus=np.abs(RetrievalService.forward(truth)),
            support=RetrievalService.support_from_object(slits, dilation=2.0),
            max_iterations=500,
            beta=0.9,
        )
        reports = RetrievalService.run_restarts(problem, 'hio', restarts=11, polish_iterations=50, workers=1)
        errors = [RetrievalService.reconstruction_error(report.estimate, truth) for report in reports]
        assert np.median(errors) <= 0.15

    def test_error_reduction_after_500_iterations(self, slits, problem):
        truth = slits.t.real
        reports = RetrievalService.run_restarts(replace(problem, max_iterations=500), 'er', restarts=5, workers=1)
        correlations = [RetrievalService.registered_correlation(report.estimate, truth) for report in reports]
        assert max(correlations) >= 0.9


class TestScoring:
    @pytest.fixture
    def truth(self):
        rng = np.random.default_rng(11)
        values = np.zeros(64, dtype=complex)
        values[20:30] = rng.uniform(0.5, 1.0, 10) * np.exp(1j * rng.uniform(0, 1, 10))
        return values

    def test_exact_match(self, truth):
        assert RetrievalService.reconstruction_error(truth, truth) == pytest.approx(0.0, abs=1e-6)

    def test_trivial_ambiguities_are_forgiven(self, truth):
        twin = 2j * np.conj(np.flip(np.roll(truth, 7)))
        assert RetrievalService.reconstruction_error(twin, truth) == pytest.approx(0.0, abs=1e-6)
        assert RetrievalService.registered_correlation(twin, truth) == pytest.approx(1.0)

    def test_zero_estimate(self, truth):
        assert RetrievalService.reconstruction_error(np.zeros(64), truth) == 1.0

    def test_zero_truth(self, truth):
        with pytest.raises(DegenerateInputError):
            RetrievalService.reconstruction_error(truth, np.zeros(64))

    def test_shape_mismatch(self, truth):
        with pytest.raises(ConfigurationError):
            RetrievalService.registered_correlation(truth, np.ones(32))
