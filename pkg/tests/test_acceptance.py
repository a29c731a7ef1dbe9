"""
Full-size runs on the shipped configurations.

These take minutes each and are deselected by default; run them with
`pytest -m slow`.
"""
import dataclasses
import os
from pathlib import Path

import numpy as np
import pytest

from core.conf import lab_setting
from core.services.config_service import RunConfigService
from core.services.grid_service import Pattern
from ghost.services.correlation_service import CorrelationService
from ghost.services.experiment_service import ExperimentService
from ghost.services.retrieval_service import RetrievalProblem, RetrievalService
from optics.services.object_service import ObjectService
from optics.services.oracle_service import OracleService

pytestmark = pytest.mark.slow

WORKERS = os.cpu_count() or 1


def shipped(name, **ensemble):
    config = RunConfigService.load(Path(lab_setting('CONFIG_DIR')) / name)
    if ensemble:
        config = dataclasses.replace(config, ensemble=dataclasses.replace(config.ensemble, **ensemble))
    return config


def simulate(config):
    """Accumulated ensemble, its ghost result and the scene it came from"""
    geometry = RunConfigService.build_geometry(config)
    grid = RunConfigService.build_grid(config)
    obj = ObjectService.from_config(config.object, grid, geometry.wavelength)
    spec = ExperimentService.speckle_spec_from(config)
    ensemble = ExperimentService.ensemble_config_from(config, workers=WORKERS)
    acc = ExperimentService.accumulate_ensemble(geometry, obj, spec, ensemble)
    return acc, CorrelationService.finalize(acc, ensemble.estimator), geometry, obj


def rms_vs_oracle(config):
    _, result, geometry, obj = simulate(config)
    oracle = OracleService.fraunhofer_modulus(obj, geometry.wavelength, geometry.d2)
    return OracleService.compare(result.pattern, oracle).rms_error


class TestDoubleSlit:
    @pytest.fixture(scope='class')
    def run(self):
        config = shipped('double_slit.ini')
        acc, result, geometry, obj = simulate(config)
        return config, acc, result, geometry, obj

    def test_matches_analytic_pattern(self, run):
        config, _, result, geometry, _ = run
        params = config.object.params
        analytic = OracleService.analytic_double_slit_pattern(
            params['width_m'], params['separation_m'], result.pattern.axis,
        )
        metrics = OracleService.compare(result.pattern, analytic)
        assert metrics.rms_error <= 0.05
        fringe_period = metrics.fringe_periods[0] * geometry.wavelength * geometry.d2
        assert fringe_period == pytest.approx(132.1e-6, rel=0.02)

    def test_third_order_is_missing(self, run):
        _, _, result, geometry, _ = run
        displacement = result.pattern.axis * geometry.wavelength * geometry.d2
        third_order = np.abs(np.abs(displacement) - 3 * 132.1e-6) < 10e-6
        assert np.max(result.pattern.values[third_order]) < 0.05

    def test_reference_arm_is_thermal(self, run):
        _, acc, _, _, _ = run
        assert CorrelationService.g2_at_zero(acc, 0.0, arm='reference') == pytest.approx(2.0, abs=0.1)

    def test_retrieval_from_ghost_modulus(self, run):
        config, _, result, geometry, _ = run
        settings = config.retrieval
        modulus, grid = RetrievalService.modulus_from_pattern(result.pattern, geometry.wavelength, geometry.d2)
        truth = ObjectService.from_config(config.object, grid, geometry.wavelength)
        problem = RetrievalProblem(
            modulus=modulus,
            support=RetrievalService.support_from_object(truth, settings.support_dilation),
            max_iterations=settings.iterations,
            beta=settings.beta,
            init_seed=settings.init_seed,
        )
        reports = RetrievalService.run_restarts(
            problem, 'hio', settings.restarts, polish_iterations=settings.polish_iterations, workers=WORKERS,
        )
        errors = [RetrievalService.reconstruction_error(report.estimate, truth.t) for report in reports]
        correlations = [RetrievalService.registered_correlation(report.estimate, truth.t) for report in reports]
        assert np.median(errors) <= 0.15
        assert np.median(correlations) >= 0.9


class TestPhaseGrooves:
    def test_ghost_pattern_of_a_phase_object(self):
        config = shipped('phase_grooves.ini')
        acc, result, geometry, obj = simulate(config)
        oracle = OracleService.fraunhofer_modulus(obj, geometry.wavelength, geometry.d2)
        assert OracleService.compare(result.pattern, oracle).rms_error <= 0.05

        means = ExperimentService.mean_arm_intensities(acc)
        period = geometry.wavelength * geometry.d2 / config.object.params['separation_m']
        visibility = ExperimentService.fringe_visibility(means.mean_test, acc.grid.coordinates(), period)
        assert visibility < 0.05


class TestFresnelVersusFraunhofer:
    @pytest.mark.parametrize('name', ['double_slit.ini', 'phase_grooves.ini'])
    def test_free_propagation_is_not_the_far_field(self, name):
        config = shipped(name)
        geometry = RunConfigService.build_geometry(config)
        obj = ObjectService.from_config(config.object, RunConfigService.build_grid(config), geometry.wavelength)
        oracle = OracleService.fraunhofer_modulus(obj, geometry.wavelength, geometry.d2)
        fresnel = ExperimentService.run_coherent_reference(geometry, obj, 'fresnel_d2')
        lens = ExperimentService.run_coherent_reference(geometry, obj, 'lens_2f')
        assert OracleService.compare(fresnel, oracle).rms_error > 0.10
        assert OracleService.compare(lens, oracle).rms_error <= 0.01


class TestCrossedSlits:
    @staticmethod
    def first_null(profile, displacement, low=150e-6, high=250e-6):
        """Displacement of the deepest point of a profile on both sides of the axis"""
        nulls = []
        for side in (1, -1):
            window = (side * displacement > low) & (side * displacement < high)
            nulls.append(abs(displacement[window][np.argmin(profile[window])]))
        return float(np.mean(nulls))

    def test_fringe_periods_along_both_axes(self):
        config = shipped('crossed_slits.ini')
        _, result, geometry, obj = simulate(config)
        oracle = OracleService.fraunhofer_modulus(obj, geometry.wavelength, geometry.d2)
        scale = geometry.wavelength * geometry.d2
        center = obj.grid.center_index
        spacing = result.pattern.spacing

        ghost_x = OracleService.dominant_period(result.pattern.values[center, :], spacing) * scale
        oracle_x = OracleService.dominant_period(oracle.values[center, :], spacing) * scale
        assert oracle_x == pytest.approx(266e-6, rel=0.02)
        assert ghost_x == pytest.approx(oracle_x, rel=0.02)

        displacement = result.pattern.axis * scale
        oracle_null = self.first_null(oracle.values[:, center], displacement)
        ghost_null = self.first_null(result.pattern.values[:, center], displacement)
        assert oracle_null == pytest.approx(scale / (2 * config.object.params['sep_v_m']), rel=0.05)
        assert abs(ghost_null - oracle_null) <= 4 * obj.grid.pitch


class TestSpeckleAndFourierCondition:
    def test_object_plane_speckle(self):
        config = shipped('double_slit.ini')
        geometry = RunConfigService.build_geometry(config)
        report = ExperimentService.speckle_statistics(
            geometry, ExperimentService.speckle_spec_from(config), RunConfigService.build_grid(config),
            config.ensemble.master_seed, config.ensemble.realizations,
        )
        assert report.estimate == pytest.approx(10.6e-6, rel=0.01)
        assert report.fwhm == pytest.approx(10.6e-6, rel=0.10)
        assert report.g2_reference == pytest.approx(2.0, abs=0.1)

    @pytest.mark.parametrize('seed', [1, 2, 3, 4, 5])
    def test_detuned_reference_is_worse(self, seed):
        tuned = shipped('double_slit.ini', master_seed=seed, realizations=2000, checkpoint_every=0)
        detuned = shipped('detuned.ini', master_seed=seed, realizations=2000)
        assert rms_vs_oracle(detuned) > rms_vs_oracle(tuned)


class TestEstimators:
    def test_fixed_point_patterns_align_after_translation(self):
        config = shipped('double_slit.ini', estimator='fixed_point', realizations=2000, checkpoint_every=0,
                         test_point_m=(0.0, 50e-6))
        acc, at_center, _, _ = simulate(config)
        off_center = CorrelationService.finalize_fixed_point(acc, 50e-6)
        shift = acc.grid.index_of(50e-6) - acc.grid.center_index
        realigned = Pattern(axis=at_center.pattern.axis, values=np.roll(off_center.pattern.values, -shift),
                            axis_kind='frequency')
        metrics = OracleService.compare(realigned, at_center.pattern, k_peaks=3)
        assert all(abs(offset) <= 1 for offset in metrics.peak_offsets_samples)

    @pytest.mark.parametrize('realizations', [100, 1000, 10000])
    @pytest.mark.parametrize('seed', [1, 2, 3, 4, 5])
    def test_shift_averaging_beats_a_fixed_point(self, seed, realizations):
        config = shipped('double_slit.ini', master_seed=seed, realizations=realizations, checkpoint_every=0)
        acc, _, geometry, obj = simulate(config)
        oracle = OracleService.fraunhofer_modulus(obj, geometry.wavelength, geometry.d2)
        shift_averaged = CorrelationService.finalize_shift_averaged(acc)
        fixed_point = CorrelationService.finalize_fixed_point(acc)
        assert (OracleService.compare(shift_averaged.pattern, oracle).rms_error
                < OracleService.compare(fixed_point.pattern, oracle).rms_error)
