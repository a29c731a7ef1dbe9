"""
Run a pseudo-thermal ghost-diffraction ensemble and write the recovered pattern.

Usage:
    python manage.py simulate --config double_slit.ini
    python manage.py simulate --config crossed_slits.ini --workers 8 --out runs/crossed
    python manage.py simulate --config double_slit.ini --seed 7
"""
from core.services.array_io_service import ArrayIOService
from core.services.config_service import RunConfigService
from ghost.management.base import RunCommand
from ghost.services.correlation_service import CorrelationService
from ghost.services.experiment_service import ExperimentService
from optics.services.object_service import ObjectService
from optics.services.source_service import RealizationSeed

CHECKPOINT_FILE = 'checkpoint.bin'


class Command(RunCommand):
    help = 'Simulate the two-arm experiment and finalize the intensity-fluctuation correlation'

    def run(self, config, out_dir, options):
        geometry = RunConfigService.build_geometry(config)
        grid = RunConfigService.build_grid(config)
        obj = ObjectService.from_config(config.object, grid, geometry.wavelength)
        spec = ExperimentService.speckle_spec_from(config)
        ensemble = ExperimentService.ensemble_config_from(
            config, workers=options.get('workers'), checkpoint_path=str(out_dir / CHECKPOINT_FILE),
        )

        self.log(f"Simulating {ensemble.n_realizations} realizations of '{config.object.type}'")
        acc = ExperimentService.accumulate_ensemble(geometry, obj, spec, ensemble)
        result = CorrelationService.finalize(acc, ensemble.estimator)
        formats = config.output.formats
        written = ArrayIOService.write_pattern(out_dir / 'ghost_pattern', result.pattern, formats)

        extra_patterns = {}
        if ensemble.estimator == 'fixed_point':
            for slot, point in enumerate(ensemble.extra_test_points, start=1):
                extra = CorrelationService.finalize_fixed_point(acc, point)
                extra_patterns[point] = ArrayIOService.write_pattern(
                    out_dir / f"ghost_pattern_point{slot}", extra.pattern, formats,
                )

        means = ExperimentService.mean_arm_intensities(acc)
        ArrayIOService.write_array(out_dir / 'mean_test.bin', means.mean_test)
        ArrayIOService.write_array(out_dir / 'mean_ref.bin', means.mean_ref)
        first = ExperimentService.run_realization(
            geometry, obj, spec, RealizationSeed(ensemble.master_seed, 0),
            pad_factor=ensemble.pad_factor, bin_factor=ensemble.bin_factor,
        )
        ArrayIOService.write_array(out_dir / 'realization0_test.bin', first.i_test)
        ArrayIOService.write_array(out_dir / 'realization0_ref.bin', first.i_ref)

        self.report('Ghost pattern', {
            'estimator': result.estimator,
            'realizations': result.n_used,
            'clamp minimum': f"{result.clamp_minimum:.3g}",
            'files': ', '.join(value for key, value in written.items() if key != 'pgm_scale'),
        })
        return {
            'estimator': result.estimator,
            'n_used': result.n_used,
            'clamp_minimum': result.clamp_minimum,
            'raw_peak': result.raw_peak,
            'test_point_m': result.test_point,
            'graymap_scale': written.get('pgm_scale'),
            'aperture_m': obj.metadata.get('aperture_m'),
            'files': written,
            'extra_test_point_files': extra_patterns,
            'checkpoint': str(out_dir / CHECKPOINT_FILE),
        }
