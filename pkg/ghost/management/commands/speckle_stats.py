"""
Object-plane speckle size and thermal statistics for the configured source.

Usage:
    python manage.py speckle_stats --config double_slit.ini
"""
from core.services.config_service import RunConfigService
from ghost.management.base import RunCommand
from ghost.services.experiment_service import ExperimentService


class Command(RunCommand):
    help = 'Measure the speckle autocorrelation width and g2(0) at the object plane and reference detector'

    def run(self, config, out_dir, options):
        geometry = RunConfigService.build_geometry(config)
        grid = RunConfigService.build_grid(config)
        spec = ExperimentService.speckle_spec_from(config)
        spec.validate_for(grid)

        report = ExperimentService.speckle_statistics(
            geometry, spec, grid, config.ensemble.master_seed, config.ensemble.realizations,
            pad_factor=config.ensemble.pad_factor,
        )
        self.report('Speckle statistics', {
            'realizations': report.n,
            'autocorrelation FWHM': f"{report.fwhm * 1e6:.3f} um",
            'lambda*d1/d0 estimate': f"{report.estimate * 1e6:.3f} um",
            'g2(0) object plane': f"{report.g2_object:.4f}",
            'g2(0) reference detector': f"{report.g2_reference:.4f}",
        })
        return {
            'fwhm_m': report.fwhm,
            'coherence_length_estimate_m': report.estimate,
            'g2_object': report.g2_object,
            'g2_reference': report.g2_reference,
            'n': report.n,
        }
