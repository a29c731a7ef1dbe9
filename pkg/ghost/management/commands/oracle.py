"""
Write the Fraunhofer modulus of the configured object by direct summation.

Usage:
    python manage.py oracle --config double_slit.ini
"""
from core.services.array_io_service import ArrayIOService
from core.services.config_service import RunConfigService
from ghost.management.base import RunCommand
from optics.services.object_service import ObjectService
from optics.services.oracle_service import OracleService


class Command(RunCommand):
    help = 'Compute the far-field reference pattern |T(nu)|^2 of the configured object'

    def run(self, config, out_dir, options):
        geometry = RunConfigService.build_geometry(config)
        grid = RunConfigService.build_grid(config)
        obj = ObjectService.from_config(config.object, grid, geometry.wavelength)

        oracle = OracleService.fraunhofer_modulus(obj, geometry.wavelength, geometry.d2)
        written = ArrayIOService.write_pattern(out_dir / 'oracle_pattern', oracle, config.output.formats)
        extras = {
            'provenance': oracle.provenance,
            'graymap_scale': written.get('pgm_scale'),
            'aperture_m': obj.metadata.get('aperture_m'),
            'files': written,
        }
        if config.object.type == 'double_slit':
            params = config.object.params
            analytic = OracleService.analytic_double_slit_pattern(
                params['width_m'], params['separation_m'], oracle.axis,
            )
            ArrayIOService.write_pattern(out_dir / 'analytic_pattern', analytic, config.output.formats)
            extras['analytic_rms'] = OracleService.compare(oracle, analytic).rms_error
        self.report('Fraunhofer oracle', {
            'object': config.object.type,
            'samples': oracle.values.size,
            **({'RMS vs analytic': f"{extras['analytic_rms']:.3g}"} if 'analytic_rms' in extras else {}),
        })
        return extras
