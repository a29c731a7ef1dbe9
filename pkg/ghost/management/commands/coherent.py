"""
Plane-wave (laser) illumination of the configured object.

Usage:
    python manage.py coherent --config double_slit.ini --mode fresnel_d2
    python manage.py coherent --config phase_grooves.ini --mode lens_2f
"""
from core.services.array_io_service import ArrayIOService
from core.services.config_service import RunConfigService
from ghost.management.base import RunCommand
from ghost.services.experiment_service import COHERENT_MODES, ExperimentService
from optics.services.object_service import ObjectService
from optics.services.oracle_service import OracleService


class Command(RunCommand):
    help = 'Coherent reference pattern: Fresnel pattern at d2 or the 2-f lens pattern'

    def add_command_arguments(self, parser):
        parser.add_argument(
            '--mode',
            choices=COHERENT_MODES,
            default='fresnel_d2',
            help='fresnel_d2: free propagation over d2; lens_2f: lens of focal length d2'
        )

    def run(self, config, out_dir, options):
        mode = options['mode']
        geometry = RunConfigService.build_geometry(config)
        grid = RunConfigService.build_grid(config)
        obj = ObjectService.from_config(config.object, grid, geometry.wavelength)

        pattern = ExperimentService.run_coherent_reference(
            geometry, obj, mode, pad_factor=config.ensemble.pad_factor,
        )
        written = ArrayIOService.write_pattern(out_dir / f"coherent_{mode}", pattern, config.output.formats)
        oracle = OracleService.fraunhofer_modulus(obj, geometry.wavelength, geometry.d2)
        metrics = OracleService.compare(pattern, oracle)
        self.report(f"Coherent {mode}", {
            'object': config.object.type,
            'RMS vs Fraunhofer oracle': f"{metrics.rms_error:.3g}",
        })
        return {
            'mode': mode,
            'rms_vs_oracle': metrics.rms_error,
            'graymap_scale': written.get('pgm_scale'),
            'aperture_m': obj.metadata.get('aperture_m'),
            'files': written,
        }
