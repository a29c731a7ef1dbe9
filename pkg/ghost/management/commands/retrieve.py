"""
Phase retrieval on a stored ghost-diffraction pattern.

Usage:
    python manage.py retrieve runs/latest/ghost_pattern.bin --config double_slit.ini
    python manage.py retrieve oracle_pattern.csv --config double_slit.ini --workers 4
"""
import numpy as np

from core.exceptions import ConfigurationError
from core.services.array_io_service import ArrayIOService
from core.services.config_service import RunConfigService
from ghost.management.base import RunCommand
from ghost.services.retrieval_service import RetrievalProblem, RetrievalService
from optics.services.object_service import ObjectService


class Command(RunCommand):
    help = 'Recover the object from the square root of a ghost pattern (HIO or ER)'

    def add_command_arguments(self, parser):
        parser.add_argument('pattern_path', type=str, help='Pattern file (.bin or .csv)')

    def run(self, config, out_dir, options):
        geometry = RunConfigService.build_geometry(config)
        settings = config.retrieval
        pattern = ArrayIOService.read_pattern(options['pattern_path'])
        if pattern.dims != config.grid.dims:
            raise ConfigurationError(
                f"Pattern is {pattern.dims}D but the config grid is {config.grid.dims}D",
                path=config.source_path,
            )
        modulus, grid = RetrievalService.modulus_from_pattern(pattern, geometry.wavelength, geometry.d2)
        truth = ObjectService.from_config(config.object, grid, geometry.wavelength)
        problem = RetrievalProblem(
            modulus=modulus,
            support=RetrievalService.support_from_object(truth, settings.support_dilation),
            max_iterations=settings.iterations,
            beta=settings.beta,
            init_seed=settings.init_seed,
            mode=settings.mode,
            grid=grid,
        )
        reports = RetrievalService.run_restarts(
            problem, settings.algorithm, settings.restarts,
            polish_iterations=settings.polish_iterations, workers=options.get('workers'),
        )
        errors = [RetrievalService.reconstruction_error(report.estimate, truth.t) for report in reports]
        correlations = [RetrievalService.registered_correlation(report.estimate, truth.t) for report in reports]
        best = min(range(len(reports)), key=lambda index: reports[index].fourier_error)

        ArrayIOService.write_array(out_dir / 'retrieved_object.bin', reports[best].estimate)
        ArrayIOService.write_array(
            out_dir / 'fourier_error_history.bin', np.asarray(reports[best].fourier_error_history),
        )
        self.report(f"Phase retrieval ({settings.algorithm}, {len(reports)} starts)", {
            'median reconstruction error': f"{float(np.median(errors)):.3g}",
            'median registered correlation': f"{float(np.median(correlations)):.3g}",
            'best Fourier error': f"{reports[best].fourier_error:.3g}",
        })
        return {
            'algorithm': settings.algorithm,
            'object_pitch_m': grid.pitch,
            'init_seeds': [report.init_seed for report in reports],
            'fourier_errors': [report.fourier_error for report in reports],
            'iterations_run': [report.iterations_run for report in reports],
            'reconstruction_errors': errors,
            'registered_correlations': correlations,
            'median_reconstruction_error': float(np.median(errors)),
            'median_registered_correlation': float(np.median(correlations)),
            'best_init_seed': reports[best].init_seed,
        }
