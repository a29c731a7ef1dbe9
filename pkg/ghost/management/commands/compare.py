"""
Compare two stored patterns and print the agreement metrics as JSON.

Usage:
    python manage.py compare runs/latest/ghost_pattern.csv runs/oracle/oracle_pattern.csv
    python manage.py compare a.bin b.bin --k-peaks 3 --out runs/compare
"""
import json

from core.services.array_io_service import ArrayIOService
from ghost.management.base import RunCommand
from optics.services.oracle_service import OracleService


class Command(RunCommand):
    help = 'RMS error, peak offsets and fringe periods of pattern_a against pattern_b'
    config_required = False

    def add_command_arguments(self, parser):
        parser.add_argument('pattern_a', type=str, help='Pattern under test (.bin or .csv)')
        parser.add_argument('pattern_b', type=str, help='Reference pattern (.bin or .csv)')
        parser.add_argument(
            '--k-peaks',
            type=int,
            default=5,
            help='Number of strongest maxima whose offsets are reported'
        )

    def run(self, config, out_dir, options):
        pattern = ArrayIOService.read_pattern(options['pattern_a'])
        reference = ArrayIOService.read_pattern(options['pattern_b'])
        metrics = OracleService.compare(pattern, reference, k_peaks=options['k_peaks']).as_dict()
        self.stdout.write(json.dumps(metrics, indent=2, sort_keys=True))
        return {
            'pattern_a': options['pattern_a'],
            'pattern_b': options['pattern_b'],
            'metrics': metrics,
        }
