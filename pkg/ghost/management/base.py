"""
Base class for the simulator management commands.

Handles the options every run shares (--config, --out, --workers, --seed),
collects logged warnings, writes the metadata record and maps simulator
errors onto exit codes (2 for configuration problems, 1 for runtime failures).
"""
import json
import logging
from pathlib import Path
from typing import Any, Dict, Optional

from django.core.management.base import BaseCommand, CommandError
from django.utils import timezone

from core.conf import lab_setting
from core.exceptions import ConfigurationError, FormatError, GhostLabError, InvalidGeometryError
from core.run_record import capture_warnings
from core.services.config_service import RunConfig, RunConfigService
from core.services.grid_service import SetupGeometry
from ghost_lab import __version__

logger = logging.getLogger(__name__)

USAGE_ERRORS = (ConfigurationError, FormatError, InvalidGeometryError)
METADATA_FILE = 'metadata.json'


class RunCommand(BaseCommand):
    """Shared plumbing for simulate, oracle, coherent, retrieve, speckle_stats and compare"""

    requires_system_checks = []
    config_required = True

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.verbosity = 1

    def add_arguments(self, parser):
        """--config, --out, --workers and --seed, then the subcommand's own options"""
        parser.add_argument(
            '--config',
            type=str,
            required=self.config_required,
            help='Run configuration file (.ini); bare names are looked up in the configs directory'
        )
        parser.add_argument(
            '--out',
            type=str,
            help='Output directory (default: [output] directory under the output root)'
        )
        parser.add_argument(
            '--workers',
            type=int,
            help='Worker processes (default: GHOST_LAB_WORKERS or available parallelism)'
        )
        parser.add_argument(
            '--seed',
            type=int,
            help='Override the [ensemble] master_seed'
        )
        self.add_command_arguments(parser)

    def add_command_arguments(self, parser):
        """Subcommand options such as --mode or positional pattern paths"""

    def handle(self, *args, **options):
        """Run the subcommand under warning capture; simulator errors become exit codes 1 and 2"""
        self.verbosity = options.get('verbosity', 1)
        if options.get('workers') is not None and options['workers'] < 1:
            raise CommandError('--workers must be >= 1', returncode=2)
        try:
            with capture_warnings() as record:
                config = self.load_config(options)
                out_dir = self.output_directory(config, options)
                extras = self.run(config, out_dir, options)
                if out_dir is not None:
                    self.write_metadata(out_dir, config, record.records, extras or {})
        except USAGE_ERRORS as exc:
            raise CommandError(str(exc), returncode=2) from exc
        except GhostLabError as exc:
            raise CommandError(str(exc), returncode=1) from exc
        except (OSError, ArithmeticError, MemoryError, RuntimeError) as exc:
            raise CommandError(f"{self.name()} failed: {exc}", returncode=1) from exc

    def name(self) -> str:
        return self.__class__.__module__.rsplit('.', 1)[-1]

    def run(self, config: Optional[RunConfig], out_dir: Optional[Path], options: Dict[str, Any]) -> Dict[str, Any]:
        """Write the run's outputs into out_dir and return the fields it adds to metadata.json"""
        raise NotImplementedError('Subclasses must implement run()')

    # ---------------------------------------------------------------- config and output

    @staticmethod
    def resolve_config_path(raw: str) -> Path:
        path = Path(raw)
        if not path.exists() and not path.is_absolute():
            candidate = Path(lab_setting('CONFIG_DIR')) / path
            if candidate.exists():
                return candidate
        return path

    def load_config(self, options: Dict[str, Any]) -> Optional[RunConfig]:
        if not options.get('config'):
            return None
        config = RunConfigService.load(self.resolve_config_path(options['config']))
        out = options.get('out')
        return RunConfigService.with_overrides(
            config,
            master_seed=options.get('seed'),
            directory=str(Path(out).resolve()) if out else None,
        )

    @staticmethod
    def output_directory(config: Optional[RunConfig], options: Dict[str, Any]) -> Optional[Path]:
        """--out as given, else the config directory (relative ones live under OUTPUT_ROOT)"""
        if options.get('out'):
            directory = Path(options['out'])
        elif config is not None:
            directory = Path(config.output.directory)
            if not directory.is_absolute():
                directory = Path(lab_setting('OUTPUT_ROOT')) / directory
        else:
            return None
        directory.mkdir(parents=True, exist_ok=True)
        return directory

    @staticmethod
    def signal_prefactor(geometry: SetupGeometry) -> float:
        """1/(lambda**4 * d2**4); reported only, patterns stay peak-normalized"""
        return 1.0 / (geometry.wavelength ** 4 * geometry.d2 ** 4)

    def write_metadata(self, out_dir: Path, config: Optional[RunConfig], warnings, extras: Dict[str, Any]):
        """metadata.json: the resolved run file plus the warnings logged during the run"""
        metadata = {
            'command': self.name(),
            'version': __version__,
            'generated_at': timezone.now().isoformat(),
            'config_path': config.source_path if config else None,
            'config': config.to_dict() if config else None,
            'warnings': list(warnings),
            **extras,
        }
        if config is not None:
            metadata['signal_prefactor'] = self.signal_prefactor(RunConfigService.build_geometry(config))
        path = out_dir / METADATA_FILE
        path.write_text(json.dumps(metadata, indent=2, sort_keys=True, default=str) + '\n')
        self.log(f"Metadata written to {path}", level=2)

    # ---------------------------------------------------------------- console

    def log(self, message, level=1, style=None):
        """Write a progress line when --verbosity is at least level"""
        if self.verbosity >= level:
            if style:
                message = style(message)
            self.stdout.write(message)

    def report(self, title: str, rows: Dict[str, Any]):
        """Print key: value lines under a title"""
        self.stdout.write(self.style.SUCCESS(title))
        for key, value in rows.items():
            self.stdout.write(f"  {key}: {value}")
