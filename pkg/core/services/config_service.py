"""
Run Configuration Service

Parses the sectioned key = value run files that drive every management command:
- [geometry]  wavelength_m, d0_m, d1_m, d2_m, dref_m
- [grid]      dims, n, pitch_m
- [source]    profile
- [object]    type plus type-specific parameters, or type = file with path
- [ensemble]  realizations, master_seed, estimator, test_point_m, ...
- [output]    directory, formats
- [retrieval] algorithm, iterations, beta, init_seed, restarts, mode, ...

Every error carries the file path and the line of the offending entry.
"""
import configparser
import dataclasses
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, Optional, Tuple

from core.exceptions import ConfigurationError, InvalidGeometryError

from .grid_service import Grid, SetupGeometry

SECTION_RE = re.compile(r'^\s*\[([^\]]+)\]')
KEY_RE = re.compile(r'^\s*([^\s#;\[=:][^=:]*?)\s*[=:]')

ESTIMATORS = ('fixed_point', 'shift_averaged')
PROFILES = ('hard_disk', 'gaussian')
OUTPUT_FORMATS = ('csv', 'bin', 'pgm')
ALGORITHMS = ('hio', 'er')
RETRIEVAL_MODES = ('amplitude', 'phase')

# Parameters accepted by each object type: name -> required
OBJECT_PARAMETERS = {
    'double_slit': {'width_m': True, 'separation_m': True},
    'phase_grooves': {
        'width_m': True, 'separation_m': True, 'depth_m': True,
        'n_refr': True, 'aperture_m': False,
    },
    'opaque_grooves': {'width_m': True, 'separation_m': True, 'aperture_m': False},
    'crossed_double_slit': {
        'width_m': True, 'sep_h_m': True, 'sep_v_m': True, 'slit_length_m': False,
    },
    'identity': {'aperture_m': False},
    'file': {'path': True},
}


@dataclass(frozen=True)
class GeometrySection:
    wavelength_m: float
    d0_m: float
    d1_m: float
    d2_m: float
    dref_m: float


@dataclass(frozen=True)
class GridSection:
    dims: int
    n: int
    pitch_m: float


@dataclass(frozen=True)
class SourceSection:
    profile: str = 'hard_disk'


@dataclass(frozen=True)
class ObjectSection:
    type: str
    params: Dict[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class EnsembleSection:
    realizations: int
    master_seed: int = 0
    estimator: str = 'shift_averaged'
    test_point_m: Tuple[float, ...] = (0.0,)
    checkpoint_every: int = 0
    block_size: Optional[int] = None
    pad_factor: int = 2
    bin_factor: int = 1
    diagnostics: bool = False


@dataclass(frozen=True)
class OutputSection:
    directory: str = 'latest'
    formats: Tuple[str, ...] = OUTPUT_FORMATS


@dataclass(frozen=True)
class RetrievalSection:
    algorithm: str = 'hio'
    iterations: int = 500
    beta: float = 0.9
    init_seed: int = 0
    restarts: int = 11
    mode: str = 'amplitude'
    polish_iterations: int = 50
    support_dilation: float = 2.0


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved run configuration"""
    geometry: GeometrySection
    grid: GridSection
    object: ObjectSection
    ensemble: EnsembleSection
    source: SourceSection = SourceSection()
    output: OutputSection = OutputSection()
    retrieval: RetrievalSection = RetrievalSection()
    source_path: Optional[str] = field(default=None, compare=False)

    def to_dict(self) -> Dict[str, Any]:
        data = dataclasses.asdict(self)
        data.pop('source_path')
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'RunConfig':
        """Rebuild a config from to_dict output (also after a JSON round trip)"""
        ensemble = dict(data['ensemble'])
        ensemble['test_point_m'] = tuple(float(value) for value in ensemble['test_point_m'])
        output = dict(data.get('output', {}))
        if 'formats' in output:
            output['formats'] = tuple(output['formats'])
        return cls(
            geometry=GeometrySection(**data['geometry']),
            grid=GridSection(**data['grid']),
            object=ObjectSection(type=data['object']['type'], params=dict(data['object']['params'])),
            ensemble=EnsembleSection(**ensemble),
            source=SourceSection(**data.get('source', {})),
            output=OutputSection(**output),
            retrieval=RetrievalSection(**data.get('retrieval', {})),
        )

    @property
    def fixed_test_point(self) -> float:
        return self.ensemble.test_point_m[0]


class _Reader:
    """Typed access to one parsed file, reporting path:line on failure"""

    def __init__(self, parser: configparser.ConfigParser, path: str, lines: Dict[Tuple[str, Optional[str]], int]):
        self.parser = parser
        self.path = path
        self.lines = lines
        self.consumed: Dict[str, set] = {}

    def error(self, message: str, section: str, key: Optional[str] = None) -> ConfigurationError:
        line = self.lines.get((section, key), self.lines.get((section, None)))
        return ConfigurationError(message, path=self.path, line=line)

    def get(self, section: str, key: str, convert: Callable[[str], Any], default: Any = ...) -> Any:
        if not self.parser.has_section(section):
            if default is ...:
                raise ConfigurationError(f"Missing section [{section}]", path=self.path)
            return default
        self.consumed.setdefault(section, set()).add(key)
        if not self.parser.has_option(section, key):
            if default is ...:
                raise self.error(f"Missing required key '{key}' in [{section}]", section)
            return default
        raw = self.parser.get(section, key).strip()
        try:
            return convert(raw)
        except (TypeError, ValueError) as exc:
            raise self.error(f"Invalid value for {key}: '{raw}' ({exc})", section, key) from exc

    def check_choice(self, section: str, key: str, value: str, choices: Tuple[str, ...]):
        if value not in choices:
            raise self.error(
                f"{key} must be one of {', '.join(choices)}, got '{value}'", section, key
            )

    def require(self, condition: bool, message: str, section: str, key: str):
        if not condition:
            raise self.error(message, section, key)


def _as_int(raw: str) -> int:
    return int(raw, 0)


def _as_float(raw: str) -> float:
    return float(raw)


def _as_bool(raw: str) -> bool:
    lowered = raw.lower()
    if lowered in ('1', 'true', 'yes', 'on'):
        return True
    if lowered in ('0', 'false', 'no', 'off'):
        return False
    raise ValueError('expected a boolean')


def _as_floats(raw: str) -> Tuple[float, ...]:
    values = tuple(float(part) for part in raw.split(',') if part.strip())
    if not values:
        raise ValueError('expected at least one number')
    return values


def _as_words(raw: str) -> Tuple[str, ...]:
    return tuple(part.strip() for part in raw.split(',') if part.strip())


class RunConfigService:
    """Service class for loading and validating run configuration files"""

    SECTIONS = ('geometry', 'grid', 'source', 'object', 'ensemble', 'output', 'retrieval')

    @staticmethod
    def line_map(text: str) -> Dict[Tuple[str, Optional[str]], int]:
        """Map (section, key) and (section, None) to 1-based line numbers"""
        lines: Dict[Tuple[str, Optional[str]], int] = {}
        section = None
        for number, line in enumerate(text.splitlines(), start=1):
            header = SECTION_RE.match(line)
            if header:
                section = header.group(1).strip()
                lines.setdefault((section, None), number)
                continue
            key = KEY_RE.match(line)
            if key and section is not None:
                lines.setdefault((section, key.group(1).strip()), number)
        return lines

    @classmethod
    def load(cls, path) -> RunConfig:
        """
        Read and validate a run configuration file

        Args:
            path: Path to the .ini run file

        Returns:
            RunConfig with every default resolved
        """
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigurationError(f"Cannot read config: {exc.strerror}", path=str(path)) from exc
        return cls.parse(text, str(path))

    @classmethod
    def parse(cls, text: str, path: str = '<config>') -> RunConfig:
        parser = configparser.ConfigParser(
            interpolation=None,
            inline_comment_prefixes=('#', ';'),
            strict=True,
        )
        parser.optionxform = str
        try:
            parser.read_string(text, source=path)
        except configparser.MissingSectionHeaderError as exc:
            raise ConfigurationError('Entry before the first [section] header', path, exc.lineno) from exc
        except configparser.ParsingError as exc:
            line = exc.errors[0][0] if exc.errors else None
            raise ConfigurationError('Malformed line (expected key = value)', path, line) from exc
        except (configparser.DuplicateOptionError, configparser.DuplicateSectionError) as exc:
            raise ConfigurationError(str(exc.message).split(': ', 1)[-1], path, exc.lineno) from exc

        lines = cls.line_map(text)
        reader = _Reader(parser, path, lines)
        for section in parser.sections():
            if section not in cls.SECTIONS:
                raise reader.error(f"Unknown section [{section}]", section)

        config = RunConfig(
            geometry=cls._geometry(reader),
            grid=cls._grid(reader),
            object=cls._object(reader),
            ensemble=cls._ensemble(reader),
            source=cls._source(reader),
            output=cls._output(reader),
            retrieval=cls._retrieval(reader),
            source_path=path,
        )

        for section in parser.sections():
            unknown = set(parser.options(section)) - reader.consumed.get(section, set())
            if unknown:
                key = sorted(unknown, key=lambda name: lines.get((section, name), 0))[0]
                raise reader.error(f"Unknown key '{key}' in [{section}]", section, key)
        return config

    @staticmethod
    def _geometry(reader: _Reader) -> GeometrySection:
        values = {}
        for key in ('wavelength_m', 'd0_m', 'd1_m', 'd2_m', 'dref_m'):
            values[key] = reader.get('geometry', key, _as_float)
            reader.require(values[key] > 0, f"{key} must be > 0", 'geometry', key)
        return GeometrySection(**values)

    @staticmethod
    def _grid(reader: _Reader) -> GridSection:
        dims = reader.get('grid', 'dims', _as_int, 1)
        reader.require(dims in (1, 2), 'dims must be 1 or 2', 'grid', 'dims')
        n = reader.get('grid', 'n', _as_int)
        reader.require(n >= 2, 'n must be >= 2', 'grid', 'n')
        pitch = reader.get('grid', 'pitch_m', _as_float)
        reader.require(pitch > 0, 'pitch_m must be > 0', 'grid', 'pitch_m')
        return GridSection(dims=dims, n=n, pitch_m=pitch)

    @staticmethod
    def _source(reader: _Reader) -> SourceSection:
        profile = reader.get('source', 'profile', str, 'hard_disk')
        reader.check_choice('source', 'profile', profile, PROFILES)
        return SourceSection(profile=profile)

    @staticmethod
    def _object(reader: _Reader) -> ObjectSection:
        object_type = reader.get('object', 'type', str)
        reader.check_choice('object', 'type', object_type, tuple(OBJECT_PARAMETERS))
        params: Dict[str, Any] = {}
        for name, required in OBJECT_PARAMETERS[object_type].items():
            convert = str if name == 'path' else _as_float
            default = ... if required else None
            value = reader.get('object', name, convert, default)
            if value is None:
                continue
            if name != 'path':
                reader.require(value > 0, f"{name} must be > 0", 'object', name)
            params[name] = value
        if object_type == 'file':
            # relative object files resolve against the config file location
            file_path = Path(params['path'])
            if not file_path.is_absolute() and reader.path != '<config>':
                params['path'] = str(Path(reader.path).parent / file_path)
        return ObjectSection(type=object_type, params=params)

    @staticmethod
    def _ensemble(reader: _Reader) -> EnsembleSection:
        realizations = reader.get('ensemble', 'realizations', _as_int)
        reader.require(realizations >= 2, 'n_realizations >= 2 required', 'ensemble', 'realizations')
        master_seed = reader.get('ensemble', 'master_seed', _as_int, 0)
        reader.require(
            0 <= master_seed < 2 ** 64, 'master_seed must be a 64-bit unsigned integer',
            'ensemble', 'master_seed',
        )
        estimator = reader.get('ensemble', 'estimator', str, 'shift_averaged')
        reader.check_choice('ensemble', 'estimator', estimator, ESTIMATORS)
        test_points = reader.get('ensemble', 'test_point_m', _as_floats, (0.0,))
        checkpoint_every = reader.get('ensemble', 'checkpoint_every', _as_int, 0)
        reader.require(checkpoint_every >= 0, 'checkpoint_every must be >= 0', 'ensemble', 'checkpoint_every')
        block_size = reader.get('ensemble', 'block_size', _as_int, None)
        if block_size is not None:
            reader.require(block_size >= 1, 'block_size must be >= 1', 'ensemble', 'block_size')
        pad_factor = reader.get('ensemble', 'pad_factor', _as_int, 2)
        reader.require(pad_factor >= 1, 'pad_factor must be >= 1', 'ensemble', 'pad_factor')
        bin_factor = reader.get('ensemble', 'bin_factor', _as_int, 1)
        reader.require(bin_factor >= 1, 'bin_factor must be >= 1', 'ensemble', 'bin_factor')
        diagnostics = reader.get('ensemble', 'diagnostics', _as_bool, False)
        return EnsembleSection(
            realizations=realizations,
            master_seed=master_seed,
            estimator=estimator,
            test_point_m=test_points,
            checkpoint_every=checkpoint_every,
            block_size=block_size,
            pad_factor=pad_factor,
            bin_factor=bin_factor,
            diagnostics=diagnostics,
        )

    @staticmethod
    def _output(reader: _Reader) -> OutputSection:
        directory = reader.get('output', 'directory', str, OutputSection.directory)
        formats = reader.get('output', 'formats', _as_words, OUTPUT_FORMATS)
        for name in formats:
            reader.check_choice('output', 'formats', name, OUTPUT_FORMATS)
        return OutputSection(directory=directory, formats=formats)

    @staticmethod
    def _retrieval(reader: _Reader) -> RetrievalSection:
        defaults = RetrievalSection()
        algorithm = reader.get('retrieval', 'algorithm', str, defaults.algorithm)
        reader.check_choice('retrieval', 'algorithm', algorithm, ALGORITHMS)
        iterations = reader.get('retrieval', 'iterations', _as_int, defaults.iterations)
        reader.require(iterations >= 1, 'iterations must be >= 1', 'retrieval', 'iterations')
        beta = reader.get('retrieval', 'beta', _as_float, defaults.beta)
        reader.require(0 < beta <= 1, 'beta must lie in (0, 1]', 'retrieval', 'beta')
        init_seed = reader.get('retrieval', 'init_seed', _as_int, defaults.init_seed)
        restarts = reader.get('retrieval', 'restarts', _as_int, defaults.restarts)
        reader.require(restarts >= 1, 'restarts must be >= 1', 'retrieval', 'restarts')
        mode = reader.get('retrieval', 'mode', str, defaults.mode)
        reader.check_choice('retrieval', 'mode', mode, RETRIEVAL_MODES)
        polish = reader.get('retrieval', 'polish_iterations', _as_int, defaults.polish_iterations)
        reader.require(polish >= 0, 'polish_iterations must be >= 0', 'retrieval', 'polish_iterations')
        dilation = reader.get('retrieval', 'support_dilation', _as_float, defaults.support_dilation)
        reader.require(dilation >= 1, 'support_dilation must be >= 1', 'retrieval', 'support_dilation')
        return RetrievalSection(
            algorithm=algorithm,
            iterations=iterations,
            beta=beta,
            init_seed=init_seed,
            restarts=restarts,
            mode=mode,
            polish_iterations=polish,
            support_dilation=dilation,
        )

    # ---------------------------------------------------------------- builders

    @staticmethod
    def build_grid(config: RunConfig) -> Grid:
        return Grid(dims=config.grid.dims, n=config.grid.n, pitch=config.grid.pitch_m)

    @staticmethod
    def build_geometry(config: RunConfig) -> SetupGeometry:
        try:
            return SetupGeometry(
                wavelength=config.geometry.wavelength_m,
                d0=config.geometry.d0_m,
                d1=config.geometry.d1_m,
                d2=config.geometry.d2_m,
                d_ref=config.geometry.dref_m,
            )
        except InvalidGeometryError as exc:
            raise ConfigurationError(str(exc), path=config.source_path) from exc

    @staticmethod
    def with_overrides(config: RunConfig, master_seed: Optional[int] = None,
                       directory: Optional[str] = None) -> RunConfig:
        """Apply command-line overrides (--seed, --out)"""
        if master_seed is not None:
            if not 0 <= master_seed < 2 ** 64:
                raise ConfigurationError('--seed must be a 64-bit unsigned integer')
            config = dataclasses.replace(
                config, ensemble=dataclasses.replace(config.ensemble, master_seed=master_seed)
            )
        if directory is not None:
            config = dataclasses.replace(
                config, output=dataclasses.replace(config.output, directory=directory)
            )
        return config
