"""
Object Service

Builders for complex transmission functions:
- Double slit (amplitude)
- Phase grooves etched into a transparent plate, and their opaque counterpart
- Crossed double slit (2D)
- Identity screen, optionally limited by a square aperture
- Custom objects stored as amplitude/phase planes in the binary array format

Slit and groove edges snap to samples: a sample at coordinate x is open when
separation/2 - width/2 <= |x| < separation/2 + width/2. Separations are
center to center. In 2D, array axis 1 is x and axis 0 is y.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, Optional

import numpy as np

from core.exceptions import ConfigurationError, FormatError
from core.services.array_io_service import ArrayIOService
from core.services.config_service import ObjectSection
from core.services.grid_service import ComplexField, Grid

logger = logging.getLogger(__name__)

DEFAULT_PLATE_APERTURE = 2e-3
DEFAULT_SLIT_LENGTH = 1e-3
MODULUS_TOLERANCE = 1e-12


@dataclass(frozen=True)
class Transmission:
    """Complex transmittance t(x) on a grid, |t| <= 1"""
    grid: Grid
    t: np.ndarray = field(repr=False)
    kind: str = 'amplitude'  # 'amplitude', 'phase' or 'mixed'
    metadata: Dict[str, Any] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        t = np.array(self.t, dtype=np.complex128, copy=True)
        if t.shape != self.grid.shape:
            raise ConfigurationError(f"Transmission shape {t.shape} does not match grid {self.grid.shape}")
        if np.any(np.abs(t) > 1 + MODULUS_TOLERANCE):
            raise ConfigurationError('Transmission modulus exceeds 1')
        t.flags.writeable = False
        object.__setattr__(self, 't', t)

    def apply(self, incident: ComplexField) -> ComplexField:
        """Field just behind the object"""
        self.grid.require_compatible(incident.grid, 'object and field grids')
        return ComplexField(self.grid, incident.samples * self.t)

    def open_extent(self) -> float:
        """Largest |coordinate| of any non-zero sample"""
        open_samples = np.nonzero(self.t)
        if not open_samples[0].size:
            return 0.0
        coords = self.grid.coordinates()
        return float(max(np.max(np.abs(coords[index])) for index in open_samples))


class ObjectService:
    """Service class for building object transmissions"""

    @staticmethod
    def _edge_epsilon(grid: Grid) -> float:
        return 1e-9 * grid.pitch

    @classmethod
    def _pair_mask(cls, coords: np.ndarray, width: float, separation: float, grid: Grid) -> np.ndarray:
        """Samples strictly inside either of two bands centered at +/- separation/2"""
        eps = cls._edge_epsilon(grid)
        distance = np.abs(coords)
        lower = separation / 2 - width / 2
        upper = separation / 2 + width / 2
        return (distance > lower + eps) & (distance < upper - eps)

    @classmethod
    def _inside(cls, coords: np.ndarray, full_width: float, grid: Grid) -> np.ndarray:
        return np.abs(coords) < full_width / 2 - cls._edge_epsilon(grid)

    @staticmethod
    def _check_pair(width: float, separation: float, grid: Grid, what: str = 'slits', touching: bool = False):
        if not width > 0:
            raise ConfigurationError(f"Width of the {what} must be > 0, got {width}")
        if separation < width or (separation == width and not touching):
            raise ConfigurationError(
                f"{what.capitalize()} overlap: separation {separation:g} m must exceed width {width:g} m"
            )
        outer = separation / 2 + width / 2
        if outer > grid.coordinates()[-1]:
            raise ConfigurationError(
                f"{what.capitalize()} extend to {outer:g} m, beyond the grid edge "
                f"{grid.coordinates()[-1]:g} m"
            )

    @staticmethod
    def _x_coordinates(grid: Grid) -> np.ndarray:
        """x coordinate broadcast to the grid shape"""
        return np.broadcast_to(grid.mesh()[-1], grid.shape)

    @classmethod
    def _aperture_mask(cls, grid: Grid, aperture: Optional[float]) -> np.ndarray:
        if aperture is None:
            return np.ones(grid.shape, dtype=bool)
        if aperture > grid.span:
            raise ConfigurationError(f"Aperture {aperture:g} m is wider than the grid span {grid.span:g} m")
        mask = np.ones(grid.shape, dtype=bool)
        for coords in grid.mesh():
            mask = mask & cls._inside(coords, aperture, grid)
        return mask

    @classmethod
    def double_slit(cls, width: float, separation: float, grid: Grid) -> Transmission:
        """
        Two identical slits, center-to-center separation

        Args:
            width: Slit width in meters
            separation: Center-to-center distance in meters
            grid: Object grid (in 2D the slits run along y)

        Returns:
            Real-valued Transmission with t = 1 in the slits, 0 elsewhere
        """
        cls._check_pair(width, separation, grid)
        mask = cls._pair_mask(cls._x_coordinates(grid), width, separation, grid)
        return Transmission(
            grid, mask.astype(np.complex128), kind='amplitude',
            metadata={'type': 'double_slit', 'width_m': width, 'separation_m': separation},
        )

    @staticmethod
    def groove_phase(depth: float, n_refr: float, wavelength: float) -> float:
        """Phase delay 2*pi*(n - 1)*depth/lambda of an etched groove"""
        return 2 * math.pi * (n_refr - 1) * depth / wavelength

    @classmethod
    def phase_grooves(cls, width: float, separation: float, depth: float, n_refr: float,
                      wavelength: float, grid: Grid,
                      aperture: float = DEFAULT_PLATE_APERTURE) -> Transmission:
        """
        Two grooves etched into a transparent plate

        The plate is limited to |x| < aperture/2 (a square in 2D) and opaque
        outside; inside, t = exp(i*dphi) in the grooves and 1 elsewhere.
        """
        cls._check_pair(width, separation, grid, 'grooves')
        if not n_refr > 1:
            raise ConfigurationError(f"Refractive index must exceed 1, got {n_refr}")
        if depth < 0 or not wavelength > 0:
            raise ConfigurationError('Groove depth must be >= 0 and wavelength > 0')
        if separation / 2 + width / 2 > aperture / 2:
            raise ConfigurationError(f"Grooves do not fit inside the {aperture:g} m plate aperture")
        phase = cls.groove_phase(depth, n_refr, wavelength)
        plate = cls._aperture_mask(grid, aperture)
        grooves = cls._pair_mask(cls._x_coordinates(grid), width, separation, grid) & plate
        t = plate.astype(np.complex128)
        t[grooves] = np.exp(1j * phase)
        return Transmission(
            grid, t, kind='phase',
            metadata={
                'type': 'phase_grooves', 'width_m': width, 'separation_m': separation,
                'depth_m': depth, 'n_refr': n_refr, 'phase_rad': phase, 'aperture_m': aperture,
            },
        )

    @classmethod
    def opaque_grooves(cls, width: float, separation: float, grid: Grid,
                       aperture: float = DEFAULT_PLATE_APERTURE) -> Transmission:
        """Amplitude counterpart of phase_grooves: the grooves block the light"""
        cls._check_pair(width, separation, grid, 'grooves')
        if separation / 2 + width / 2 > aperture / 2:
            raise ConfigurationError(f"Grooves do not fit inside the {aperture:g} m plate aperture")
        plate = cls._aperture_mask(grid, aperture)
        grooves = cls._pair_mask(cls._x_coordinates(grid), width, separation, grid)
        return Transmission(
            grid, (plate & ~grooves).astype(np.complex128), kind='amplitude',
            metadata={
                'type': 'opaque_grooves', 'width_m': width, 'separation_m': separation,
                'aperture_m': aperture,
            },
        )

    @classmethod
    def crossed_double_slit(cls, width: float, sep_h: float, sep_v: float, grid2d: Grid,
                            slit_length: float = DEFAULT_SLIT_LENGTH) -> Transmission:
        """
        Union of two double slits sharing a center

        The first pair is separated by sep_h along x and runs along y; the
        second is separated by sep_v along y and runs along x. Both pairs have
        slits of the same width and length. Slits of one pair may touch
        (separation equal to width); they then form a single slit twice as wide.
        """
        if grid2d.dims != 2:
            raise ConfigurationError('Crossed double slit needs a 2D grid')
        cls._check_pair(width, sep_h, grid2d, touching=True)
        cls._check_pair(width, sep_v, grid2d, touching=True)
        if not 0 < slit_length <= grid2d.span:
            raise ConfigurationError(f"Slit length {slit_length:g} m must lie in (0, grid span]")
        y, x = grid2d.mesh()
        horizontal_pair = cls._pair_mask(x, width, sep_h, grid2d) & cls._inside(y, slit_length, grid2d)
        vertical_pair = cls._pair_mask(y, width, sep_v, grid2d) & cls._inside(x, slit_length, grid2d)
        return Transmission(
            grid2d, (horizontal_pair | vertical_pair).astype(np.complex128), kind='amplitude',
            metadata={
                'type': 'crossed_double_slit', 'width_m': width, 'sep_h_m': sep_h,
                'sep_v_m': sep_v, 'slit_length_m': slit_length,
            },
        )

    @classmethod
    def identity(cls, grid: Grid, aperture: Optional[float] = None) -> Transmission:
        """Unit transmission, optionally limited to |x| < aperture/2"""
        t = cls._aperture_mask(grid, aperture).astype(np.complex128)
        return Transmission(grid, t, kind='amplitude', metadata={'type': 'identity', 'aperture_m': aperture})

    @staticmethod
    def to_file(transmission: Transmission, path):
        """Store amplitude and phase planes as one (2, ...) f64 record"""
        planes = np.stack([np.abs(transmission.t), np.angle(transmission.t)])
        ArrayIOService.write_array(path, planes)

    @staticmethod
    def from_file(path, grid: Grid) -> Transmission:
        """
        Load a transmission written as amplitude and phase planes

        Amplitudes above 1 are clamped to 1 with a warning.

        Args:
            path: Binary array file of shape (2, *grid.shape)
            grid: Grid the object is sampled on

        Returns:
            Transmission with t = amplitude * exp(i*phase)
        """
        planes = ArrayIOService.read_array(path)
        if np.iscomplexobj(planes):
            raise FormatError(f"{path}: amplitude/phase planes must be real")
        if planes.shape != (2, *grid.shape):
            raise FormatError(
                f"{path}: planes of shape {planes.shape} do not match grid {(2, *grid.shape)}"
            )
        amplitude, phase = planes
        if not np.all(np.isfinite(planes)):
            raise FormatError(f"{path}: non-finite values in amplitude or phase")
        amplitude = np.abs(amplitude)
        overshoot = amplitude > 1 + MODULUS_TOLERANCE
        if np.any(overshoot):
            logger.warning(
                f"{path}: {int(np.count_nonzero(overshoot))} amplitude samples above 1 "
                f"(max {float(np.max(amplitude)):.4g}) clamped to 1"
            )
            amplitude = np.minimum(amplitude, 1.0)
        t = np.where(phase == 0, amplitude + 0j, amplitude * np.exp(1j * phase))
        if not np.any(phase):
            kind = 'amplitude'
        elif np.all(np.isclose(amplitude, 1, rtol=0, atol=MODULUS_TOLERANCE) | (amplitude == 0)):
            kind = 'phase'
        else:
            kind = 'mixed'
        return Transmission(grid, t, kind=kind, metadata={'type': 'file', 'path': str(path)})

    @classmethod
    def from_config(cls, section: ObjectSection, grid: Grid, wavelength: float) -> Transmission:
        """Build the object named by a run file [object] section"""
        params = section.params
        if section.type == 'double_slit':
            return cls.double_slit(params['width_m'], params['separation_m'], grid)
        if section.type == 'phase_grooves':
            return cls.phase_grooves(
                params['width_m'], params['separation_m'], params['depth_m'], params['n_refr'],
                wavelength, grid, aperture=params.get('aperture_m') or DEFAULT_PLATE_APERTURE,
            )
        if section.type == 'opaque_grooves':
            return cls.opaque_grooves(
                params['width_m'], params['separation_m'], grid,
                aperture=params.get('aperture_m') or DEFAULT_PLATE_APERTURE,
            )
        if section.type == 'crossed_double_slit':
            return cls.crossed_double_slit(
                params['width_m'], params['sep_h_m'], params['sep_v_m'], grid,
                slit_length=params.get('slit_length_m') or DEFAULT_SLIT_LENGTH,
            )
        if section.type == 'identity':
            return cls.identity(grid, aperture=params.get('aperture_m'))
        if section.type == 'file':
            return cls.from_file(params['path'], grid)
        raise ConfigurationError(f"Unknown object type '{section.type}'")
