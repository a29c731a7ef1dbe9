"""
Grid Service

Physical sampling shared by every other service:
- Centered uniform grids (1D or 2D) and complex fields living on them
- Two-arm setup geometry (wavelength, d0, d1, d2, d_ref)
- Non-negative patterns on displacement or frequency axes
- Detector-to-frequency axis conversion, Fraunhofer distance, field energy

Coordinates follow coordinate(i) = (i - n//2) * pitch, so the zero coordinate
always sits on a sample.
"""
import math
from dataclasses import dataclass, field
from typing import Tuple

import numpy as np

from core.exceptions import ConfigurationError, InvalidGeometryError

AXIS_KINDS = ('displacement', 'frequency')

# Tolerance for the d_ref = d1 + d2 Fourier condition, meters
FOURIER_CONDITION_TOLERANCE = 1e-9


def _frozen_array(values, dtype) -> np.ndarray:
    array = np.array(values, dtype=dtype, copy=True)
    array.flags.writeable = False
    return array


@dataclass(frozen=True)
class Grid:
    """Uniformly sampled, centered 1D or 2D grid with pitch in meters"""
    dims: int
    n: int
    pitch: float

    def __post_init__(self):
        if self.dims not in (1, 2):
            raise ConfigurationError(f"Grid dims must be 1 or 2, got {self.dims}")
        if int(self.n) != self.n or self.n < 2:
            raise ConfigurationError(f"Grid needs n >= 2 samples per axis, got {self.n}")
        if not self.pitch > 0 or not math.isfinite(self.pitch):
            raise ConfigurationError(f"Grid pitch must be positive, got {self.pitch}")
        object.__setattr__(self, 'n', int(self.n))
        object.__setattr__(self, 'pitch', float(self.pitch))

    @property
    def shape(self) -> Tuple[int, ...]:
        return (self.n,) * self.dims

    @property
    def center_index(self) -> int:
        return self.n // 2

    @property
    def span(self) -> float:
        """Full width of one axis in meters"""
        return self.n * self.pitch

    def coordinates(self) -> np.ndarray:
        """Sample coordinates of one axis (identical for every axis)"""
        return (np.arange(self.n) - self.n // 2) * self.pitch

    def mesh(self) -> Tuple[np.ndarray, ...]:
        """Coordinate arrays broadcastable to the grid shape, ordered (y, x) in 2D"""
        x = self.coordinates()
        if self.dims == 1:
            return (x,)
        return (x[:, np.newaxis], x[np.newaxis, :])

    def radius(self) -> np.ndarray:
        """Distance of every sample from the origin"""
        if self.dims == 1:
            return np.abs(self.coordinates())
        y, x = self.mesh()
        return np.hypot(y, x)

    def index_of(self, coordinate: float) -> int:
        """Nearest sample index of a coordinate; it must lie on the grid"""
        index = int(round(coordinate / self.pitch)) + self.n // 2
        if not 0 <= index < self.n:
            raise ConfigurationError(
                f"Coordinate {coordinate:g} m lies outside the grid span "
                f"[{self.coordinates()[0]:g}, {self.coordinates()[-1]:g}] m"
            )
        return index

    def is_compatible(self, other: 'Grid') -> bool:
        return self.dims == other.dims and self.n == other.n and self.pitch == other.pitch

    def require_compatible(self, other: 'Grid', what: str = 'grids'):
        if not self.is_compatible(other):
            raise ConfigurationError(f"Incompatible {what}: {self} vs {other}")

    def binned(self, factor: int) -> 'Grid':
        """Detector grid obtained by summing factor x factor blocks of samples"""
        if factor < 1 or self.n % factor:
            raise ConfigurationError(f"Bin factor {factor} must divide n = {self.n}")
        return Grid(self.dims, self.n // factor, self.pitch * factor)


@dataclass(frozen=True)
class ComplexField:
    """Complex amplitude sampled on a grid"""
    grid: Grid
    samples: np.ndarray = field(repr=False)

    def __post_init__(self):
        samples = _frozen_array(self.samples, np.complex128)
        if samples.shape != self.grid.shape:
            raise ConfigurationError(
                f"Field has shape {samples.shape}, grid expects {self.grid.shape}"
            )
        object.__setattr__(self, 'samples', samples)

    def intensity(self) -> np.ndarray:
        return np.abs(self.samples) ** 2


@dataclass(frozen=True)
class SetupGeometry:
    """Wavelength and the propagation distances of both arms, all in meters"""
    wavelength: float
    d0: float
    d1: float
    d2: float
    d_ref: float

    def __post_init__(self):
        for name in ('wavelength', 'd0', 'd1', 'd2', 'd_ref'):
            value = getattr(self, name)
            if not value > 0 or not math.isfinite(value):
                raise InvalidGeometryError(f"{name} must be positive, got {value}")

    @property
    def detuning(self) -> float:
        """d_ref - (d1 + d2)"""
        return self.d_ref - (self.d1 + self.d2)

    def fourier_condition_met(self) -> bool:
        return abs(self.detuning) <= FOURIER_CONDITION_TOLERANCE


@dataclass(frozen=True)
class Pattern:
    """Non-negative pattern on a displacement (m) or frequency (1/m) axis

    2D patterns share the same axis along both array axes.
    """
    axis: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    axis_kind: str = 'displacement'

    def __post_init__(self):
        axis = _frozen_array(self.axis, np.float64)
        values = _frozen_array(self.values, np.float64)
        if self.axis_kind not in AXIS_KINDS:
            raise ConfigurationError(f"Unknown axis kind '{self.axis_kind}'")
        if axis.ndim != 1 or axis.size < 2 or np.any(np.diff(axis) <= 0):
            raise ConfigurationError("Pattern axis must be strictly increasing")
        if values.ndim not in (1, 2) or any(size != axis.size for size in values.shape):
            raise ConfigurationError(
                f"Pattern values of shape {values.shape} do not match axis of {axis.size}"
            )
        object.__setattr__(self, 'axis', axis)
        object.__setattr__(self, 'values', values)

    @property
    def dims(self) -> int:
        return self.values.ndim

    @property
    def spacing(self) -> float:
        return float(self.axis[1] - self.axis[0])


class GridService:
    """Axis conversions and criteria shared by all modules"""

    @staticmethod
    def frequency_axis(grid: Grid, wavelength: float, d2: float) -> np.ndarray:
        """
        Map detector displacements to object-plane spatial frequencies

        nu = displacement / (wavelength * d2), one entry per grid sample.
        """
        if not wavelength > 0 or not d2 > 0:
            raise InvalidGeometryError(
                f"Frequency axis needs positive wavelength and d2, got {wavelength}, {d2}"
            )
        return grid.coordinates() / (wavelength * d2)

    @staticmethod
    def fraunhofer_distance(aperture_width: float, wavelength: float) -> float:
        """
        Order-of-magnitude far-field distance z_F = pi * a**2 / wavelength

        a is the full aperture width. Other conventions (2a**2/lambda, half-width
        variants) differ by factors of a few; this one is used everywhere here.
        """
        if not aperture_width > 0 or not wavelength > 0:
            raise InvalidGeometryError("Aperture width and wavelength must be positive")
        return math.pi * aperture_width ** 2 / wavelength

    @staticmethod
    def energy(field: ComplexField) -> float:
        """Sum of |E|**2 * pitch**dims"""
        return float(np.sum(np.abs(field.samples) ** 2) * field.grid.pitch ** field.grid.dims)

    @staticmethod
    def peak_normalized(values: np.ndarray) -> np.ndarray:
        peak = np.max(values)
        if peak <= 0:
            return np.zeros_like(values, dtype=np.float64)
        return np.asarray(values, dtype=np.float64) / peak
