"""
Source Service

Pseudo-thermal light from a rotating ground glass:
- Speckle field generation keyed on (master_seed, realization_index)
- Transverse coherence length and coherence time estimates
- Measured speckle size (autocorrelation FWHM) from a stream of intensity frames

Every sample of the ground glass gets an independent uniform phase, so the
speckle grain seen downstream is set by the illuminated spot alone.
"""
import logging
import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np
from scipy import signal

from core.exceptions import (
    ConfigurationError,
    DegenerateInputError,
    InsufficientStatisticsError,
    InvalidGeometryError,
)
from core.services.grid_service import ComplexField, Grid

logger = logging.getLogger(__name__)

SPEED_OF_LIGHT = 299792458.0
MIN_REALIZATIONS = 100
AMPLITUDE_PROFILES = ('hard_disk', 'gaussian')


@dataclass(frozen=True)
class SpeckleSpec:
    """Illuminated spot on the ground glass"""
    spot_diameter: float
    amplitude_profile: str = 'hard_disk'  # 'hard_disk' or 'gaussian' (1/e^2 diameter)
    phase_model: str = 'uniform'

    def __post_init__(self):
        if not self.spot_diameter > 0:
            raise ConfigurationError(f"Spot diameter must be > 0, got {self.spot_diameter}")
        if self.amplitude_profile not in AMPLITUDE_PROFILES:
            raise ConfigurationError(f"Unknown amplitude profile '{self.amplitude_profile}'")
        if self.phase_model != 'uniform':
            raise ConfigurationError(f"Unknown phase model '{self.phase_model}'")

    def validate_for(self, grid: Grid):
        if self.spot_diameter > grid.span / 2:
            raise ConfigurationError(
                f"Spot diameter {self.spot_diameter:g} m exceeds half the grid span "
                f"({grid.span / 2:g} m)"
            )


@dataclass(frozen=True)
class RealizationSeed:
    """Identifies one speckle realization; the field is a pure function of it"""
    master_seed: int
    realization_index: int

    def __post_init__(self):
        if not 0 <= self.master_seed < 2 ** 64:
            raise ConfigurationError(f"master_seed must fit in 64 bits, got {self.master_seed}")
        if not 0 <= self.realization_index < 2 ** 64:
            raise ConfigurationError(f"realization_index must be >= 0, got {self.realization_index}")

    def generator(self) -> np.random.Generator:
        """Counter-based stream; draw k always lands on sample k"""
        key = np.array([self.master_seed, self.realization_index], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))


class SourceService:
    """Service class for speckle generation and coherence diagnostics"""

    @staticmethod
    def amplitude_profile(spec: SpeckleSpec, grid: Grid) -> np.ndarray:
        """
        Deterministic amplitude of the illuminated spot

        hard_disk is 1 for r <= d0/2 (a slit of width d0 in 1D). gaussian is
        exp(-r**2/w**2) with w = d0/2, so the intensity falls to 1/e**2 at the
        nominal diameter; it is truncated at r = d0.
        """
        radius = grid.radius()
        half = spec.spot_diameter / 2
        if spec.amplitude_profile == 'hard_disk':
            return (radius <= half).astype(np.float64)
        amplitude = np.exp(-(radius / half) ** 2)
        amplitude[radius > spec.spot_diameter] = 0.0
        return amplitude

    @classmethod
    def generate_speckle(cls, spec: SpeckleSpec, grid: Grid, seed: RealizationSeed) -> ComplexField:
        """
        One ground-glass realization

        Args:
            spec: Spot size and profile
            grid: Source-plane grid
            seed: (master_seed, realization_index) pair

        Returns:
            ComplexField profile(x) * exp(i*phi(x)), zero outside the aperture
        """
        spec.validate_for(grid)
        phase = 2 * np.pi * seed.generator().random(grid.shape)
        amplitude = cls.amplitude_profile(spec, grid)
        samples = np.where(amplitude > 0, amplitude * np.exp(1j * phase), 0)
        return ComplexField(grid, samples)

    @staticmethod
    def transverse_coherence_length(wavelength: float, d1: float, d0: float) -> float:
        """Speckle size estimate lambda * d1 / d0 at the object plane"""
        if not (wavelength > 0 and d1 > 0 and d0 > 0):
            raise InvalidGeometryError('Wavelength, d1 and d0 must all be positive')
        return wavelength * d1 / d0

    @staticmethod
    def coherence_time(wavelength: float, resolving_power: float) -> float:
        """tau_c = lambda**2 / (delta_lambda * c) with resolving_power = lambda / delta_lambda"""
        if not (wavelength > 0 and resolving_power > 0):
            raise InvalidGeometryError('Wavelength and resolving power must be positive')
        return wavelength * resolving_power / SPEED_OF_LIGHT

    @staticmethod
    def half_maximum_width(profile: np.ndarray, center: int) -> float:
        """Width in samples where a peak normalized to 1 at center crosses 0.5"""
        def crossing(step: int) -> float:
            index = center
            while 0 <= index + step < profile.size and profile[index + step] >= 0.5:
                index += step
            if not 0 <= index + step < profile.size:
                raise DegenerateInputError('Autocorrelation peak never falls to half maximum')
            inner, outer = profile[index], profile[index + step]
            return index + step * (inner - 0.5) / (inner - outer)

        return crossing(1) - crossing(-1)

    @classmethod
    def autocorrelation_fwhm(cls, intensity_ensemble: Iterable[np.ndarray], grid: Grid,
                             central_fraction: float = 0.5,
                             min_realizations: int = MIN_REALIZATIONS) -> float:
        """
        Measured speckle size from the ensemble intensity autocovariance

        Frames are streamed: only the running sum and the summed
        autocorrelation are kept. The autocovariance is formed from raw
        moments, normalized per lag by the number of sample pairs, and scaled
        to 1 at zero lag.

        Args:
            intensity_ensemble: Iterable of real arrays matching grid
            grid: Grid the frames are sampled on
            central_fraction: Part of each axis used, centered on the origin
            min_realizations: Minimum number of frames

        Returns:
            Full width at half maximum in meters (mean over axes in 2D)
        """
        if not 0 < central_fraction <= 1:
            raise ConfigurationError('central_fraction must lie in (0, 1]')
        keep = max(2, int(round(grid.n * central_fraction)))
        start = grid.n // 2 - keep // 2
        window = tuple(slice(start, start + keep) for _ in range(grid.dims))

        count = 0
        sum_frames = None
        sum_autocorrelation = None
        for frame in intensity_ensemble:
            frame = np.asarray(frame, dtype=np.float64)
            if frame.shape != grid.shape:
                raise ConfigurationError(f"Frame shape {frame.shape} does not match grid {grid.shape}")
            frame = frame[window]
            autocorrelation = signal.correlate(frame, frame, mode='full', method='fft')
            if sum_frames is None:
                sum_frames = np.zeros_like(frame)
                sum_autocorrelation = np.zeros_like(autocorrelation)
            sum_frames += frame
            sum_autocorrelation += autocorrelation
            count += 1

        if count < min_realizations:
            raise InsufficientStatisticsError(
                f"Speckle size needs at least {min_realizations} realizations, got {count}"
            )

        mean = sum_frames / count
        covariance = sum_autocorrelation / count - signal.correlate(mean, mean, mode='full', method='fft')
        lags = np.arange(-(keep - 1), keep)
        pairs = keep - np.abs(lags)
        for axis in range(grid.dims):
            shape = [1] * grid.dims
            shape[axis] = lags.size
            covariance = covariance / pairs.reshape(shape)

        center = (keep - 1,) * grid.dims
        peak = covariance[center]
        if not peak > 1e-9 * float(np.mean(mean)) ** 2:
            raise DegenerateInputError('Intensity ensemble has no fluctuation')
        normalized = covariance / peak

        widths = []
        for axis in range(grid.dims):
            index = list(center)
            index[axis] = slice(None)
            widths.append(cls.half_maximum_width(normalized[tuple(index)], keep - 1))
        fwhm = float(np.mean(widths)) * grid.pitch
        logger.info(f"Speckle FWHM {fwhm:.4g} m from {count} realizations")
        return fwhm
