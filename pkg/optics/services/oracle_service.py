"""
Oracle Service

Independent references for the patterns the simulator must reproduce:
- Fraunhofer modulus |T(nu)|**2 of any transmission by direct summation
- Analytic sinc**2 * cos**2 double-slit pattern
- Pattern comparison metrics (RMS error, peak offsets, fringe period)

Nothing here uses a fast transform on the object; the oracle shares no code
path with the propagation kernels.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy import fft, interpolate, signal

from core.conf import lab_setting
from core.exceptions import ConfigurationError, SizeGuardError
from core.services.grid_service import GridService, Pattern
from optics.services.object_service import Transmission

logger = logging.getLogger(__name__)

PROVENANCES = ('analytic', 'quadrature')
SUMMATION_BLOCK_ROWS = 256
SPECTRUM_ZERO_PAD = 16


@dataclass(frozen=True)
class OraclePattern(Pattern):
    """Reference pattern with its provenance"""
    provenance: str = 'quadrature'

    def __post_init__(self):
        super().__post_init__()
        if self.provenance not in PROVENANCES:
            raise ConfigurationError(f"Unknown oracle provenance '{self.provenance}'")


@dataclass
class ComparisonMetrics:
    """Agreement between a pattern and a reference"""
    rms_error: float
    peak_offsets: List[float]
    peak_offsets_samples: List[int]
    fringe_periods: List[float]
    overlap: Tuple[float, float]
    samples_compared: int
    axis_kind: str = 'frequency'
    extras: Dict[str, float] = field(default_factory=dict)

    def as_dict(self) -> Dict:
        return {
            'rms_error': self.rms_error,
            'peak_offsets': list(self.peak_offsets),
            'peak_offsets_samples': list(self.peak_offsets_samples),
            'fringe_periods': list(self.fringe_periods),
            'overlap': list(self.overlap),
            'samples_compared': self.samples_compared,
            'axis_kind': self.axis_kind,
            **self.extras,
        }


class OracleService:
    """Service class for reference diffraction patterns and comparisons"""

    @staticmethod
    def _direct_sum_axis(values: np.ndarray, axis: int, positions: np.ndarray,
                         nu: np.ndarray) -> np.ndarray:
        """sum_x values * exp(-i*2*pi*nu*x) along one axis, block by block"""
        moved = np.moveaxis(values, axis, 0)
        flat = moved.reshape(moved.shape[0], -1)
        rows = []
        for start in range(0, nu.size, SUMMATION_BLOCK_ROWS):
            block = nu[start:start + SUMMATION_BLOCK_ROWS, np.newaxis]
            rows.append(np.exp(-2j * np.pi * block * positions[np.newaxis, :]) @ flat)
        summed = np.concatenate(rows, axis=0).reshape((nu.size,) + moved.shape[1:])
        return np.moveaxis(summed, 0, axis)

    @classmethod
    def transmission_spectrum(cls, obj: Transmission, nu: np.ndarray) -> np.ndarray:
        """
        T(nu) = sum_x t(x) exp(-i*2*pi*nu*x) * pitch**dims by direct summation

        Only rows and columns holding non-zero transmission enter the sum. In 2D
        the same frequency list is used along both axes.
        """
        nu = np.asarray(nu, dtype=np.float64)
        if nu.ndim != 1 or not np.all(np.isfinite(nu)):
            raise ConfigurationError('Frequency axis must be a finite 1D array')
        grid = obj.grid
        coords = grid.coordinates()
        values = obj.t
        pairs = 0
        for axis in range(grid.dims):
            other_axes = tuple(a for a in range(grid.dims) if a != axis)
            open_mask = np.any(values != 0, axis=other_axes) if other_axes else values != 0
            pairs += int(np.count_nonzero(open_mask)) * nu.size
        limit = lab_setting('FRAUNHOFER_MAX_PAIRS')
        if pairs > limit:
            raise SizeGuardError(
                f"Fraunhofer summation needs {pairs:.3g} sample pairs (limit {limit:.3g}); "
                f"use a shorter frequency axis"
            )
        for axis in range(grid.dims):
            other_axes = tuple(a for a in range(grid.dims) if a != axis)
            open_mask = np.any(values != 0, axis=other_axes) if other_axes else values != 0
            values = np.compress(open_mask, values, axis=axis)
            values = cls._direct_sum_axis(values, axis, coords[open_mask], nu)
        return values * grid.pitch ** grid.dims

    @classmethod
    def fraunhofer_modulus(cls, obj: Transmission, wavelength: float, d2: float,
                           out_axis: Optional[np.ndarray] = None) -> OraclePattern:
        """
        Far-field pattern |T(nu)|**2 of an object, peak-normalized

        Args:
            obj: Object transmission
            wavelength: Wavelength in meters
            d2: Object-to-detector distance in meters
            out_axis: Detector displacements in meters; defaults to the object grid

        Returns:
            OraclePattern on the frequency axis nu = displacement/(lambda*d2)
        """
        if out_axis is None:
            nu = GridService.frequency_axis(obj.grid, wavelength, d2)
        else:
            out_axis = np.asarray(out_axis, dtype=np.float64)
            if not np.all(np.isfinite(out_axis)):
                raise ConfigurationError('Output axis must be finite')
            nu = out_axis / (wavelength * d2)
        intensity = np.abs(cls.transmission_spectrum(obj, nu)) ** 2
        return OraclePattern(
            axis=nu, values=GridService.peak_normalized(intensity),
            axis_kind='frequency', provenance='quadrature',
        )

    @staticmethod
    def analytic_double_slit(width: float, separation: float, nu) -> np.ndarray:
        """[sinc(pi*a*nu)]**2 * [cos(pi*s*nu)]**2 with value 1 at nu = 0"""
        if not width > 0 or not separation > 0:
            raise ConfigurationError('Slit width and separation must be positive')
        nu = np.asarray(nu, dtype=np.float64)
        # np.sinc(x) is sin(pi*x)/(pi*x)
        return np.sinc(width * nu) ** 2 * np.cos(np.pi * separation * nu) ** 2

    @classmethod
    def analytic_double_slit_pattern(cls, width: float, separation: float, nu: np.ndarray) -> OraclePattern:
        return OraclePattern(
            axis=nu, values=cls.analytic_double_slit(width, separation, nu),
            axis_kind='frequency', provenance='analytic',
        )

    # ---------------------------------------------------------------- compare

    @staticmethod
    def resample(reference: Pattern, axis: np.ndarray, dims: int) -> np.ndarray:
        if dims == 1:
            return np.interp(axis, reference.axis, reference.values)
        interpolator = interpolate.RegularGridInterpolator(
            (reference.axis, reference.axis), reference.values, method='linear',
            bounds_error=False, fill_value=None,
        )
        yy, xx = np.meshgrid(axis, axis, indexing='ij')
        return interpolator(np.stack([yy, xx], axis=-1))

    @staticmethod
    def _strongest_peaks(values: np.ndarray, count: int) -> np.ndarray:
        peaks, properties = signal.find_peaks(values, height=0)
        if not peaks.size:
            return np.array([int(np.argmax(values))])
        order = np.argsort(properties['peak_heights'])[::-1][:count]
        return np.sort(peaks[order])

    @staticmethod
    def dominant_period(values: np.ndarray, spacing: float) -> float:
        """
        Period of the strongest non-DC Fourier component of a 1D profile

        The profile is mean-removed and zero padded; the spectrum is searched
        past the first minimum following the DC lobe.
        """
        values = np.asarray(values, dtype=np.float64)
        size = values.size * SPECTRUM_ZERO_PAD
        spectrum = np.abs(fft.rfft(values - values.mean(), n=size))
        freqs = fft.rfftfreq(size, d=spacing)
        start = 1
        while start < spectrum.size - 1 and spectrum[start + 1] <= spectrum[start]:
            start += 1
        if start >= spectrum.size - 1:
            return float('nan')
        index = start + int(np.argmax(spectrum[start:]))
        if freqs[index] <= 0:
            return float('nan')
        return float(1.0 / freqs[index])

    @classmethod
    def compare(cls, pattern: Pattern, reference: Pattern, k_peaks: int = 5) -> ComparisonMetrics:
        """
        Quantify agreement between a pattern and a reference

        The reference is linearly resampled onto the pattern axis over the
        overlap of both axes.

        Args:
            pattern: Pattern under test
            reference: Reference pattern (oracle or another run)
            k_peaks: Number of strongest local maxima whose offsets are reported

        Returns:
            ComparisonMetrics (RMS error as a fraction of the pattern peak)
        """
        if pattern.axis_kind != reference.axis_kind:
            raise ConfigurationError(
                f"Cannot compare a {pattern.axis_kind} axis with a {reference.axis_kind} axis"
            )
        if pattern.dims != reference.dims:
            raise ConfigurationError('Cannot compare patterns of different dimensionality')
        low = max(pattern.axis[0], reference.axis[0])
        high = min(pattern.axis[-1], reference.axis[-1])
        inside = (pattern.axis >= low) & (pattern.axis <= high)
        if not low < high or np.count_nonzero(inside) < 2:
            raise ConfigurationError('Pattern axes do not overlap')

        axis = pattern.axis[inside]
        window = np.ix_(*([inside] * pattern.dims))
        values = pattern.values[window]
        resampled = cls.resample(reference, axis, pattern.dims)
        peak = float(np.max(values))
        difference = values - resampled
        rms = float(np.sqrt(np.mean(difference ** 2)) / peak) if peak > 0 else float('inf')

        spacing = float(axis[1] - axis[0])
        profiles = [values] if pattern.dims == 1 else [
            values[values.shape[0] // 2, :],
            values[:, values.shape[1] // 2],
        ]
        reference_profiles = [resampled] if pattern.dims == 1 else [
            resampled[resampled.shape[0] // 2, :],
            resampled[:, resampled.shape[1] // 2],
        ]
        offsets_samples: List[int] = []
        for profile, reference_profile in zip(profiles, reference_profiles):
            reference_peaks = cls._strongest_peaks(reference_profile, max(k_peaks, 1) * 2)
            for index in cls._strongest_peaks(profile, k_peaks):
                nearest = reference_peaks[np.argmin(np.abs(reference_peaks - index))]
                offsets_samples.append(int(index - nearest))
        periods = [cls.dominant_period(profile, spacing) for profile in profiles]
        logger.info(f"Compared {values.size} samples: RMS {rms:.4g} of peak")
        return ComparisonMetrics(
            rms_error=rms,
            peak_offsets=[offset * spacing for offset in offsets_samples],
            peak_offsets_samples=offsets_samples,
            fringe_periods=periods,
            overlap=(float(low), float(high)),
            samples_compared=int(values.size),
            axis_kind=pattern.axis_kind,
        )
