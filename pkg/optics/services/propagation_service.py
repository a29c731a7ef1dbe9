"""
Propagation Service

Scalar free-space diffraction kernels:
- Band-limited angular spectrum (same grid in and out, zero padded)
- Single-transform Fresnel propagation onto the scaled grid lambda*z/(n*dx)
- Paraxial (Fresnel) transfer-function propagation on a fixed grid
- Thin-lens 2-f system: Fresnel leg, lens phase, Fresnel leg
- Direct quadrature of the Fresnel integral, used as a test oracle

Forward transforms use the exp(-i*2*pi*nu*x) convention throughout.
"""
import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy import fft, interpolate

from core.conf import lab_setting
from core.exceptions import ConfigurationError, InvalidGeometryError, SizeGuardError
from core.services.grid_service import ComplexField, Grid

logger = logging.getLogger(__name__)

METHODS = ('angular_spectrum', 'fresnel_single_step', 'direct_integral')

# Output rows evaluated per matrix block in the direct quadrature
MATRIX_BLOCK_ROWS = 512


@dataclass(frozen=True)
class PropagationPlan:
    """One free-space leg: method, distance and padding"""
    method: str
    distance: float
    wavelength: float
    pad_factor: int = 2

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigurationError(f"Unknown propagation method '{self.method}'")
        if not self.wavelength > 0:
            raise InvalidGeometryError(f"Wavelength must be > 0, got {self.wavelength}")
        if self.method != 'angular_spectrum' and not self.distance > 0:
            raise InvalidGeometryError(f"{self.method} needs a distance > 0, got {self.distance}")
        if self.pad_factor < 1:
            raise ConfigurationError(f"pad_factor must be >= 1, got {self.pad_factor}")


@lru_cache(maxsize=8)
def _transfer_function(dims: int, size: int, pitch: float, distance: float, wavelength: float) -> np.ndarray:
    """Band-limited transfer function in unshifted FFT order (cached per process)"""
    freqs = fft.fftfreq(size, d=pitch)
    # band limit keeps the kernel's local frequency inside the padded window
    delta_f = 1.0 / (size * pitch)
    f_limit = 1.0 / (wavelength * math.sqrt((2 * delta_f * distance) ** 2 + 1))
    nyquist = 0.5 / pitch
    if f_limit < nyquist:
        logger.warning(
            f"Angular spectrum band limit {f_limit:.4g} 1/m is below the grid Nyquist "
            f"frequency {nyquist:.4g} 1/m at z = {distance:g} m; wider angles are dropped"
        )
    if dims == 1:
        f_squared = freqs ** 2
        in_band = np.abs(freqs) <= f_limit
    else:
        fy = freqs[:, np.newaxis]
        fx = freqs[np.newaxis, :]
        f_squared = fx ** 2 + fy ** 2
        in_band = (np.abs(fx) <= f_limit) & (np.abs(fy) <= f_limit)
    argument = 1.0 / wavelength ** 2 - f_squared
    propagating = (argument > 0) & in_band
    transfer = np.zeros(f_squared.shape, dtype=np.complex128)
    transfer[propagating] = np.exp(2j * np.pi * distance * np.sqrt(argument[propagating]))
    transfer.flags.writeable = False
    return transfer


class PropagationService:
    """Service class for free-space and thin-lens propagation"""

    @staticmethod
    def transfer_function(grid: Grid, distance: float, wavelength: float, pad_factor: int = 2) -> np.ndarray:
        """Angular spectrum transfer function on the padded grid of a field"""
        return _transfer_function(grid.dims, grid.n * pad_factor, grid.pitch, float(distance), float(wavelength))

    @staticmethod
    def _pad(samples: np.ndarray, size: int) -> np.ndarray:
        n = samples.shape[0]
        offset = size // 2 - n // 2
        padded = np.zeros((size,) * samples.ndim, dtype=np.complex128)
        padded[tuple(slice(offset, offset + n) for _ in range(samples.ndim))] = samples
        return padded

    @staticmethod
    def _crop(samples: np.ndarray, n: int) -> np.ndarray:
        size = samples.shape[0]
        offset = size // 2 - n // 2
        return samples[tuple(slice(offset, offset + n) for _ in range(samples.ndim))]

    @staticmethod
    def _check_fill(field: ComplexField, pad_factor: int):
        if pad_factor >= 2:
            return
        magnitude = np.abs(field.samples)
        peak = magnitude.max()
        if peak == 0:
            return
        significant = magnitude > 1e-12 * peak
        for axis in range(field.grid.dims):
            other_axes = tuple(a for a in range(field.grid.dims) if a != axis)
            occupied = np.nonzero(np.any(significant, axis=other_axes) if other_axes else significant)[0]
            if occupied[-1] - occupied[0] + 1 > field.grid.n // 2:
                logger.warning(
                    f"Field fills more than half the grid with pad_factor {pad_factor}; "
                    f"periodic wraparound is likely"
                )
                return

    @classmethod
    def angular_spectrum(cls, field: ComplexField, z: float, wavelength: float,
                         pad_factor: int = 2) -> ComplexField:
        """
        Propagate a field by z on its own grid

        H(f) = exp(i*2*pi*z*sqrt(1/lambda**2 - |f|**2)) with evanescent
        components zeroed and the transfer function band-limited so the
        kernel stays inside the padded window. Negative z back-propagates
        with the conjugate transfer function.

        Args:
            field: Input field
            z: Distance in meters (any sign)
            wavelength: Wavelength in meters
            pad_factor: Padded size as a multiple of n

        Returns:
            ComplexField on the input grid
        """
        if not wavelength > 0:
            raise InvalidGeometryError(f"Wavelength must be > 0, got {wavelength}")
        if pad_factor < 1:
            raise ConfigurationError(f"pad_factor must be >= 1, got {pad_factor}")
        if z == 0:
            return ComplexField(field.grid, field.samples)
        cls._check_fill(field, pad_factor)
        grid = field.grid
        size = grid.n * pad_factor
        transfer = cls.transfer_function(grid, z, wavelength, pad_factor)
        axes = tuple(range(grid.dims))
        spectrum = fft.fftn(cls._pad(field.samples, size), axes=axes)
        propagated = fft.ifftn(spectrum * transfer, axes=axes)
        return ComplexField(grid, cls._crop(propagated, grid.n))

    @staticmethod
    def _centered_dft(samples: np.ndarray) -> np.ndarray:
        axes = tuple(range(samples.ndim))
        return fft.fftshift(fft.fftn(fft.ifftshift(samples, axes=axes), axes=axes), axes=axes)

    @staticmethod
    def _squared_radius(grid: Grid) -> np.ndarray:
        return sum(coords ** 2 for coords in grid.mesh())

    @classmethod
    def _fresnel_leg(cls, field: ComplexField, z: float, wavelength: float) -> ComplexField:
        """Fresnel integral as one centred DFT between chirps, onto the pitch lambda*z/(n*dx)"""
        grid = field.grid
        out_grid = Grid(grid.dims, grid.n, wavelength * z / (grid.n * grid.pitch))
        k = 2 * np.pi / wavelength
        chirp_in = np.exp(1j * np.pi * cls._squared_radius(grid) / (wavelength * z))
        chirp_out = np.exp(1j * np.pi * cls._squared_radius(out_grid) / (wavelength * z))
        prefactor = np.exp(1j * k * z) / np.sqrt(1j * wavelength * z) ** grid.dims
        transformed = cls._centered_dft(field.samples * chirp_in) * grid.pitch ** grid.dims
        return ComplexField(out_grid, prefactor * chirp_out * transformed)

    @classmethod
    def fresnel_single_step(cls, field: ComplexField, z: float, wavelength: float) -> ComplexField:
        """
        Single-transform Fresnel propagation

        Output pitch is lambda*z/(n*dx). The input chirp is adequately sampled
        when n*dx**2 <= lambda*z; otherwise a warning is logged.
        """
        if not z > 0 or not wavelength > 0:
            raise InvalidGeometryError(f"Fresnel propagation needs z > 0 and wavelength > 0, got {z}, {wavelength}")
        grid = field.grid
        fresnel_number = (grid.span / 2) ** 2 / (wavelength * z)
        logger.info(f"Single-step Fresnel at z = {z:g} m, Fresnel number {fresnel_number:.3g}")
        if grid.n * grid.pitch ** 2 > wavelength * z:
            logger.warning(
                f"Input chirp undersampled for single-step Fresnel: n*dx^2 = "
                f"{grid.n * grid.pitch ** 2:.3g} m^2 > lambda*z = {wavelength * z:.3g} m^2"
            )
        return cls._fresnel_leg(field, z, wavelength)

    @staticmethod
    def fresnel_transfer(field: ComplexField, z: float, wavelength: float) -> ComplexField:
        """
        Paraxial transfer-function propagation on the field's own grid

        H(f) = exp(i*k*z) * exp(-i*pi*lambda*z*|f|**2), applied without padding
        or band limit, so the convolution is circular over the grid span.
        """
        if not wavelength > 0:
            raise InvalidGeometryError(f"Wavelength must be > 0, got {wavelength}")
        grid = field.grid
        freqs = fft.fftfreq(grid.n, d=grid.pitch)
        if grid.dims == 1:
            f_squared = freqs ** 2
        else:
            f_squared = freqs[:, np.newaxis] ** 2 + freqs[np.newaxis, :] ** 2
        k = 2 * np.pi / wavelength
        transfer = np.exp(1j * k * z) * np.exp(-1j * np.pi * wavelength * z * f_squared)
        axes = tuple(range(grid.dims))
        return ComplexField(grid, fft.ifftn(fft.fftn(field.samples, axes=axes) * transfer, axes=axes))

    @staticmethod
    def lens_prefactor(focal_length: float, wavelength: float, dims: int) -> complex:
        """Constant factor of the 2-f transform: exp(i*2*k*f) / (i*lambda*f)**(dims/2)"""
        k = 2 * np.pi / wavelength
        return np.exp(2j * k * focal_length) / np.sqrt(1j * wavelength * focal_length) ** dims

    @staticmethod
    def _interpolated(field: ComplexField, out_grid: Grid) -> ComplexField:
        """Linear interpolation of real and imaginary parts onto another centred grid"""
        axes = (field.grid.coordinates(),) * field.grid.dims
        mesh = np.meshgrid(*(out_grid.coordinates(),) * out_grid.dims, indexing='ij')
        points = np.stack(mesh, axis=-1)
        parts = [
            interpolate.RegularGridInterpolator(
                axes, part, method='linear', bounds_error=False, fill_value=None,
            )(points)
            for part in (field.samples.real, field.samples.imag)
        ]
        return ComplexField(out_grid, parts[0] + 1j * parts[1])

    @classmethod
    def lens_2f(cls, field: ComplexField, f: float, wavelength: float,
                out_grid: Optional[Grid] = None, pad_factor: int = 1) -> ComplexField:
        """
        Field in the back focal plane of a thin lens, input in the front focal plane

        Propagates f to the lens with a single-step Fresnel leg, applies the lens
        phase exp(-i*pi*|x|**2/(lambda*f)) and propagates f again with the Fresnel
        transfer function. The lens phase cancels the first leg's output chirp and
        the second leg cancels its input chirp, so the result is the scaled Fourier
        transform of the input: output coordinate x maps to input frequency
        x/(lambda*f) on the natural pitch lambda*f/(N*dx), N = n*pad_factor.

        Args:
            field: Input field in the front focal plane
            f: Focal length in meters
            wavelength: Wavelength in meters
            out_grid: Output sampling; N is then chosen so the natural pitch matches
                it, and the field is cropped (or interpolated if it cannot match)
            pad_factor: Zero padding of the input when no out_grid is given

        Returns:
            ComplexField on out_grid (or on the natural grid)
        """
        if not f > 0 or not wavelength > 0:
            raise InvalidGeometryError(f"Lens needs f > 0 and wavelength > 0, got {f}, {wavelength}")
        if pad_factor < 1:
            raise ConfigurationError(f"pad_factor must be >= 1, got {pad_factor}")
        grid = field.grid
        size = grid.n * pad_factor
        if out_grid is not None:
            if out_grid.dims != grid.dims:
                raise ConfigurationError('Output grid dimensionality must match the input field')
            period = wavelength * f / grid.pitch
            if out_grid.span > period * (1 + 1e-9):
                raise ConfigurationError(
                    f"Output grid spans {out_grid.span:g} m but the focal-plane field repeats "
                    f"every lambda*f/dx = {period:g} m"
                )
            size = max(grid.n, int(round(period / out_grid.pitch)))

        padded = ComplexField(Grid(grid.dims, size, grid.pitch), cls._pad(field.samples, size))
        at_lens = cls._fresnel_leg(padded, f, wavelength)
        lens_phase = np.exp(-1j * np.pi * cls._squared_radius(at_lens.grid) / (wavelength * f))
        focal = cls.fresnel_transfer(ComplexField(at_lens.grid, at_lens.samples * lens_phase), f, wavelength)
        if out_grid is None:
            return focal
        if math.isclose(focal.grid.pitch, out_grid.pitch, rel_tol=1e-9) and out_grid.n <= size:
            return ComplexField(out_grid, cls._crop(focal.samples, out_grid.n))
        logger.info(
            f"Interpolating the focal-plane field from pitch {focal.grid.pitch:.4g} m "
            f"onto {out_grid.pitch:.4g} m"
        )
        return cls._interpolated(focal, out_grid)

    @staticmethod
    def _separable_apply(samples: np.ndarray, kernel_rows) -> np.ndarray:
        """Apply a 1D kernel (built block by block) along every axis"""
        result = samples
        for axis in range(samples.ndim):
            moved = np.moveaxis(result, axis, 0)
            blocks = [kernel @ moved.reshape(moved.shape[0], -1) for kernel in kernel_rows()]
            stacked = np.concatenate(blocks, axis=0).reshape((-1,) + moved.shape[1:])
            result = np.moveaxis(stacked, 0, axis)
        return result

    @classmethod
    def direct_integral_oracle(cls, field: ComplexField, z: float, wavelength: float,
                               out_grid: Grid) -> ComplexField:
        """
        Brute-force quadrature of the Fresnel integral

        E_out(v) = exp(i*k*z)/sqrt(i*lambda*z)**dims * sum_u E(u) exp(i*pi*|v-u|**2/(lambda*z)) * dx**dims

        No transforms are used. Refuses when the number of input-output sample
        pairs exceeds ORACLE_MAX_SAMPLES.
        """
        if not z > 0 or not wavelength > 0:
            raise InvalidGeometryError(f"Oracle needs z > 0 and wavelength > 0, got {z}, {wavelength}")
        grid = field.grid
        if out_grid.dims != grid.dims:
            raise ConfigurationError('Output grid dimensionality must match the input field')
        pairs = (grid.n * out_grid.n) ** grid.dims
        limit = lab_setting('ORACLE_MAX_SAMPLES')
        if pairs > limit:
            raise SizeGuardError(
                f"Direct integral needs {pairs:.3g} sample pairs (limit {limit:.3g}); "
                f"subsample the input or shrink the output grid"
            )
        in_coords = grid.coordinates()
        out_coords = out_grid.coordinates()

        def kernel_rows():
            for start in range(0, out_grid.n, MATRIX_BLOCK_ROWS):
                v = out_coords[start:start + MATRIX_BLOCK_ROWS, np.newaxis]
                yield np.exp(1j * np.pi * (v - in_coords[np.newaxis, :]) ** 2 / (wavelength * z))

        k = 2 * np.pi / wavelength
        prefactor = np.exp(1j * k * z) / np.sqrt(1j * wavelength * z) ** grid.dims
        summed = cls._separable_apply(field.samples, kernel_rows) * grid.pitch ** grid.dims
        return ComplexField(out_grid, prefactor * summed)

    @classmethod
    def apply(cls, plan: PropagationPlan, field: ComplexField, out_grid: Optional[Grid] = None) -> ComplexField:
        """Run one propagation plan"""
        if plan.method == 'angular_spectrum':
            return cls.angular_spectrum(field, plan.distance, plan.wavelength, plan.pad_factor)
        if plan.method == 'fresnel_single_step':
            return cls.fresnel_single_step(field, plan.distance, plan.wavelength)
        return cls.direct_integral_oracle(field, plan.distance, plan.wavelength, out_grid or field.grid)
