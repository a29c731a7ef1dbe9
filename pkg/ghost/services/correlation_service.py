"""
Correlation Service

Streaming estimation of intensity-fluctuation correlations between the two arms:
- CorrelationAccumulator: raw-moment sums over realizations, mergeable
- Fixed-point estimator: reference image against one test-detector pixel
- Shift-averaged estimator: all detector pairs at a common displacement
- g2(0) diagnostic from per-sample second moments
- Checkpoints in the binary array container

Covariances are formed from raw moments at finalize time, so accumulation is
single pass and merging is plain addition.
"""
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import signal

from core.exceptions import (
    ConfigurationError,
    DegenerateInputError,
    FormatError,
    InsufficientStatisticsError,
)
from core.services.array_io_service import ArrayIOService
from core.services.grid_service import Grid, GridService, Pattern

logger = logging.getLogger(__name__)

ESTIMATORS = ('fixed_point', 'shift_averaged')
MIN_G2_REALIZATIONS = 100

FLAG_XCORR = 1
FLAG_DIAGNOSTICS = 2

# Integer progress fields stored after the fixed checkpoint header
CHECKPOINT_PROGRESS_FIELDS = ('blocks_done', 'block_size', 'realizations', 'seed_high', 'seed_low')
CHECKPOINT_VERSION = 2.0

Point = Union[float, Tuple[float, ...]]


def normalize_point(point: Point, dims: int) -> Tuple[float, ...]:
    """(x,) in 1D and (y, x) in 2D; a scalar in 2D means (0, x)"""
    if np.isscalar(point):
        coords = (float(point),) if dims == 1 else (0.0, float(point))
    else:
        coords = tuple(float(value) for value in point)
    if len(coords) != dims:
        raise ConfigurationError(f"Test point {point} has {len(coords)} coordinates on a {dims}D grid")
    return coords


@dataclass
class CorrelationAccumulator:
    """Single-writer running sums; combine accumulators with merge or +"""
    grid: Grid
    wavelength: float
    d2: float
    test_points: Tuple[Point, ...] = (0.0,)
    track_xcorr: bool = True
    diagnostics: bool = False
    n: int = 0
    sum_t: np.ndarray = field(default=None, repr=False)
    sum_r: np.ndarray = field(default=None, repr=False)
    sum_cross_fixed: np.ndarray = field(default=None, repr=False)
    sum_xcorr: Optional[np.ndarray] = field(default=None, repr=False)
    sum_r2: Optional[np.ndarray] = field(default=None, repr=False)
    sum_t2: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        self.test_points = tuple(normalize_point(point, self.grid.dims) for point in self.test_points)
        if not self.test_points:
            raise ConfigurationError('At least one fixed test point is required')
        shape = self.grid.shape
        if self.sum_t is None:
            self.sum_t = np.zeros(shape)
        if self.sum_r is None:
            self.sum_r = np.zeros(shape)
        if self.sum_cross_fixed is None:
            self.sum_cross_fixed = np.zeros((len(self.test_points),) + shape)
        if self.track_xcorr and self.sum_xcorr is None:
            self.sum_xcorr = np.zeros(shape)
        if self.diagnostics and self.sum_r2 is None:
            self.sum_r2 = np.zeros(shape)
            self.sum_t2 = np.zeros(shape)
        self.test_indices = tuple(self._point_index(point) for point in self.test_points)

    def _point_index(self, point: Point) -> Tuple[int, ...]:
        """Sample index of a detector point; a scalar in 2D means (y = 0, x = point)"""
        return tuple(self.grid.index_of(coord) for coord in normalize_point(point, self.grid.dims))

    @property
    def flags(self) -> int:
        return (FLAG_XCORR if self.track_xcorr else 0) | (FLAG_DIAGNOSTICS if self.diagnostics else 0)

    def same_geometry(self, other: 'CorrelationAccumulator') -> bool:
        return (
            self.grid.is_compatible(other.grid)
            and self.test_points == other.test_points
            and self.flags == other.flags
            and self.wavelength == other.wavelength
            and self.d2 == other.d2
        )

    def __add__(self, other: 'CorrelationAccumulator') -> 'CorrelationAccumulator':
        return CorrelationService.merge(self, other)


@dataclass
class GhostResult:
    """Finalized ghost-diffraction pattern, peak-normalized on the frequency axis"""
    pattern: Pattern
    estimator: str
    n_used: int
    residual_vs_oracle: Optional[float] = None
    clamp_minimum: float = 0.0
    raw_peak: float = 0.0
    raw: np.ndarray = field(default=None, repr=False)
    test_point: Optional[Point] = None


class CorrelationService:
    """Service class for accumulating and finalizing intensity correlations"""

    @staticmethod
    def empty(grid: Grid, wavelength: float, d2: float, test_points: Sequence[Point] = (0.0,),
              track_xcorr: bool = True, diagnostics: bool = False) -> CorrelationAccumulator:
        """Accumulator with n = 0 (the identity of merge)"""
        return CorrelationAccumulator(
            grid=grid, wavelength=wavelength, d2=d2, test_points=tuple(test_points),
            track_xcorr=track_xcorr, diagnostics=diagnostics,
        )

    @staticmethod
    def central_lags(size: int) -> slice:
        """Slice of a full correlation holding lags -size//2 .. size - size//2 - 1"""
        zero_lag = size - 1
        start = zero_lag - size // 2
        return slice(start, start + size)

    @classmethod
    def cross_correlation(cls, i_ref: np.ndarray, i_test: np.ndarray) -> np.ndarray:
        """
        c(delta) = sum_u i_ref(u + delta) * i_test(u), linear (zero padded)

        Only the lags matching the detector grid coordinates are returned.
        """
        full = signal.correlate(i_ref, i_test, mode='full', method='fft')
        window = tuple(cls.central_lags(size) for size in i_ref.shape)
        return full[window]

    @staticmethod
    def pair_counts(grid: Grid) -> np.ndarray:
        """Number of sample pairs contributing to each central lag"""
        lags = np.abs(grid.coordinates() / grid.pitch).round()
        counts = grid.n - lags
        if grid.dims == 1:
            return counts
        return np.outer(counts, counts)

    @classmethod
    def accumulate(cls, acc: CorrelationAccumulator, i_test: np.ndarray,
                   i_ref: np.ndarray) -> CorrelationAccumulator:
        """
        Add one realization's detector images

        Args:
            acc: Accumulator, updated in place
            i_test: Test-arm intensity on the accumulator grid
            i_ref: Reference-arm intensity on the accumulator grid

        Returns:
            The same accumulator
        """
        shape = acc.grid.shape
        if np.shape(i_test) != shape or np.shape(i_ref) != shape:
            raise ConfigurationError(
                f"Arm images {np.shape(i_test)} / {np.shape(i_ref)} do not match accumulator grid {shape}"
            )
        acc.n += 1
        acc.sum_t += i_test
        acc.sum_r += i_ref
        for slot, index in enumerate(acc.test_indices):
            acc.sum_cross_fixed[slot] += i_ref * i_test[index]
        if acc.track_xcorr:
            acc.sum_xcorr += cls.cross_correlation(i_ref, i_test)
        if acc.diagnostics:
            acc.sum_r2 += i_ref ** 2
            acc.sum_t2 += i_test ** 2
        return acc

    @staticmethod
    def merge(a: CorrelationAccumulator, b: CorrelationAccumulator) -> CorrelationAccumulator:
        """Component-wise sum of two accumulators with the same geometry"""
        if not a.same_geometry(b):
            raise ConfigurationError('Cannot merge accumulators with different geometry or flags')

        def add(left, right):
            return None if left is None else left + right

        return CorrelationAccumulator(
            grid=a.grid, wavelength=a.wavelength, d2=a.d2, test_points=a.test_points,
            track_xcorr=a.track_xcorr, diagnostics=a.diagnostics,
            n=a.n + b.n,
            sum_t=a.sum_t + b.sum_t,
            sum_r=a.sum_r + b.sum_r,
            sum_cross_fixed=a.sum_cross_fixed + b.sum_cross_fixed,
            sum_xcorr=add(a.sum_xcorr, b.sum_xcorr),
            sum_r2=add(a.sum_r2, b.sum_r2),
            sum_t2=add(a.sum_t2, b.sum_t2),
        )

    @staticmethod
    def _require_statistics(acc: CorrelationAccumulator, minimum: int = 2):
        if acc.n < minimum:
            raise InsufficientStatisticsError(f"Need at least {minimum} realizations, have {acc.n}")

    @staticmethod
    def _normalized(acc: CorrelationAccumulator, covariance: np.ndarray, estimator: str,
                    test_point: Optional[Point] = None) -> GhostResult:
        """Peak-normalize, clamp negative noise to 0 and attach the frequency axis"""
        axis = GridService.frequency_axis(acc.grid, acc.wavelength, acc.d2)
        peak = float(np.max(covariance))
        if peak <= 0:
            logger.warning(f"{estimator} covariance has no positive values after {acc.n} realizations")
            values = np.zeros_like(covariance)
            minimum = 0.0
        else:
            values = covariance / peak
            minimum = float(np.min(values))
            if minimum < 0:
                logger.info(f"{estimator}: clamped negative values down to {minimum:.3g} of peak")
                values = np.clip(values, 0.0, 1.0)
        return GhostResult(
            pattern=Pattern(axis=axis, values=values, axis_kind='frequency'),
            estimator=estimator,
            n_used=acc.n,
            clamp_minimum=min(minimum, 0.0),
            raw_peak=peak,
            raw=covariance,
            test_point=test_point,
        )

    @classmethod
    def finalize_fixed_point(cls, acc: CorrelationAccumulator, x_t0: Optional[Point] = None) -> GhostResult:
        """
        G(x_r) = <I_r(x_r) I_t(x_t0)> - <I_r(x_r)><I_t(x_t0)>

        Args:
            acc: Accumulator holding the fixed point
            x_t0: One of the configured test points (defaults to the first)

        Returns:
            GhostResult on the axis nu = x_r/(lambda*d2)
        """
        cls._require_statistics(acc)
        if x_t0 is None:
            x_t0 = acc.test_points[0]
        index = acc._point_index(x_t0)
        if index not in acc.test_indices:
            raise ConfigurationError(
                f"Test point {x_t0} m was not accumulated (configured: {list(acc.test_points)})"
            )
        slot = acc.test_indices.index(index)
        n = acc.n
        covariance = acc.sum_cross_fixed[slot] / n - (acc.sum_r / n) * (acc.sum_t[index] / n)
        coords = normalize_point(x_t0, acc.grid.dims)
        test_point = coords[0] if acc.grid.dims == 1 else coords
        return cls._normalized(acc, covariance, 'fixed_point', test_point=test_point)

    @classmethod
    def finalize_shift_averaged(cls, acc: CorrelationAccumulator) -> GhostResult:
        """
        Covariance averaged over all detector pairs at displacement delta

        G(delta) = [sum_xcorr/n - xcorr(<I_r>, <I_t>)](delta) / pairs(delta)
        """
        cls._require_statistics(acc)
        if not acc.track_xcorr:
            raise ConfigurationError('Shift-averaged estimator needs cross-correlation sums')
        n = acc.n
        mean_r = acc.sum_r / n
        mean_t = acc.sum_t / n
        covariance = (acc.sum_xcorr / n - cls.cross_correlation(mean_r, mean_t)) / cls.pair_counts(acc.grid)
        return cls._normalized(acc, covariance, 'shift_averaged')

    @classmethod
    def finalize(cls, acc: CorrelationAccumulator, estimator: str) -> GhostResult:
        if estimator == 'fixed_point':
            return cls.finalize_fixed_point(acc)
        if estimator == 'shift_averaged':
            return cls.finalize_shift_averaged(acc)
        raise ConfigurationError(f"Unknown estimator '{estimator}'")

    @classmethod
    def g2_at_zero(cls, acc: CorrelationAccumulator, x: Point = 0.0, arm: str = 'reference') -> float:
        """<I**2>/<I>**2 at one detector sample (2.0 for polarized thermal light)"""
        if not acc.diagnostics:
            raise ConfigurationError('g2 needs the diagnostic second-moment sums')
        cls._require_statistics(acc, MIN_G2_REALIZATIONS)
        index = acc._point_index(x)
        if arm == 'reference':
            first, second = acc.sum_r[index], acc.sum_r2[index]
        elif arm == 'test':
            first, second = acc.sum_t[index], acc.sum_t2[index]
        else:
            raise ConfigurationError(f"Unknown arm '{arm}'")
        mean = first / acc.n
        if mean <= 0:
            raise DegenerateInputError(f"No {arm}-arm intensity at {x}")
        return float((second / acc.n) / mean ** 2)

    # ---------------------------------------------------------------- checkpoints

    @staticmethod
    def save_checkpoint(acc: CorrelationAccumulator, path, progress: Optional[Dict[str, int]] = None):
        """
        Write all sums plus integer progress fields, replacing the file atomically

        Record 0 is the f64 header: version, n, flags, wavelength, d2, dims, grid n,
        pitch, number of test points, the test-point coordinates (dims per point), then
        the progress fields.
        """
        progress = progress or {}
        header = [
            CHECKPOINT_VERSION, acc.n, acc.flags, acc.wavelength, acc.d2,
            acc.grid.dims, acc.grid.n, acc.grid.pitch, len(acc.test_points),
            *(coord for point in acc.test_points for coord in point),
        ]
        header += [float(progress.get(name, 0)) for name in CHECKPOINT_PROGRESS_FIELDS]
        records = [np.array(header, dtype=np.float64), acc.sum_t, acc.sum_r, acc.sum_cross_fixed]
        if acc.track_xcorr:
            records.append(acc.sum_xcorr)
        if acc.diagnostics:
            records += [acc.sum_r2, acc.sum_t2]
        path = Path(path)
        temporary = path.with_name(path.name + '.partial')
        ArrayIOService.write_records(temporary, records)
        os.replace(temporary, path)

    @staticmethod
    def load_checkpoint(path) -> Tuple[CorrelationAccumulator, Dict[str, int]]:
        """Inverse of save_checkpoint"""
        records = ArrayIOService.read_records(path)
        header = records[0]
        if header.ndim != 1 or header.size < 9 or header[0] != CHECKPOINT_VERSION:
            raise FormatError(f"{path} is not a correlation checkpoint")
        n, flags = int(header[1]), int(header[2])
        wavelength, d2 = float(header[3]), float(header[4])
        grid = Grid(int(header[5]), int(header[6]), float(header[7]))
        point_count = int(header[8])
        coord_count = point_count * grid.dims
        expected_header = 9 + coord_count + len(CHECKPOINT_PROGRESS_FIELDS)
        if header.size != expected_header:
            raise FormatError(f"{path}: checkpoint header has {header.size} fields, expected {expected_header}")
        test_points = tuple(
            tuple(float(value) for value in header[start:start + grid.dims])
            for start in range(9, 9 + coord_count, grid.dims)
        )
        progress = {
            name: int(value)
            for name, value in zip(CHECKPOINT_PROGRESS_FIELDS, header[9 + coord_count:])
        }
        track_xcorr = bool(flags & FLAG_XCORR)
        diagnostics = bool(flags & FLAG_DIAGNOSTICS)
        expected_records = 4 + int(track_xcorr) + 2 * int(diagnostics)
        if len(records) != expected_records:
            raise FormatError(f"{path}: expected {expected_records} records, found {len(records)}")
        sums = iter(records[1:])
        acc = CorrelationAccumulator(
            grid=grid, wavelength=wavelength, d2=d2, test_points=test_points,
            track_xcorr=track_xcorr, diagnostics=diagnostics, n=n,
            sum_t=next(sums), sum_r=next(sums), sum_cross_fixed=next(sums),
            sum_xcorr=next(sums) if track_xcorr else None,
            sum_r2=next(sums) if diagnostics else None,
            sum_t2=next(sums) if diagnostics else None,
        )
        if acc.sum_t.shape != grid.shape or acc.sum_cross_fixed.shape != (point_count,) + grid.shape:
            raise FormatError(f"{path}: sum arrays do not match the checkpoint grid")
        return acc, progress
