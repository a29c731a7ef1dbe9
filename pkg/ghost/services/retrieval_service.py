"""
Retrieval Service

Iterative phase retrieval from a Fourier modulus:
- Error Reduction (alternating projections)
- Hybrid Input-Output with feedback, followed by an optional ER polish
- Mapping a ghost pattern onto the conjugate object grid
- Reconstruction error and correlation up to the trivial ambiguities
  (translation, flip with conjugation, global complex factor)

All transforms are centred and unitary, so Fourier-domain and object-domain
distances are the same number.
"""
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import List, Optional, Tuple

import numpy as np
from scipy import fft

from core.conf import lab_setting
from core.exceptions import ConfigurationError, DegenerateInputError
from core.services.grid_service import Grid, Pattern
from optics.services.object_service import Transmission
from optics.services.oracle_service import OracleService

logger = logging.getLogger(__name__)

ALGORITHMS = ('hio', 'er')
MODES = ('amplitude', 'phase')
CONVERGED_ERROR = 1e-10
STAGNATION_CHANGE = 1e-8


@dataclass(frozen=True)
class RetrievalProblem:
    """Target Fourier modulus, object support and iteration settings"""
    modulus: np.ndarray = field(repr=False)
    support: np.ndarray = field(repr=False)
    max_iterations: int = 500
    beta: float = 0.9
    init_seed: int = 0
    mode: str = 'amplitude'
    initial: Optional[np.ndarray] = field(default=None, repr=False)
    grid: Optional[Grid] = None

    def __post_init__(self):
        modulus = np.asarray(self.modulus, dtype=np.float64)
        support = np.asarray(self.support, dtype=bool)
        if modulus.shape != support.shape:
            raise ConfigurationError(f"Modulus {modulus.shape} and support {support.shape} differ in shape")
        if not np.all(np.isfinite(modulus)) or np.any(modulus < 0):
            raise ConfigurationError('Modulus must be finite and non-negative')
        if not support.any():
            raise ConfigurationError('Support is empty')
        if support.all():
            raise ConfigurationError('Support covers the whole grid; it constrains nothing')
        if self.max_iterations < 0:
            raise ConfigurationError('max_iterations must be >= 0')
        if not 0 <= self.beta <= 1:
            raise ConfigurationError(f"beta must lie in [0, 1], got {self.beta}")
        if self.mode not in MODES:
            raise ConfigurationError(f"Unknown retrieval mode '{self.mode}'")
        if self.initial is not None and np.shape(self.initial) != modulus.shape:
            raise ConfigurationError('Initial estimate does not match the modulus shape')
        object.__setattr__(self, 'modulus', modulus)
        object.__setattr__(self, 'support', support)


@dataclass
class RetrievalReport:
    """Outcome of one retrieval run"""
    estimate: np.ndarray = field(repr=False)
    fourier_error_history: List[float] = field(repr=False)
    iterations_run: int
    algorithm: str = 'er'
    init_seed: int = 0
    best_iteration: int = 0

    @property
    def fourier_error(self) -> float:
        return self.fourier_error_history[self.best_iteration]


def _run_restart(task) -> RetrievalReport:
    problem, algorithm, polish_iterations = task
    return RetrievalService.retrieve(problem, algorithm, polish_iterations)


class RetrievalService:
    """Service class for phase retrieval on ghost-diffraction moduli"""

    @staticmethod
    def forward(values: np.ndarray) -> np.ndarray:
        """Centred unitary DFT (frequency 0 at index n//2)"""
        axes = tuple(range(values.ndim))
        return fft.fftshift(fft.fftn(fft.ifftshift(values, axes=axes), axes=axes, norm='ortho'), axes=axes)

    @staticmethod
    def inverse(spectrum: np.ndarray) -> np.ndarray:
        axes = tuple(range(spectrum.ndim))
        return fft.fftshift(fft.ifftn(fft.ifftshift(spectrum, axes=axes), axes=axes, norm='ortho'), axes=axes)

    # ---------------------------------------------------------------- problem setup

    @staticmethod
    def conjugate_grid(detector: Grid, wavelength: float, d2: float) -> Grid:
        """Object grid whose centred DFT frequencies fall on the detector axis nu = x/(lambda*d2)"""
        return Grid(detector.dims, detector.n, wavelength * d2 / (detector.n * detector.pitch))

    @classmethod
    def modulus_from_pattern(cls, pattern: Pattern, wavelength: float, d2: float) -> Tuple[np.ndarray, Grid]:
        """
        Square root of a ghost pattern, resampled onto the DFT axis of the conjugate grid

        Args:
            pattern: Peak-normalized pattern on a frequency or displacement axis
            wavelength: Wavelength in meters
            d2: Object-to-detector distance in meters

        Returns:
            (modulus, conjugate object grid)
        """
        axis = pattern.axis if pattern.axis_kind == 'frequency' else pattern.axis / (wavelength * d2)
        frequency_pattern = Pattern(axis=axis, values=np.clip(pattern.values, 0.0, None), axis_kind='frequency')
        n = axis.size
        spacing = float(axis[1] - axis[0])
        grid = Grid(pattern.dims, n, 1.0 / (n * spacing))
        dft_axis = (np.arange(n) - n // 2) * spacing
        resampled = OracleService.resample(frequency_pattern, dft_axis, pattern.dims)
        back = OracleService.resample(
            Pattern(axis=dft_axis, values=resampled, axis_kind='frequency'), axis, pattern.dims,
        )
        peak = float(np.max(frequency_pattern.values))
        residual = float(np.sqrt(np.mean((back - frequency_pattern.values) ** 2)) / peak) if peak > 0 else 0.0
        logger.info(f"Modulus resampled onto the conjugate grid (pitch {grid.pitch:.4g} m), residual {residual:.3g} of peak")
        return np.sqrt(np.clip(resampled, 0.0, None)), grid

    @staticmethod
    def support_from_object(obj: Transmission, dilation: float = 2.0) -> np.ndarray:
        """Bounding box of the object's non-zero samples, widened about its centre by `dilation`"""
        if dilation < 1:
            raise ConfigurationError('Support dilation must be >= 1')
        occupied = np.abs(obj.t) > 0
        if not occupied.any():
            raise DegenerateInputError('Object has no transmitting samples')
        grid = obj.grid
        coords = grid.coordinates()
        support = np.ones(grid.shape, dtype=bool)
        for axis in range(grid.dims):
            other_axes = tuple(a for a in range(grid.dims) if a != axis)
            rows = np.nonzero(np.any(occupied, axis=other_axes) if other_axes else occupied)[0]
            low, high = coords[rows[0]], coords[rows[-1]]
            center = (low + high) / 2
            half = (high - low + grid.pitch) * dilation / 2
            inside = np.abs(coords - center) <= half
            shape = [1] * grid.dims
            shape[axis] = grid.n
            support &= inside.reshape(shape)
        return support

    # ---------------------------------------------------------------- projections

    @staticmethod
    def fourier_error(estimate: np.ndarray, modulus: np.ndarray, spectrum: Optional[np.ndarray] = None) -> float:
        """E_F = || |F(g)| - modulus || / || modulus ||"""
        if spectrum is None:
            spectrum = RetrievalService.forward(estimate)
        return float(np.linalg.norm(np.abs(spectrum) - modulus) / np.linalg.norm(modulus))

    @staticmethod
    def _impose_modulus(spectrum: np.ndarray, modulus: np.ndarray) -> np.ndarray:
        phase = np.exp(1j * np.angle(spectrum))
        return modulus * phase

    @staticmethod
    def _object_constraint(values: np.ndarray, problem: RetrievalProblem) -> np.ndarray:
        """Zero outside the support; real and non-negative in amplitude mode"""
        if problem.mode == 'amplitude':
            constrained = np.clip(np.real(values), 0.0, None).astype(np.complex128)
        else:
            constrained = np.array(values, dtype=np.complex128)
        constrained[~problem.support] = 0
        return constrained

    @classmethod
    def _initial_estimate(cls, problem: RetrievalProblem) -> np.ndarray:
        if problem.initial is not None:
            return cls._object_constraint(np.asarray(problem.initial, dtype=np.complex128), problem)
        rng = np.random.default_rng(problem.init_seed)
        phase = np.exp(2j * np.pi * rng.random(problem.modulus.shape))
        return cls._object_constraint(cls.inverse(problem.modulus * phase), problem)

    @staticmethod
    def _require_signal(problem: RetrievalProblem):
        if not np.any(problem.modulus > 0):
            raise DegenerateInputError('Fourier modulus is zero everywhere')

    # ---------------------------------------------------------------- algorithms

    @classmethod
    def error_reduction(cls, problem: RetrievalProblem, start: Optional[np.ndarray] = None) -> RetrievalReport:
        """
        Alternate between the Fourier modulus and the object constraints

        History entry k is E_F of the k-th constrained iterate, so entry 0 is the
        starting point. Stops at max_iterations, when E_F <= 1e-10, or when E_F
        changes by less than 1e-8 between iterations.
        """
        cls._require_signal(problem)
        estimate = cls._initial_estimate(problem) if start is None else cls._object_constraint(start, problem)
        history: List[float] = []
        iterations = 0
        while True:
            spectrum = cls.forward(estimate)
            error = cls.fourier_error(estimate, problem.modulus, spectrum)
            history.append(error)
            if error <= CONVERGED_ERROR or iterations >= problem.max_iterations:
                break
            if len(history) > 1 and abs(history[-2] - error) < STAGNATION_CHANGE:
                break
            estimate = cls._object_constraint(cls.inverse(cls._impose_modulus(spectrum, problem.modulus)), problem)
            iterations += 1
        logger.debug(f"ER stopped after {iterations} iterations at E_F {history[-1]:.3g}")
        return RetrievalReport(
            estimate=estimate, fourier_error_history=history, iterations_run=iterations,
            algorithm='er', init_seed=problem.init_seed, best_iteration=len(history) - 1,
        )

    @classmethod
    def hio(cls, problem: RetrievalProblem) -> RetrievalReport:
        """
        Hybrid Input-Output

        g' = g_F where g_F satisfies the object constraints, g - beta * g_F
        elsewhere, with g_F the modulus-projected iterate. The reported estimate
        is the constrained iterate with the lowest E_F.
        """
        cls._require_signal(problem)
        current = cls._initial_estimate(problem)
        history: List[float] = []
        best_error = np.inf
        best_estimate = current
        best_iteration = 0
        for iteration in range(problem.max_iterations + 1):
            constrained = cls._object_constraint(current, problem)
            error = cls.fourier_error(constrained, problem.modulus)
            history.append(error)
            if error < best_error:
                best_error, best_estimate, best_iteration = error, constrained, iteration
            if error <= CONVERGED_ERROR or iteration == problem.max_iterations:
                break
            projected = cls.inverse(cls._impose_modulus(cls.forward(current), problem.modulus))
            if problem.mode == 'amplitude':
                projected = np.real(projected).astype(np.complex128)
                violating = ~problem.support | (np.real(projected) < 0)
            else:
                violating = ~problem.support
            current = np.where(violating, current - problem.beta * projected, projected)
        logger.debug(f"HIO best E_F {best_error:.3g} at iteration {best_iteration}")
        return RetrievalReport(
            estimate=best_estimate, fourier_error_history=history, iterations_run=len(history) - 1,
            algorithm='hio', init_seed=problem.init_seed, best_iteration=best_iteration,
        )

    @classmethod
    def retrieve(cls, problem: RetrievalProblem, algorithm: str = 'hio', polish_iterations: int = 0) -> RetrievalReport:
        """Run one algorithm; HIO is followed by up to polish_iterations ER steps from its best iterate"""
        if algorithm not in ALGORITHMS:
            raise ConfigurationError(f"Unknown retrieval algorithm '{algorithm}'")
        if algorithm == 'er':
            return cls.error_reduction(problem)
        report = cls.hio(problem)
        if polish_iterations <= 0:
            return report
        polished = cls.error_reduction(replace(problem, max_iterations=polish_iterations), start=report.estimate)
        history = report.fourier_error_history + polished.fourier_error_history[1:]
        return RetrievalReport(
            estimate=polished.estimate, fourier_error_history=history,
            iterations_run=report.iterations_run + polished.iterations_run,
            algorithm='hio', init_seed=problem.init_seed, best_iteration=len(history) - 1,
        )

    @classmethod
    def run_restarts(cls, problem: RetrievalProblem, algorithm: str = 'hio', restarts: int = 11,
                     polish_iterations: int = 0, workers: Optional[int] = None) -> List[RetrievalReport]:
        """Independent runs from init_seed, init_seed + 1, ... in seed order"""
        if restarts < 1:
            raise ConfigurationError('restarts must be >= 1')
        cls._require_signal(problem)
        tasks = [
            (replace(problem, init_seed=problem.init_seed + offset), algorithm, polish_iterations)
            for offset in range(restarts)
        ]
        workers = min(workers or int(lab_setting('WORKERS')), restarts)
        if workers == 1:
            return [_run_restart(task) for task in tasks]
        with ProcessPoolExecutor(max_workers=workers) as executor:
            return list(executor.map(_run_restart, tasks))

    # ---------------------------------------------------------------- scoring

    @staticmethod
    def _best_overlap(estimate: np.ndarray, truth: np.ndarray) -> float:
        """max over circular shifts and flip-conjugation of |<g_sigma, truth>|"""
        axes = tuple(range(truth.ndim))
        truth_spectrum = fft.fftn(truth, axes=axes)
        best = 0.0
        for candidate in (estimate, np.conj(np.flip(estimate, axis=axes))):
            overlaps = fft.ifftn(truth_spectrum * np.conj(fft.fftn(candidate, axes=axes)), axes=axes)
            best = max(best, float(np.max(np.abs(overlaps))))
        return best

    @classmethod
    def registered_correlation(cls, estimate: np.ndarray, truth: np.ndarray) -> float:
        """Normalized |inner product| after the best translation and flip, in [0, 1]"""
        estimate = np.asarray(estimate, dtype=np.complex128)
        truth = np.asarray(truth, dtype=np.complex128)
        if estimate.shape != truth.shape:
            raise ConfigurationError(f"Estimate {estimate.shape} and truth {truth.shape} differ in shape")
        truth_norm = np.linalg.norm(truth)
        if truth_norm == 0:
            raise DegenerateInputError('Ground truth is zero everywhere')
        estimate_norm = np.linalg.norm(estimate)
        if estimate_norm == 0:
            return 0.0
        return min(cls._best_overlap(estimate, truth) / (estimate_norm * truth_norm), 1.0)

    @classmethod
    def reconstruction_error(cls, estimate: np.ndarray, truth: np.ndarray) -> float:
        """
        min ||a * g_sigma - truth|| / ||truth|| over translations, flip-conjugation and complex a

        For the optimal a this is sqrt(1 - rho**2) with rho the registered correlation.
        """
        rho = cls.registered_correlation(estimate, truth)
        return float(np.sqrt(max(1.0 - rho ** 2, 0.0)))
