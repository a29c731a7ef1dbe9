"""
Experiment Service

The two-arm lensless ghost-diffraction setup:
- One realization: speckle field -> d1 -> object -> d2 (test arm) and the same
  field -> d_ref (reference arm), both recorded as intensities
- Ensembles of realizations reduced in fixed blocks over a worker pool,
  with resumable checkpoints
- Coherent plane-wave references (Fresnel pattern at d2, 2-f lens pattern)
- Directly measured arm intensities, fringe visibility, speckle statistics

Blocks of consecutive realization indices are accumulated independently and
merged left to right in block order, so a result does not depend on how many
workers produced it.
"""
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np

from core.conf import lab_setting
from core.exceptions import ConfigurationError, GhostLabError
from core.services.config_service import RunConfig
from core.services.grid_service import ComplexField, Grid, GridService, Pattern, SetupGeometry
from ghost.services.correlation_service import (
    ESTIMATORS,
    CorrelationAccumulator,
    CorrelationService,
    GhostResult,
)
from optics.services.object_service import Transmission
from optics.services.propagation_service import PropagationService
from optics.services.source_service import RealizationSeed, SourceService, SpeckleSpec

logger = logging.getLogger(__name__)

COHERENT_MODES = ('fresnel_d2', 'lens_2f')
VISIBILITY_PERIODS = 6


@dataclass(frozen=True)
class ArmIntensities:
    """Detector images of one realization"""
    i_test: np.ndarray = field(repr=False)
    i_ref: np.ndarray = field(repr=False)
    realization_index: int = 0


@dataclass(frozen=True)
class MeanArmIntensities:
    """Ensemble-averaged detector images, what each camera sees on its own"""
    grid: Grid
    mean_test: np.ndarray = field(repr=False)
    mean_ref: np.ndarray = field(repr=False)
    n: int = 0


@dataclass(frozen=True)
class EnsembleConfig:
    """How many realizations to run and how to reduce them"""
    n_realizations: int
    master_seed: int = 0
    estimator: str = 'shift_averaged'
    test_point: float = 0.0
    checkpoint_every: int = 0
    extra_test_points: Tuple[float, ...] = ()
    block_size: Optional[int] = None
    pad_factor: int = 2
    bin_factor: int = 1
    diagnostics: bool = False
    workers: Optional[int] = None
    checkpoint_path: Optional[str] = None

    def __post_init__(self):
        if self.n_realizations < 2:
            raise ConfigurationError(f"n_realizations >= 2 required, got {self.n_realizations}")
        if self.estimator not in ESTIMATORS:
            raise ConfigurationError(f"Unknown estimator '{self.estimator}'")
        if not 0 <= self.master_seed < 2 ** 64:
            raise ConfigurationError('master_seed must be a 64-bit unsigned integer')
        if self.checkpoint_every < 0:
            raise ConfigurationError('checkpoint_every must be >= 0')
        if self.block_size is not None and self.block_size < 1:
            raise ConfigurationError('block_size must be >= 1')
        if self.workers is not None and self.workers < 1:
            raise ConfigurationError('workers must be >= 1')

    @property
    def test_points(self) -> Tuple[float, ...]:
        return (self.test_point,) + tuple(self.extra_test_points)

    @property
    def resolved_block_size(self) -> int:
        return self.block_size or int(lab_setting('BLOCK_SIZE'))

    @property
    def resolved_workers(self) -> int:
        return self.workers or int(lab_setting('WORKERS'))

    def blocks(self) -> List[Tuple[int, int]]:
        """Half-open realization index ranges, one per reduction block"""
        size = self.resolved_block_size
        return [
            (start, min(start + size, self.n_realizations))
            for start in range(0, self.n_realizations, size)
        ]


@dataclass(frozen=True)
class SpeckleReport:
    """Measured speckle statistics next to the lambda*d1/d0 estimate"""
    fwhm: float
    estimate: float
    g2_object: float
    g2_reference: float
    n: int


def _run_block(task) -> CorrelationAccumulator:
    """Accumulate one block of realizations (runs in a worker process)"""
    geom, obj, spec, cfg, start, stop = task
    acc = ExperimentService.empty_accumulator(geom, obj, cfg)
    for index in range(start, stop):
        arms = ExperimentService.run_realization(
            geom, obj, spec, RealizationSeed(cfg.master_seed, index),
            pad_factor=cfg.pad_factor, bin_factor=cfg.bin_factor,
        )
        CorrelationService.accumulate(acc, arms.i_test, arms.i_ref)
    return acc


class ExperimentService:
    """Service class for the two-arm ghost-diffraction pipeline"""

    @staticmethod
    def bin_intensity(intensity: np.ndarray, factor: int) -> np.ndarray:
        """Sum factor x factor blocks of samples into one detector pixel"""
        if factor == 1:
            return intensity
        n = intensity.shape[0]
        if n % factor:
            raise ConfigurationError(f"Bin factor {factor} must divide n = {n}")
        if intensity.ndim == 1:
            return intensity.reshape(n // factor, factor).sum(axis=1)
        return intensity.reshape(n // factor, factor, n // factor, factor).sum(axis=(1, 3))

    @staticmethod
    def reference_leg(geom: SetupGeometry) -> Tuple[str, float]:
        """
        Which field the reference arm starts from and how far it travels

        The reference arm shares the d1 leg with the test arm; from there it
        travels d_ref - d1, which is exactly d2 when the Fourier condition holds.
        """
        if geom.fourier_condition_met():
            return 'object_plane', geom.d2
        if geom.d_ref >= geom.d1:
            return 'object_plane', geom.d_ref - geom.d1
        return 'source', geom.d_ref

    @classmethod
    def run_realization(cls, geom: SetupGeometry, obj: Transmission, spec: SpeckleSpec,
                        seed: RealizationSeed, pad_factor: int = 2, bin_factor: int = 1) -> ArmIntensities:
        """
        Propagate one speckle realization through both arms

        Args:
            geom: Setup geometry
            obj: Object in the test arm
            spec: Ground-glass spot
            seed: Realization seed
            pad_factor: Angular-spectrum padding
            bin_factor: Detector pixels per axis summed into one

        Returns:
            ArmIntensities from the identical source field
        """
        grid = obj.grid
        wavelength = geom.wavelength
        source = SourceService.generate_speckle(spec, grid, seed)
        at_object = PropagationService.angular_spectrum(source, geom.d1, wavelength, pad_factor)
        test = PropagationService.angular_spectrum(obj.apply(at_object), geom.d2, wavelength, pad_factor)
        start, distance = cls.reference_leg(geom)
        reference = PropagationService.angular_spectrum(
            at_object if start == 'object_plane' else source, distance, wavelength, pad_factor,
        )
        return ArmIntensities(
            i_test=cls.bin_intensity(test.intensity(), bin_factor),
            i_ref=cls.bin_intensity(reference.intensity(), bin_factor),
            realization_index=seed.realization_index,
        )

    @staticmethod
    def detector_grid(obj: Transmission, cfg: EnsembleConfig) -> Grid:
        return obj.grid.binned(cfg.bin_factor)

    @classmethod
    def empty_accumulator(cls, geom: SetupGeometry, obj: Transmission, cfg: EnsembleConfig) -> CorrelationAccumulator:
        return CorrelationService.empty(
            cls.detector_grid(obj, cfg), geom.wavelength, geom.d2, cfg.test_points,
            track_xcorr=True, diagnostics=cfg.diagnostics,
        )

    @staticmethod
    def _prime_kernels(geom: SetupGeometry, grid: Grid, pad_factor: int):
        """Build the transfer functions once in this process so sampling warnings are recorded here"""
        distances = {geom.d1, geom.d2, ExperimentService.reference_leg(geom)[1]}
        for distance in sorted(distances - {0.0}):
            PropagationService.transfer_function(grid, distance, geom.wavelength, pad_factor)

    @staticmethod
    def _progress(cfg: EnsembleConfig, blocks_done: int) -> dict:
        return {
            'blocks_done': blocks_done,
            'block_size': cfg.resolved_block_size,
            'realizations': cfg.n_realizations,
            'seed_high': cfg.master_seed >> 32,
            'seed_low': cfg.master_seed & 0xFFFFFFFF,
        }

    @classmethod
    def _resume(cls, cfg: EnsembleConfig, template: CorrelationAccumulator) -> Tuple[CorrelationAccumulator, int]:
        """Load a compatible checkpoint, or start from an empty accumulator"""
        if not cfg.checkpoint_path or not Path(cfg.checkpoint_path).exists():
            return template, 0
        try:
            acc, progress = CorrelationService.load_checkpoint(cfg.checkpoint_path)
        except GhostLabError as exc:
            logger.warning(f"Ignoring unreadable checkpoint {cfg.checkpoint_path}: {exc}")
            return template, 0
        expected = cls._progress(cfg, progress['blocks_done'])
        blocks = cfg.blocks()
        if (progress != expected or not acc.same_geometry(template)
                or progress['blocks_done'] > len(blocks)
                or acc.n != sum(stop - start for start, stop in blocks[:progress['blocks_done']])):
            logger.warning(f"Checkpoint {cfg.checkpoint_path} belongs to a different run; starting over")
            return template, 0
        logger.info(f"Resuming from checkpoint after {progress['blocks_done']} blocks ({acc.n} realizations)")
        return acc, progress['blocks_done']

    @classmethod
    def _write_checkpoint(cls, acc: CorrelationAccumulator, cfg: EnsembleConfig, blocks_done: int):
        try:
            CorrelationService.save_checkpoint(acc, cfg.checkpoint_path, cls._progress(cfg, blocks_done))
        except (OSError, GhostLabError) as exc:
            logger.warning(f"Checkpoint write to {cfg.checkpoint_path} failed: {exc}")

    @classmethod
    def accumulate_ensemble(cls, geom: SetupGeometry, obj: Transmission, spec: SpeckleSpec,
                            cfg: EnsembleConfig) -> CorrelationAccumulator:
        """
        Stream every realization into one accumulator

        Blocks run inline with one worker and on a process pool otherwise;
        either way they are merged in block order. With a checkpoint path, a
        snapshot is written whenever checkpoint_every more realizations have
        been merged and once at the end.
        """
        spec.validate_for(obj.grid)
        template = cls.empty_accumulator(geom, obj, cfg)
        total, blocks_done = cls._resume(cfg, template)
        blocks = cfg.blocks()[blocks_done:]
        cls._prime_kernels(geom, obj.grid, cfg.pad_factor)
        tasks = [(geom, obj, spec, cfg, start, stop) for start, stop in blocks]
        workers = min(cfg.resolved_workers, max(len(tasks), 1))
        logger.info(
            f"Running {cfg.n_realizations - total.n} realizations in {len(tasks)} blocks "
            f"on {workers} worker(s)"
        )
        last_checkpoint = total.n

        def merge_in_order(results):
            nonlocal total, blocks_done, last_checkpoint
            for block_acc in results:
                total = CorrelationService.merge(total, block_acc)
                blocks_done += 1
                if (cfg.checkpoint_path and cfg.checkpoint_every
                        and total.n - last_checkpoint >= cfg.checkpoint_every):
                    cls._write_checkpoint(total, cfg, blocks_done)
                    last_checkpoint = total.n

        if workers == 1:
            merge_in_order(_run_block(task) for task in tasks)
        else:
            with ProcessPoolExecutor(max_workers=workers) as executor:
                merge_in_order(executor.map(_run_block, tasks))
        if cfg.checkpoint_path:
            cls._write_checkpoint(total, cfg, blocks_done)
        return total

    @classmethod
    def run_ensemble(cls, geom: SetupGeometry, obj: Transmission, spec: SpeckleSpec,
                     cfg: EnsembleConfig) -> GhostResult:
        """Accumulate the ensemble and finalize it with the configured estimator"""
        acc = cls.accumulate_ensemble(geom, obj, spec, cfg)
        return CorrelationService.finalize(acc, cfg.estimator)

    @classmethod
    def run_coherent_reference(cls, geom: SetupGeometry, obj: Transmission, mode: str,
                               pad_factor: int = 2) -> Pattern:
        """
        Plane-wave illumination of the object instead of speckle

        fresnel_d2 is what the test camera would record at d2; lens_2f is the
        object's Fourier pattern behind a lens of focal length d2. Both are
        returned on the ghost frequency axis nu = x/(lambda*d2) of the object grid.
        """
        if mode not in COHERENT_MODES:
            raise ConfigurationError(f"Unknown coherent mode '{mode}' (use {', '.join(COHERENT_MODES)})")
        illuminated = ComplexField(obj.grid, obj.t)
        if mode == 'fresnel_d2':
            output = PropagationService.angular_spectrum(illuminated, geom.d2, geom.wavelength, pad_factor)
        else:
            output = PropagationService.lens_2f(illuminated, geom.d2, geom.wavelength, out_grid=obj.grid)
        axis = GridService.frequency_axis(obj.grid, geom.wavelength, geom.d2)
        return Pattern(axis=axis, values=GridService.peak_normalized(output.intensity()), axis_kind='frequency')

    @staticmethod
    def mean_arm_intensities(acc: CorrelationAccumulator) -> MeanArmIntensities:
        """What each detector records without correlation: the ensemble means"""
        if acc.n < 1:
            raise ConfigurationError('No realizations accumulated')
        return MeanArmIntensities(grid=acc.grid, mean_test=acc.sum_t / acc.n, mean_ref=acc.sum_r / acc.n, n=acc.n)

    @staticmethod
    def fringe_visibility(values: np.ndarray, axis: np.ndarray, period: float,
                          center: float = 0.0, periods: int = VISIBILITY_PERIODS) -> float:
        """
        Modulation depth of a 1D profile at a given fringe period

        V = 2|sum I exp(-i*2*pi*x/P)| / sum I over `periods` periods around center;
        1 for fully modulated cos**2 fringes, 0 for a flat profile.
        """
        values = np.asarray(values, dtype=np.float64)
        axis = np.asarray(axis, dtype=np.float64)
        if values.ndim != 1 or values.shape != axis.shape:
            raise ConfigurationError('Visibility needs a 1D profile and a matching axis')
        if not period > 0:
            raise ConfigurationError('Fringe period must be > 0')
        window = np.abs(axis - center) < periods * period / 2
        total = float(np.sum(values[window]))
        if total <= 0:
            return 0.0
        component = np.sum(values[window] * np.exp(-2j * np.pi * (axis[window] - center) / period))
        return float(2 * np.abs(component) / total)

    @staticmethod
    def object_plane_intensities(geom: SetupGeometry, spec: SpeckleSpec, grid: Grid, master_seed: int,
                                 indices: Sequence[int], pad_factor: int = 2) -> Iterator[np.ndarray]:
        """Speckle intensity just in front of the object, one frame per realization"""
        for index in indices:
            source = SourceService.generate_speckle(spec, grid, RealizationSeed(master_seed, index))
            yield PropagationService.angular_spectrum(source, geom.d1, geom.wavelength, pad_factor).intensity()

    @classmethod
    def speckle_statistics(cls, geom: SetupGeometry, spec: SpeckleSpec, grid: Grid, master_seed: int,
                           n_realizations: int, pad_factor: int = 2) -> SpeckleReport:
        """
        Object-plane speckle size and g2(0) at the object plane and reference detector

        One pass over the realizations: each object-plane frame feeds the
        autocorrelation, and a diagnostic accumulator collects second moments
        of the object-plane and reference-detector intensities at x = 0.
        """
        moments = CorrelationService.empty(grid, geom.wavelength, geom.d2, (0.0,),
                                           track_xcorr=False, diagnostics=True)
        start, distance = cls.reference_leg(geom)

        def frames():
            for index in range(n_realizations):
                source = SourceService.generate_speckle(spec, grid, RealizationSeed(master_seed, index))
                at_object = PropagationService.angular_spectrum(source, geom.d1, geom.wavelength, pad_factor)
                reference = PropagationService.angular_spectrum(
                    at_object if start == 'object_plane' else source, distance, geom.wavelength, pad_factor,
                )
                i_object = at_object.intensity()
                CorrelationService.accumulate(moments, i_object, reference.intensity())
                yield i_object

        fwhm = SourceService.autocorrelation_fwhm(frames(), grid)
        return SpeckleReport(
            fwhm=fwhm,
            estimate=SourceService.transverse_coherence_length(geom.wavelength, geom.d1, geom.d0),
            g2_object=CorrelationService.g2_at_zero(moments, 0.0, arm='test'),
            g2_reference=CorrelationService.g2_at_zero(moments, 0.0, arm='reference'),
            n=moments.n,
        )

    @staticmethod
    def ensemble_config_from(config: RunConfig, workers: Optional[int] = None,
                             checkpoint_path: Optional[str] = None) -> EnsembleConfig:
        ensemble = config.ensemble
        return EnsembleConfig(
            n_realizations=ensemble.realizations,
            master_seed=ensemble.master_seed,
            estimator=ensemble.estimator,
            test_point=ensemble.test_point_m[0],
            checkpoint_every=ensemble.checkpoint_every,
            extra_test_points=tuple(ensemble.test_point_m[1:]),
            block_size=ensemble.block_size,
            pad_factor=ensemble.pad_factor,
            bin_factor=ensemble.bin_factor,
            diagnostics=ensemble.diagnostics,
            workers=workers,
            checkpoint_path=checkpoint_path,
        )

    @staticmethod
    def speckle_spec_from(config: RunConfig) -> SpeckleSpec:
        return SpeckleSpec(spot_diameter=config.geometry.d0_m, amplitude_profile=config.source.profile)
