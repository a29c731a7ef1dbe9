"""
Array I/O Service

File formats shared by the management commands:
- GHSTARR1 binary array container (single or concatenated records)
- Pattern files: 1D CSV with a two-line comment header, binary pattern records
- 16-bit portable graymaps for 2D patterns

Container layout (all little-endian):
    8 bytes  magic b'GHSTARR1'
    u32      number of dimensions
    u32 * d  size of each dimension
    u8       element code (0 = f64, 1 = complex f64 interleaved)
    payload  row-major
"""
import logging
from pathlib import Path
from typing import Dict, List, Tuple, Union

import numpy as np
from PIL import Image

from core.exceptions import FormatError

from .grid_service import AXIS_KINDS, Pattern

logger = logging.getLogger(__name__)

MAGIC = b'GHSTARR1'
ELEMENT_TYPES = {
    0: np.dtype('<f8'),
    1: np.dtype('<c16'),
}
AXIS_UNITS = {
    'displacement': 'm',
    'frequency': '1/m',
}
GRAYMAP_MAX = 65535

PathLike = Union[str, Path]


class ArrayIOService:
    """Service class for reading and writing simulator artifacts"""

    # ---------------------------------------------------------------- containers

    @staticmethod
    def encode_array(array: np.ndarray) -> bytes:
        """Serialize one array as a GHSTARR1 record"""
        array = np.asarray(array)
        if np.iscomplexobj(array):
            code = 1
        else:
            code = 0
        payload = np.ascontiguousarray(array, dtype=ELEMENT_TYPES[code])
        header = MAGIC + np.array([payload.ndim, *payload.shape], dtype='<u4').tobytes()
        return header + bytes([code]) + payload.tobytes()

    @staticmethod
    def decode_array(buffer: bytes, offset: int = 0) -> Tuple[np.ndarray, int]:
        """
        Parse one record starting at offset

        Returns:
            Tuple of (array, offset just past the record)
        """
        if buffer[offset:offset + len(MAGIC)] != MAGIC:
            raise FormatError(f"Bad magic at byte {offset}, expected {MAGIC!r}")
        cursor = offset + len(MAGIC)
        if len(buffer) < cursor + 4:
            raise FormatError("Truncated header: missing dimension count")
        ndim = int(np.frombuffer(buffer, dtype='<u4', count=1, offset=cursor)[0])
        cursor += 4
        if len(buffer) < cursor + 4 * ndim + 1:
            raise FormatError("Truncated header: missing dimension sizes")
        shape = tuple(int(size) for size in np.frombuffer(buffer, dtype='<u4', count=ndim, offset=cursor))
        cursor += 4 * ndim
        code = buffer[cursor]
        cursor += 1
        if code not in ELEMENT_TYPES:
            raise FormatError(f"Unknown element code {code}")
        dtype = ELEMENT_TYPES[code]
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        end = cursor + count * dtype.itemsize
        if len(buffer) < end:
            raise FormatError(
                f"Truncated payload: need {end - cursor} bytes, found {len(buffer) - cursor}"
            )
        array = np.frombuffer(buffer, dtype=dtype, count=count, offset=cursor).reshape(shape)
        return array.copy(), end

    @classmethod
    def write_records(cls, path: PathLike, arrays: List[np.ndarray]):
        """Write several records back to back into one file"""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(b''.join(cls.encode_array(array) for array in arrays))

    @classmethod
    def read_records(cls, path: PathLike) -> List[np.ndarray]:
        """Read every record of a container file"""
        try:
            buffer = Path(path).read_bytes()
        except OSError as exc:
            raise FormatError(f"Cannot read {path}: {exc}") from exc
        if not buffer:
            raise FormatError(f"{path} is empty")
        arrays = []
        offset = 0
        while offset < len(buffer):
            try:
                array, offset = cls.decode_array(buffer, offset)
            except FormatError as exc:
                raise FormatError(f"{path}: {exc}") from exc
            arrays.append(array)
        return arrays

    @classmethod
    def write_array(cls, path: PathLike, array: np.ndarray):
        cls.write_records(path, [array])

    @classmethod
    def read_array(cls, path: PathLike) -> np.ndarray:
        records = cls.read_records(path)
        if len(records) != 1:
            raise FormatError(f"{path} holds {len(records)} records, expected 1")
        return records[0]

    # ---------------------------------------------------------------- patterns

    @staticmethod
    def write_pattern_csv(path: PathLike, pattern: Pattern):
        """Write a 1D pattern as two columns with a two-line comment header"""
        if pattern.dims != 1:
            raise FormatError("CSV export holds 1D patterns only")
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        header = (
            f"axis_kind={pattern.axis_kind}\n"
            f"columns=axis[{AXIS_UNITS[pattern.axis_kind]}],value[peak-normalized]"
        )
        np.savetxt(
            path,
            np.column_stack([pattern.axis, pattern.values]),
            fmt='%.17g',
            delimiter=',',
            header=header,
            comments='# ',
        )

    @staticmethod
    def read_pattern_csv(path: PathLike) -> Pattern:
        """Read a pattern written by write_pattern_csv"""
        path = Path(path)
        try:
            with path.open() as handle:
                first_line = handle.readline()
        except OSError as exc:
            raise FormatError(f"Cannot read {path}: {exc}") from exc
        axis_kind = 'displacement'
        if first_line.startswith('#') and 'axis_kind=' in first_line:
            axis_kind = first_line.split('axis_kind=', 1)[1].strip()
        if axis_kind not in AXIS_KINDS:
            raise FormatError(f"{path}: unknown axis kind '{axis_kind}'")
        try:
            table = np.loadtxt(path, delimiter=',', comments='#', ndmin=2)
        except ValueError as exc:
            raise FormatError(f"{path}: {exc}") from exc
        if table.shape[1] != 2:
            raise FormatError(f"{path}: expected 2 columns, found {table.shape[1]}")
        return Pattern(axis=table[:, 0], values=table[:, 1], axis_kind=axis_kind)

    @classmethod
    def write_pattern_array(cls, path: PathLike, pattern: Pattern):
        """Binary pattern file: records [axis kind code], axis, values"""
        kind_code = np.array([float(AXIS_KINDS.index(pattern.axis_kind))])
        cls.write_records(path, [kind_code, pattern.axis, pattern.values])

    @classmethod
    def read_pattern_array(cls, path: PathLike) -> Pattern:
        records = cls.read_records(path)
        if len(records) != 3 or records[0].shape != (1,):
            raise FormatError(f"{path} is not a pattern file")
        kind_index = int(records[0][0])
        if kind_index not in range(len(AXIS_KINDS)):
            raise FormatError(f"{path}: unknown axis kind code {kind_index}")
        return Pattern(axis=records[1], values=np.real(records[2]), axis_kind=AXIS_KINDS[kind_index])

    @classmethod
    def read_pattern(cls, path: PathLike) -> Pattern:
        """Load a pattern from CSV or from a binary pattern file by extension"""
        if Path(path).suffix.lower() == '.csv':
            return cls.read_pattern_csv(path)
        return cls.read_pattern_array(path)

    @classmethod
    def write_pattern(cls, path_stem: PathLike, pattern: Pattern, formats=('csv', 'bin', 'pgm')) -> Dict[str, str]:
        """
        Write a pattern in every requested format that applies to its dimensionality

        1D patterns go to CSV, 2D patterns to graymap; the binary pattern file is
        written for both.

        Returns:
            Dict mapping format name to written path, plus the graymap scale
        """
        path_stem = Path(path_stem)
        written: Dict[str, str] = {}
        if 'bin' in formats:
            target = path_stem.with_suffix('.bin')
            cls.write_pattern_array(target, pattern)
            written['bin'] = str(target)
        if 'csv' in formats and pattern.dims == 1:
            target = path_stem.with_suffix('.csv')
            cls.write_pattern_csv(target, pattern)
            written['csv'] = str(target)
        if 'pgm' in formats and pattern.dims == 2:
            target = path_stem.with_suffix('.pgm')
            scale = cls.write_graymap(target, pattern.values)
            written['pgm'] = str(target)
            written['pgm_scale'] = repr(scale)
        return written

    # ---------------------------------------------------------------- graymap

    @staticmethod
    def write_graymap(path: PathLike, values: np.ndarray) -> float:
        """
        Save a non-negative 2D array as a 16-bit binary PGM

        Args:
            path: Output file
            values: 2D array, scaled so its maximum maps to 65535

        Returns:
            Scale factor applied (counts per unit value)
        """
        values = np.asarray(values, dtype=np.float64)
        if values.ndim != 2:
            raise FormatError("Graymap export needs a 2D array")
        peak = float(np.max(values))
        scale = GRAYMAP_MAX / peak if peak > 0 else 0.0
        counts = np.clip(np.rint(values * scale), 0, GRAYMAP_MAX).astype(np.int32)
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        Image.fromarray(counts).save(path, format='PPM')
        return scale

    @staticmethod
    def read_graymap(path: PathLike) -> np.ndarray:
        try:
            with Image.open(path) as image:
                return np.array(image, dtype=np.int64)
        except OSError as exc:
            raise FormatError(f"Cannot read graymap {path}: {exc}") from exc
