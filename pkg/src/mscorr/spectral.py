"""Spectral cubes, sensitivity tables and their on-disk formats.

Cube file layout (all integers little-endian)::

    offset  size  field
    0       4     magic b"MSC1"
    4       4     width  (u32)
    8       4     height (u32)
    12      4     band count N (u32)
    16      2     start wavelength in nm (u16)
    18      2     step in nm (u16)
    20      W*H*N band-sequential u8 samples; each band plane is row-major

In memory the samples are held as a ``(height, width, bands)`` uint8 array.
"""

from __future__ import annotations

import csv
import math
import struct
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np
from numpy.typing import NDArray

from .errors import (
    AxisMismatch,
    AxisOutOfRange,
    InvariantViolation,
    IoFailure,
    MalformedHeader,
    NonNumericCell,
    TargetOutOfRange,
    TruncatedData,
)

MAGIC = b"MSC1"
HEADER = struct.Struct("<4sIIIHH")

MIN_NM = 380
MAX_NM = 780
MAX_BANDS = 400


@dataclass(frozen=True)
class WavelengthAxis:
    """Wavelength sampling of a cube or sensitivity table.

    ``bands_nm`` is only set on axes produced by non-uniform subsampling; it
    then lists the exact wavelength of every band and ``step_nm`` holds the
    modal stride.
    """

    start_nm: int
    step_nm: int
    count: int
    bands_nm: tuple[int, ...] | None = None

    def __post_init__(self) -> None:
        if self.step_nm < 1:
            raise InvariantViolation(f"step_nm must be positive, got {self.step_nm}")
        if self.count < 1:
            raise InvariantViolation(f"count must be positive, got {self.count}")
        if self.count > MAX_BANDS:
            raise AxisOutOfRange(f"count {self.count} exceeds {MAX_BANDS} bands")
        waves = self.wavelengths()
        if len(waves) != self.count:
            raise InvariantViolation("bands_nm length must equal count")
        if waves[0] < MIN_NM or waves[-1] > MAX_NM:
            raise AxisOutOfRange(
                f"axis {waves[0]}..{waves[-1]} nm leaves the {MIN_NM}-{MAX_NM} nm range"
            )
        if any(b <= a for a, b in zip(waves, waves[1:])):
            raise InvariantViolation("band wavelengths must strictly increase")

    @property
    def uniform(self) -> bool:
        return self.bands_nm is None

    def wavelengths(self) -> tuple[int, ...]:
        if self.bands_nm is not None:
            return tuple(self.bands_nm)
        return tuple(self.start_nm + i * self.step_nm for i in range(self.count))

    def select(self, indices: Sequence[int]) -> WavelengthAxis:
        """Axis made of the bands at ``indices`` (ascending)."""
        waves = self.wavelengths()
        picked = tuple(waves[i] for i in indices)
        if len(picked) == 1:
            return WavelengthAxis(picked[0], self.step_nm, 1)
        strides = Counter(b - a for a, b in zip(picked, picked[1:]))
        if len(strides) == 1:
            return WavelengthAxis(picked[0], next(iter(strides)), len(picked))
        # most common stride; ties go to the smaller one so the result is stable
        modal = min(strides, key=lambda s: (-strides[s], s))
        return WavelengthAxis(picked[0], modal, len(picked), bands_nm=picked)


@dataclass(frozen=True, eq=False)
class SpectralImage:
    """An 8-bit multispectral cube of shape ``(height, width, bands)``."""

    samples: NDArray[np.uint8]
    axis: WavelengthAxis

    def __post_init__(self) -> None:
        arr = np.asarray(self.samples)
        if arr.ndim != 3:
            raise InvariantViolation("samples must be a (height, width, bands) array")
        if arr.dtype != np.uint8:
            if not np.issubdtype(arr.dtype, np.integer):
                raise InvariantViolation(f"samples must be integers, got {arr.dtype}")
            if arr.size and (arr.min() < 0 or arr.max() > 255):
                raise InvariantViolation("samples must lie in [0, 255]")
            arr = arr.astype(np.uint8)
        h, w, n = arr.shape
        if h < 1 or w < 1:
            raise InvariantViolation(f"image dimensions must be positive, got {w}x{h}")
        if n != self.axis.count:
            raise InvariantViolation(
                f"sample array has {n} bands but axis declares {self.axis.count}"
            )
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "samples", arr)

    @property
    def width(self) -> int:
        return self.samples.shape[1]

    @property
    def height(self) -> int:
        return self.samples.shape[0]

    @property
    def bands(self) -> int:
        return self.samples.shape[2]

    @property
    def pixels(self) -> int:
        return self.width * self.height

    def spectra(self) -> NDArray[np.float64]:
        """Pixel spectra lifted to float, shape ``(pixels, bands)`` in row-major order."""
        return self.samples.reshape(-1, self.bands).astype(np.float64)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SpectralImage):
            return NotImplemented
        return self.axis == other.axis and np.array_equal(self.samples, other.samples)

    __hash__ = None  # type: ignore[assignment]


class SensitivityKind(str, Enum):
    CMF_XYZ = "CMF_XYZ"
    CAMERA_RGB = "CAMERA_RGB"


@dataclass(frozen=True, eq=False)
class SensitivitySet:
    """Three per-wavelength weight rows (x̄ȳz̄ or camera r̄ḡb̄), shape ``(3, N)``."""

    axis: WavelengthAxis
    rows: NDArray[np.float64]
    kind: SensitivityKind

    def __post_init__(self) -> None:
        rows = np.array(self.rows, dtype=np.float64)
        if rows.shape != (3, self.axis.count):
            raise InvariantViolation(
                f"sensitivity rows must be (3, {self.axis.count}), got {rows.shape}"
            )
        if not np.all(np.isfinite(rows)):
            raise InvariantViolation("sensitivity rows must be finite")
        kind = SensitivityKind(self.kind)
        if kind is SensitivityKind.CMF_XYZ and np.any(rows < 0):
            raise InvariantViolation("colour matching functions must be nonnegative")
        rows.flags.writeable = False
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "kind", kind)

    def select(self, indices: Sequence[int]) -> SensitivitySet:
        idx = list(indices)
        return SensitivitySet(self.axis.select(idx), self.rows[:, idx], self.kind)

    def check_axis(self, axis: WavelengthAxis) -> None:
        if axis.wavelengths() != self.axis.wavelengths():
            raise AxisMismatch(
                f"sensitivity axis {_describe(self.axis)} does not match image axis {_describe(axis)}"
            )


def _describe(axis: WavelengthAxis) -> str:
    waves = axis.wavelengths()
    return f"[{waves[0]}..{waves[-1]} nm, {axis.count} bands]"


# ---------------------------------------------------------------------------
# cube I/O


def encode_cube(img: SpectralImage) -> bytes:
    if not img.axis.uniform:
        raise InvariantViolation("cube format stores uniform axes only")
    if img.axis.start_nm > 0xFFFF or img.axis.step_nm > 0xFFFF:
        raise InvariantViolation("axis does not fit the u16 header fields")
    header = HEADER.pack(
        MAGIC, img.width, img.height, img.bands, img.axis.start_nm, img.axis.step_nm
    )
    payload = np.ascontiguousarray(np.transpose(img.samples, (2, 0, 1))).tobytes()
    return header + payload


def decode_header(data: bytes) -> tuple[int, int, WavelengthAxis]:
    """Parse the 20-byte header; returns ``(width, height, axis)``."""
    if len(data) < HEADER.size:
        raise MalformedHeader(f"file holds {len(data)} bytes, header needs {HEADER.size}")
    magic, width, height, count, start, step = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise MalformedHeader(f"bad magic {magic!r}, expected {MAGIC!r}")
    if width == 0 or height == 0 or count == 0 or step == 0:
        raise MalformedHeader(
            f"zero dimension in header (width={width}, height={height}, bands={count}, step={step})"
        )
    if count > MAX_BANDS:
        raise AxisOutOfRange(f"header declares {count} bands, maximum is {MAX_BANDS}")
    return width, height, WavelengthAxis(start, step, count)


def decode_cube(data: bytes) -> SpectralImage:
    width, height, axis = decode_header(data)
    need = width * height * axis.count
    payload = data[HEADER.size :]
    if len(payload) < need:
        raise TruncatedData(f"payload holds {len(payload)} bytes, expected {need}")
    if len(payload) > need:
        raise MalformedHeader(f"{len(payload) - need} trailing bytes after payload")
    planes = np.frombuffer(payload, dtype=np.uint8).reshape(axis.count, height, width)
    return SpectralImage(np.transpose(planes, (1, 2, 0)), axis)


def load_cube(path: str | Path) -> SpectralImage:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    return decode_cube(data)


def read_cube_header(path: str | Path) -> tuple[int, int, WavelengthAxis]:
    try:
        with open(path, "rb") as fh:
            data = fh.read(HEADER.size)
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    return decode_header(data)


def save_cube(img: SpectralImage, path: str | Path) -> None:
    data = encode_cube(img)
    try:
        Path(path).write_bytes(data)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def make_cube(width: int, height: int, axis: WavelengthAxis, samples=None) -> SpectralImage:
    """Build an image from explicit dimensions; rejects degenerate sizes up front."""
    if width < 1 or height < 1:
        raise InvariantViolation(f"image dimensions must be positive, got {width}x{height}")
    if samples is None:
        samples = np.zeros((height, width, axis.count), dtype=np.uint8)
    return SpectralImage(np.asarray(samples).reshape(height, width, axis.count), axis)


# ---------------------------------------------------------------------------
# CSV tables


def _read_rows(path: str | Path, ncols: int) -> list[tuple[int, list[float]]]:
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise NonNumericCell(f"{path}: empty file")
    out = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != ncols + 1:
            raise NonNumericCell(f"{path}:{lineno}: expected {ncols + 1} columns, got {len(row)}")
        try:
            wl = float(row[0])
            vals = [float(c) for c in row[1:]]
        except ValueError as exc:
            raise NonNumericCell(f"{path}:{lineno}: {exc}") from exc
        if not wl.is_integer() or not all(math.isfinite(v) for v in vals):
            raise NonNumericCell(f"{path}:{lineno}: non-integer wavelength or non-finite value")
        out.append((int(wl), vals))
    return out


def _align(path, rows, axis: WavelengthAxis) -> np.ndarray:
    table = {}
    for wl, vals in rows:
        table[wl] = vals
    missing = [wl for wl in axis.wavelengths() if wl not in table]
    if missing:
        raise AxisMismatch(f"{path}: no row for wavelength(s) {missing[:5]} nm")
    return np.array([table[wl] for wl in axis.wavelengths()], dtype=np.float64)


def load_sensitivities(
    path: str | Path,
    axis: WavelengthAxis,
    kind: SensitivityKind | str = SensitivityKind.CMF_XYZ,
) -> SensitivitySet:
    """Read a ``wavelength,c1,c2,c3`` table and align it to ``axis``.

    Rows for wavelengths outside the axis are ignored; a missing wavelength is an
    error since values are never interpolated.
    """
    values = _align(path, _read_rows(path, 3), axis)
    return SensitivitySet(axis, values.T, SensitivityKind(kind))


def read_sensitivity_table(
    path: str | Path, kind: SensitivityKind | str = SensitivityKind.CMF_XYZ
) -> SensitivitySet:
    """Read a table on its own axis (rows must be evenly spaced)."""
    rows = sorted(_read_rows(path, 3))
    if not rows:
        raise AxisMismatch(f"{path}: no data rows")
    waves = [wl for wl, _ in rows]
    step = waves[1] - waves[0] if len(waves) > 1 else 1
    axis = WavelengthAxis(waves[0], step, len(waves))
    if axis.wavelengths() != tuple(waves):
        raise AxisMismatch(f"{path}: wavelengths are not evenly spaced")
    return SensitivitySet(axis, np.array([v for _, v in rows]).T, SensitivityKind(kind))


def load_spectrum(path: str | Path, axis: WavelengthAxis) -> NDArray[np.float64]:
    """Read a ``wavelength,value`` table (white spectra, WRMS weights)."""
    return _align(path, _read_rows(path, 1), axis)[:, 0]


def write_spectrum(path: str | Path, axis: WavelengthAxis, values) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["wavelength", "value"])
        for wl, v in zip(axis.wavelengths(), values):
            w.writerow([wl, repr(float(v))])


def write_sensitivities(path: str | Path, sens: SensitivitySet) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["wavelength", "c1", "c2", "c3"])
        for wl, col in zip(sens.axis.wavelengths(), sens.rows.T):
            w.writerow([wl, *(repr(float(v)) for v in col)])


# ---------------------------------------------------------------------------
# band subsampling


def band_indices(count: int, target: int) -> list[int]:
    """Indices ``floor(i * count / target)`` for ``i`` in ``range(target)``."""
    if not 1 <= target <= count:
        raise TargetOutOfRange(f"target {target} outside 1..{count}")
    return [i * count // target for i in range(target)]


def subsample_bands(img: SpectralImage, target: int) -> SpectralImage:
    if target == img.bands:
        return img
    idx = band_indices(img.bands, target)
    return SpectralImage(img.samples[:, :, idx], img.axis.select(idx))
