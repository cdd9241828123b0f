"""Volumes on disk and in memory: IO, intensity preprocessing, resampling, cropping.

Conventions shared by every stage:
- Arrays are indexed (z, y, x) and stored row-major with x fastest.
- Voxel ``i`` along an axis with spacing ``s`` covers the physical interval
  ``[i*s, (i+1)*s)`` and its center sits at ``(i + 0.5)*s``. All volumes of a
  study share this frame, so resampling keeps the physical extent and boxes
  convert between resolutions by the spacing ratio.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Literal, TypeVar, Union

import numpy as np

from toothseglib.core.exceptions import (
    DataLengthError,
    DegenerateInputError,
    GeometryError,
    VolumeFormatError,
    VolumeNotFoundError,
    stage_call,
)
from toothseglib.core.types import VolumeHeaderDict, WrittenHeaderDict
from toothseglib.core.utils.logging import get_logger

Shape3 = tuple[int, int, int]
Spacing3 = tuple[float, float, float]
ValueKind = Literal["intensity", "probability"]

MAX_LABEL = 32
HEADER_SUFFIX = ".vjson"
RAW_SUFFIX = ".raw"

# On-disk dtype name -> little-endian numpy dtype.
_DTYPES: dict[str, str] = {"f32": "<f4", "u8": "u1"}

logger = get_logger("toothseglib.stages.volume")


def _frozen(array: np.ndarray) -> np.ndarray:
    view = array.view()
    view.flags.writeable = False
    return view


def _check_spacing(spacing_mm: Any) -> Spacing3:
    spacing = tuple(float(s) for s in spacing_mm)
    if len(spacing) != 3 or not all(s > 0 and np.isfinite(s) for s in spacing):
        raise GeometryError(f"spacing_mm must be 3 positive numbers, got {spacing_mm}")
    return spacing  # type: ignore[return-value]


@dataclass(frozen=True, eq=False)
class Volume:
    """Dense 3D scalar grid (intensities or probabilities) with voxel spacing.

    ``data`` is stored as read-only float32 so volumes can be shared freely
    between workers.
    """

    data: np.ndarray
    spacing_mm: Spacing3
    value_kind: ValueKind = "intensity"

    def __post_init__(self) -> None:
        data = np.asarray(self.data, dtype=np.float32)
        if data.ndim != 3:
            raise GeometryError(f"Volume data must be 3D, got shape {data.shape}")
        if self.value_kind not in ("intensity", "probability"):
            raise ValueError(f"Unknown value_kind: {self.value_kind!r}")
        if self.value_kind == "probability" and data.size:
            if float(data.min()) < 0.0 or float(data.max()) > 1.0:
                raise ValueError("Probability volume has values outside [0, 1]")
        object.__setattr__(self, "data", _frozen(data))
        object.__setattr__(self, "spacing_mm", _check_spacing(self.spacing_mm))

    @property
    def shape(self) -> Shape3:
        return tuple(int(n) for n in self.data.shape)  # type: ignore[return-value]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Volume):
            return NotImplemented
        return (
            self.spacing_mm == other.spacing_mm
            and self.value_kind == other.value_kind
            and np.array_equal(self.data, other.data)
        )


@dataclass(frozen=True, eq=False)
class LabelVolume:
    """Dense 3D grid of class labels 0..32 (0 = background).

    Binary masks are LabelVolumes holding only 0 and 1.
    """

    labels: np.ndarray
    spacing_mm: Spacing3

    def __post_init__(self) -> None:
        raw = np.asarray(self.labels)
        if raw.ndim != 3:
            raise GeometryError(f"LabelVolume must be 3D, got shape {raw.shape}")
        if raw.size and (int(raw.min()) < 0 or int(raw.max()) > MAX_LABEL):
            raise ValueError(f"Labels must lie in 0..{MAX_LABEL}")
        labels = raw.astype(np.uint8, copy=False)
        object.__setattr__(self, "labels", _frozen(labels))
        object.__setattr__(self, "spacing_mm", _check_spacing(self.spacing_mm))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, LabelVolume):
            return NotImplemented
        return self.spacing_mm == other.spacing_mm and np.array_equal(
            self.labels, other.labels
        )

    @property
    def shape(self) -> Shape3:
        return tuple(int(n) for n in self.labels.shape)  # type: ignore[return-value]

    def present_labels(self) -> list[int]:
        """Sorted non-zero labels occurring in the volume."""
        return [int(v) for v in np.unique(self.labels) if v != 0]

    def mask(self, label: int) -> np.ndarray:
        """Boolean mask of voxels carrying ``label``."""
        return np.asarray(self.labels == label)


AnyVolume = Union[Volume, LabelVolume]
V = TypeVar("V", Volume, LabelVolume)


def _array_of(v: AnyVolume) -> np.ndarray:
    return v.labels if isinstance(v, LabelVolume) else v.data


def _rebuild(v: V, array: np.ndarray, spacing_mm: Spacing3 | None = None) -> V:
    spacing = spacing_mm if spacing_mm is not None else v.spacing_mm
    if isinstance(v, LabelVolume):
        return LabelVolume(array, spacing)  # type: ignore[return-value]
    return Volume(array, spacing, v.value_kind)  # type: ignore[return-value]


def same_geometry(a: AnyVolume, b: AnyVolume) -> bool:
    """True when both volumes share shape and spacing."""
    return a.shape == b.shape and np.allclose(a.spacing_mm, b.spacing_mm, rtol=1e-9)


def require_same_geometry(a: AnyVolume, b: AnyVolume, *, context: str) -> None:
    """Raise GeometryError unless ``a`` and ``b`` share shape and spacing."""
    if not same_geometry(a, b):
        raise GeometryError(
            f"{context}: geometry mismatch {a.shape}@{a.spacing_mm} "
            f"vs {b.shape}@{b.spacing_mm}"
        )


# =============================================================================
# File IO
# =============================================================================


def _header_path(path: str | Path) -> Path:
    p = Path(path)
    return p if p.suffix == HEADER_SUFFIX else p.with_suffix(HEADER_SUFFIX)


def _parse_header(header_path: Path) -> tuple[VolumeHeaderDict, str]:
    try:
        raw = json.loads(header_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise VolumeFormatError(f"{header_path}: malformed header JSON: {e}") from e
    if not isinstance(raw, dict):
        raise VolumeFormatError(f"{header_path}: header must be a JSON object")

    missing = [k for k in ("shape", "spacing_mm", "dtype") if k not in raw]
    if missing:
        raise VolumeFormatError(f"{header_path}: header missing fields {missing}")

    shape = raw["shape"]
    if (
        not isinstance(shape, list)
        or len(shape) != 3
        or not all(isinstance(n, int) and n > 0 for n in shape)
    ):
        raise VolumeFormatError(f"{header_path}: shape must be 3 positive ints, got {shape}")

    spacing = raw["spacing_mm"]
    if not isinstance(spacing, list) or len(spacing) != 3:
        raise VolumeFormatError(f"{header_path}: spacing_mm must have 3 entries")
    try:
        _check_spacing(spacing)
    except GeometryError as e:
        raise VolumeFormatError(f"{header_path}: {e}") from e

    if raw["dtype"] not in _DTYPES:
        raise VolumeFormatError(
            f"{header_path}: unsupported dtype {raw['dtype']!r} "
            f"(expected one of {sorted(_DTYPES)})"
        )

    byte_order = raw.get("byte_order", "little")
    if byte_order != "little":
        raise VolumeFormatError(f"{header_path}: unsupported byte_order {byte_order!r}")

    value_kind = str(raw.get("value_kind", "intensity"))
    header: VolumeHeaderDict = {
        "shape": shape,
        "spacing_mm": [float(s) for s in spacing],
        "dtype": raw["dtype"],
        "byte_order": byte_order,
        "data_file": str(raw.get("data_file", header_path.stem + RAW_SUFFIX)),
    }
    return header, value_kind


@stage_call("load_volume")
def load_volume(path: str | Path) -> AnyVolume:
    """Load a volume from a ``.vjson`` header and its raw data file.

    Args:
        path: Header path (the ``.vjson`` suffix is added if missing).

    Returns:
        A ``Volume`` for f32 data or a ``LabelVolume`` for u8 data, in native
        byte order.

    Raises:
        VolumeNotFoundError: Header or raw file is missing.
        VolumeFormatError: Header is malformed or names an unsupported dtype.
        DataLengthError: Raw file size disagrees with the header shape.
    """
    header_path = _header_path(path)
    if not header_path.is_file():
        raise VolumeNotFoundError(f"load_volume: header not found: {header_path}")

    header, value_kind = _parse_header(header_path)
    raw_path = header_path.parent / header["data_file"]
    if not raw_path.is_file():
        raise VolumeNotFoundError(f"load_volume: raw data file not found: {raw_path}")

    dtype = np.dtype(_DTYPES[header["dtype"]])
    shape = tuple(header["shape"])
    expected = int(np.prod(shape)) * dtype.itemsize
    actual = raw_path.stat().st_size
    if actual != expected:
        raise DataLengthError(
            f"load_volume: {raw_path} holds {actual} bytes, header shape {list(shape)} "
            f"with dtype {header['dtype']} needs {expected}"
        )

    flat = np.fromfile(raw_path, dtype=dtype)
    spacing = tuple(header["spacing_mm"])
    logger.debug("Loaded %s shape=%s dtype=%s", header_path, shape, header["dtype"])

    if header["dtype"] == "u8":
        return LabelVolume(flat.reshape(shape).astype(np.uint8), spacing)  # type: ignore[arg-type]
    return Volume(flat.reshape(shape).astype(np.float32), spacing, value_kind)  # type: ignore[arg-type]


def load_intensity(path: str | Path) -> Volume:
    """Load a float volume, rejecting label files."""
    volume = load_volume(path)
    if not isinstance(volume, Volume):
        raise VolumeFormatError(f"{path}: expected f32 volume, found u8 labels")
    return volume


def load_labels(path: str | Path) -> LabelVolume:
    """Load a label volume, rejecting float files."""
    volume = load_volume(path)
    if not isinstance(volume, LabelVolume):
        raise VolumeFormatError(f"{path}: expected u8 labels, found f32 volume")
    return volume


@stage_call("save_volume", writes=True)
def save_volume(v: AnyVolume, path: str | Path) -> Path:
    """Write ``v`` as a ``.vjson`` header plus a little-endian raw file.

    Intensities and probabilities are written as f32, labels as u8.

    Returns:
        Path of the written header.
    """
    header_path = _header_path(path)
    raw_path = header_path.with_suffix(RAW_SUFFIX)

    if isinstance(v, LabelVolume):
        dtype_name = "u8"
        payload = v.labels
    else:
        dtype_name = "f32"
        payload = v.data

    header: WrittenHeaderDict = {
        "shape": list(v.shape),
        "spacing_mm": list(v.spacing_mm),
        "dtype": dtype_name,
        "byte_order": "little",
        "data_file": raw_path.name,
    }
    if isinstance(v, Volume):
        header["value_kind"] = v.value_kind

    np.ascontiguousarray(payload, dtype=_DTYPES[dtype_name]).tofile(raw_path)
    header_path.write_text(json.dumps(header, indent=2), encoding="utf-8")
    logger.debug("Saved %s shape=%s dtype=%s", header_path, v.shape, dtype_name)
    return header_path


# =============================================================================
# Intensity preprocessing
# =============================================================================


def normalize_intensities(v: Volume, lo_pct: float = 5.0, hi_pct: float = 99.5) -> Volume:
    """Clip to the [lo_pct, hi_pct] percentile range, then standardize.

    Percentiles interpolate linearly between order statistics. The mean and
    standard deviation are those of the clipped volume.

    Raises:
        ValueError: Percentiles out of order or the volume is not an intensity
            volume with at least two voxels.
        DegenerateInputError: The clipped volume is constant.
    """
    if not 0.0 <= lo_pct < hi_pct <= 100.0:
        raise ValueError(f"Need 0 <= lo_pct < hi_pct <= 100, got {lo_pct}, {hi_pct}")
    if v.value_kind != "intensity":
        raise ValueError("normalize_intensities expects an intensity volume")
    if v.data.size < 2:
        raise ValueError("normalize_intensities needs at least two voxels")

    values = v.data.astype(np.float64)
    p_lo, p_hi = np.percentile(values, [lo_pct, hi_pct], method="linear")
    clipped = np.clip(values, p_lo, p_hi)
    mean = float(clipped.mean())
    std = float(clipped.std())
    if not np.isfinite(std) or std <= 1e-12 * max(1.0, abs(mean)):
        raise DegenerateInputError(
            f"Volume is constant after clipping to [{p_lo}, {p_hi}]; cannot standardize"
        )
    return Volume((clipped - mean) / std, v.spacing_mm, "intensity")


# =============================================================================
# Resampling
# =============================================================================


def resampled_shape(shape: Shape3, spacing_mm: Spacing3, target_mm: float) -> Shape3:
    """Shape after resampling to ``target_mm``: round-to-nearest, at least 1."""
    return tuple(  # type: ignore[return-value]
        max(1, int(np.floor(n * s / target_mm + 0.5))) for n, s in zip(shape, spacing_mm)
    )


def nearest_source_indices(out_idx: np.ndarray, ratio: float, n_in: int) -> np.ndarray:
    """Source voxel whose footprint contains each output voxel center.

    ``ratio`` is output spacing over input spacing. Centers that land exactly
    on a voxel face go to the upper voxel.
    """
    src = np.floor((np.asarray(out_idx, dtype=np.float64) + 0.5) * ratio + 1e-9)
    return np.clip(src.astype(np.int64), 0, n_in - 1)


def _linear_axis(array: np.ndarray, axis: int, n_out: int, ratio: float) -> np.ndarray:
    n_in = array.shape[axis]
    pos = (np.arange(n_out, dtype=np.float64) + 0.5) * ratio - 0.5
    pos = np.clip(pos, 0.0, n_in - 1)
    i0 = np.minimum(np.floor(pos).astype(np.int64), max(n_in - 2, 0))
    i1 = np.minimum(i0 + 1, n_in - 1)
    w = pos - i0

    bshape = [1, 1, 1]
    bshape[axis] = n_out
    w = w.reshape(bshape)
    lower = np.take(array, i0, axis=axis)
    upper = np.take(array, i1, axis=axis)
    return lower * (1.0 - w) + upper * w


def resample_isotropic(v: Volume, target_mm: float) -> Volume:
    """Trilinear resampling to ``target_mm`` isotropic spacing.

    Output voxel centers are mapped into the input's physical frame; samples
    outside the input grid take the nearest edge voxel. Trilinear
    interpolation is separable, so it runs one axis at a time.
    """
    if target_mm <= 0:
        raise ValueError(f"target_mm must be positive, got {target_mm}")
    out_shape = resampled_shape(v.shape, v.spacing_mm, target_mm)
    result = v.data.astype(np.float64)
    for axis in range(3):
        result = _linear_axis(result, axis, out_shape[axis], target_mm / v.spacing_mm[axis])
    if v.value_kind == "probability":
        result = np.clip(result, 0.0, 1.0)
    return Volume(result, (target_mm, target_mm, target_mm), v.value_kind)


def resample_labels_to(lv: LabelVolume, shape: Shape3, spacing_mm: Spacing3) -> LabelVolume:
    """Nearest-neighbor resampling of ``lv`` onto an arbitrary grid in the same frame."""
    spacing = _check_spacing(spacing_mm)
    result = lv.labels
    for axis in range(3):
        idx = nearest_source_indices(
            np.arange(shape[axis]), spacing[axis] / lv.spacing_mm[axis], lv.shape[axis]
        )
        result = np.take(result, idx, axis=axis)
    return LabelVolume(result, spacing)


def resample_labels(lv: LabelVolume, target_mm: float) -> LabelVolume:
    """Nearest-neighbor resampling to ``target_mm``; never invents labels."""
    if target_mm <= 0:
        raise ValueError(f"target_mm must be positive, got {target_mm}")
    out_shape = resampled_shape(lv.shape, lv.spacing_mm, target_mm)
    return resample_labels_to(lv, out_shape, (target_mm, target_mm, target_mm))


# =============================================================================
# Cropping
# =============================================================================


def random_crop(v: V, size: Shape3, seed: int) -> V:
    """Crop ``size`` voxels at a seeded uniform origin.

    Axes where ``size`` exceeds the volume are zero-padded symmetrically (the
    extra voxel of an odd pad goes after). Image and label volumes of the
    same shape cropped with the same seed line up.
    """
    rng = np.random.default_rng(seed)
    array = _array_of(v)
    slices: list[slice] = []
    pads: list[tuple[int, int]] = []
    for n, want in zip(v.shape, size):
        if want <= 0:
            raise ValueError(f"crop size must be positive, got {size}")
        if want <= n:
            origin = int(rng.integers(0, n - want + 1))
            slices.append(slice(origin, origin + want))
            pads.append((0, 0))
        else:
            slices.append(slice(0, n))
            before = (want - n) // 2
            pads.append((before, want - n - before))
    cropped = np.pad(array[tuple(slices)], pads, mode="constant", constant_values=0)
    return _rebuild(v, cropped)


def crop_box(v: V, start: Shape3, stop: Shape3) -> V:
    """Crop the half-open index box [start, stop)."""
    for a, b, n in zip(start, stop, v.shape):
        if not 0 <= a < b <= n:
            raise GeometryError(f"Box {start}-{stop} outside volume shape {v.shape}")
    index = tuple(slice(a, b) for a, b in zip(start, stop))
    return _rebuild(v, np.array(_array_of(v)[index]))
