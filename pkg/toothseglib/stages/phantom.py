"""Synthetic CBCT studies with exact ground truth.

Teeth are tapered capsules (a crown sphere narrowing linearly to a root-tip
sphere) set into a parabolic jaw slab. The generator returns the intensity
volume, the 33-class ground truth and weak axial-box annotations derived
from that ground truth, so every stage can be checked against known answers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from toothseglib.core.exceptions import PhantomError, stage_call
from toothseglib.core.utils.logging import get_logger
from toothseglib.stages.volume import MAX_LABEL, LabelVolume, Shape3, Spacing3, Volume, save_volume
from toothseglib.stages.weaklabels import AnnotationSet, AxialBox, save_annotations

logger = get_logger("toothseglib.stages.phantom")

Point3 = tuple[float, float, float]

# Annotators mark between 3 and 7 axial slices per tooth.
MIN_ANNOTATED_SLICES = 3
MAX_ANNOTATED_SLICES = 7

# Dense sampling step (mm) used to measure and rasterize the arch curve.
_ARCH_STEP_MM = 0.05


@dataclass(frozen=True)
class ToothSpec:
    """One tooth: capsule from crown center to root tip, radius tapering linearly."""

    tooth_number: int
    crown_center_mm: Point3
    root_tip_mm: Point3
    crown_radius_mm: float
    root_radius_mm: float

    def __post_init__(self) -> None:
        if not 1 <= self.tooth_number <= MAX_LABEL:
            raise PhantomError(f"tooth number {self.tooth_number} outside 1..{MAX_LABEL}")
        if self.crown_radius_mm <= 0 or self.root_radius_mm <= 0:
            raise PhantomError(f"tooth {self.tooth_number}: radii must be positive")

    def bounds_mm(self) -> tuple[np.ndarray, np.ndarray]:
        """Axis-aligned physical bounds of the capsule."""
        c = np.asarray(self.crown_center_mm, dtype=np.float64)
        t = np.asarray(self.root_tip_mm, dtype=np.float64)
        lo = np.minimum(c - self.crown_radius_mm, t - self.root_radius_mm)
        hi = np.maximum(c + self.crown_radius_mm, t + self.root_radius_mm)
        return lo, hi


@dataclass(frozen=True)
class JawArch:
    """Bone slab around the parabola ``y = y_front + depth*((x - x_center)/half_width)**2``.

    The slab covers every voxel whose (y, x) lies within ``half_thickness_mm``
    of the curve and whose z lies in ``[z_low_mm, z_high_mm]``.
    """

    y_front_mm: float
    depth_mm: float
    x_center_mm: float
    half_width_mm: float
    z_low_mm: float
    z_high_mm: float
    half_thickness_mm: float

    def curve(self, step_mm: float = _ARCH_STEP_MM) -> np.ndarray:
        """Dense (y, x) samples along the arch, ordered by x."""
        rough = 2.0 * (self.half_width_mm + self.depth_mm)
        n = max(2, int(math.ceil(rough / step_mm)) + 1)
        x = np.linspace(
            self.x_center_mm - self.half_width_mm, self.x_center_mm + self.half_width_mm, n
        )
        y = self.y_front_mm + self.depth_mm * ((x - self.x_center_mm) / self.half_width_mm) ** 2
        return np.stack([y, x], axis=1)


@dataclass(frozen=True)
class PhantomConfig:
    """Everything ``generate_phantom`` needs; generation is a pure function of it.

    Intensity levels are offsets over ``background_intensity``. Tooth voxels
    take the tooth level even where they sit inside the jaw slab.
    """

    shape: Shape3
    spacing_mm: Spacing3 = (0.4, 0.4, 0.4)
    teeth: tuple[ToothSpec, ...] = ()
    arches: tuple[JawArch, ...] = ()
    background_intensity: float = 0.0
    jaw_intensity: float = 500.0
    tooth_intensity: float = 1500.0
    noise_sigma: float = 0.0
    seed: int = 0
    study_id: str = field(default="phantom")

    def __post_init__(self) -> None:
        numbers = [t.tooth_number for t in self.teeth]
        if len(set(numbers)) != len(numbers):
            raise PhantomError(f"duplicate tooth numbers in {sorted(numbers)}")
        if len(self.shape) != 3 or min(self.shape) < 1:
            raise PhantomError(f"invalid phantom shape {self.shape}")
        if self.noise_sigma < 0:
            raise PhantomError("noise_sigma must be >= 0")
        extent = np.asarray(self.shape) * np.asarray(self.spacing_mm)
        for tooth in self.teeth:
            lo, hi = tooth.bounds_mm()
            if (lo < 0).any() or (hi > extent).any():
                raise PhantomError(
                    f"tooth {tooth.tooth_number} spans {lo.round(2).tolist()}-"
                    f"{hi.round(2).tolist()} mm, outside the {extent.tolist()} mm volume"
                )


def _axis_centers(start: int, stop: int, spacing: float) -> np.ndarray:
    return (np.arange(start, stop) + 0.5) * spacing


def _render_tooth(tooth: ToothSpec, shape: Shape3, spacing_mm: Spacing3) -> tuple[tuple[slice, ...], np.ndarray]:
    """Capsule mask of ``tooth`` restricted to its voxel bounding box."""
    lo, hi = tooth.bounds_mm()
    spacing = np.asarray(spacing_mm)
    start = np.clip(np.floor(lo / spacing).astype(int), 0, shape)
    stop = np.clip(np.ceil(hi / spacing).astype(int) + 1, 0, shape)
    region = tuple(slice(int(a), int(b)) for a, b in zip(start, stop))

    zz, yy, xx = np.meshgrid(
        *(_axis_centers(int(a), int(b), s) for a, b, s in zip(start, stop, spacing)),
        indexing="ij",
    )
    c = np.asarray(tooth.crown_center_mm)
    u = np.asarray(tooth.root_tip_mm) - c
    uu = float(u @ u)
    dz, dy, dx = zz - c[0], yy - c[1], xx - c[2]
    if uu == 0.0:
        t = np.zeros_like(dz)
    else:
        t = np.clip((dz * u[0] + dy * u[1] + dx * u[2]) / uu, 0.0, 1.0)
    radius = tooth.crown_radius_mm + (tooth.root_radius_mm - tooth.crown_radius_mm) * t
    dist2 = (dz - t * u[0]) ** 2 + (dy - t * u[1]) ** 2 + (dx - t * u[2]) ** 2
    return region, dist2 <= radius**2


def _render_arch(arch: JawArch, shape: Shape3, spacing_mm: Spacing3) -> np.ndarray:
    sz, sy, sx = spacing_mm
    nz, ny, nx = shape
    yy, xx = np.meshgrid(_axis_centers(0, ny, sy), _axis_centers(0, nx, sx), indexing="ij")
    distance, _ = cKDTree(arch.curve()).query(np.stack([yy.ravel(), xx.ravel()], axis=1))
    in_plane = (distance <= arch.half_thickness_mm).reshape(ny, nx)
    z = _axis_centers(0, nz, sz)
    in_height = (z >= arch.z_low_mm) & (z <= arch.z_high_mm)
    return in_height[:, None, None] & in_plane[None, :, :]


def _annotate(
    labels: np.ndarray, tooth: int, n_slices: int
) -> list[AxialBox]:
    """Boxes on ``n_slices`` evenly spread slices, capped at the tooth's z-span.

    Raises:
        PhantomError: The tooth spans fewer than MIN_ANNOTATED_SLICES slices.
    """
    mask = labels == tooth
    zs = np.flatnonzero(mask.any(axis=(1, 2)))
    if zs.size == 0:
        return []
    span = int(zs[-1] - zs[0]) + 1
    if span < MIN_ANNOTATED_SLICES:
        raise PhantomError(
            f"tooth {tooth} spans {span} axial slices, fewer than the "
            f"{MIN_ANNOTATED_SLICES} an annotation needs"
        )
    # A step of at least one slice keeps the rounded picks distinct.
    picks = np.round(np.linspace(zs[0], zs[-1], min(n_slices, span))).astype(int)
    boxes = []
    for z in picks:
        plane = mask[z]
        ys = np.flatnonzero(plane.any(axis=1))
        xs = np.flatnonzero(plane.any(axis=0))
        boxes.append(
            AxialBox(tooth, int(z), (int(ys[0]), int(xs[0]), int(ys[-1]) + 1, int(xs[-1]) + 1))
        )
    return boxes


def generate_phantom(cfg: PhantomConfig) -> tuple[Volume, LabelVolume, AnnotationSet]:
    """Render intensities, ground truth and weak annotations for ``cfg``.

    Raises:
        PhantomError: Two teeth share a voxel.
    """
    rng = np.random.default_rng(cfg.seed)
    labels = np.zeros(cfg.shape, dtype=np.uint8)
    for tooth in sorted(cfg.teeth, key=lambda t: t.tooth_number):
        region, inside = _render_tooth(tooth, cfg.shape, cfg.spacing_mm)
        target = labels[region]
        clash = inside & (target != 0)
        if clash.any():
            other = int(target[clash][0])
            raise PhantomError(f"teeth {other} and {tooth.tooth_number} overlap")
        target[inside] = tooth.tooth_number

    image = np.full(cfg.shape, cfg.background_intensity, dtype=np.float64)
    for arch in cfg.arches:
        image[_render_arch(arch, cfg.shape, cfg.spacing_mm)] = (
            cfg.background_intensity + cfg.jaw_intensity
        )
    image[labels != 0] = cfg.background_intensity + cfg.tooth_intensity

    boxes: list[AxialBox] = []
    for tooth in sorted(t.tooth_number for t in cfg.teeth):
        n_slices = int(rng.integers(MIN_ANNOTATED_SLICES, MAX_ANNOTATED_SLICES + 1))
        boxes.extend(_annotate(labels, tooth, n_slices))

    if cfg.noise_sigma > 0:
        image += rng.normal(0.0, cfg.noise_sigma, size=cfg.shape)

    logger.info(
        "phantom %r: %d teeth, %d arches, shape %s", cfg.study_id, len(cfg.teeth), len(cfg.arches), cfg.shape
    )
    annotations = AnnotationSet(cfg.study_id, tuple(boxes), cfg.spacing_mm, cfg.shape)
    return (
        Volume(image, cfg.spacing_mm, "intensity"),
        LabelVolume(labels, cfg.spacing_mm),
        annotations,
    )


# =============================================================================
# Default jaw layout
# =============================================================================


def _jaw_numbers(count: int, first_central: int) -> list[int]:
    """``count`` consecutive tooth numbers centered on a pair of central incisors."""
    start = first_central + 1 - (count + 1) // 2
    return list(range(start, start + count))


def _arch_positions(arch: JawArch, count: int) -> tuple[np.ndarray, float]:
    """Equal arc-length positions of ``count`` teeth along ``arch`` and their pitch."""
    curve = arch.curve()
    seg = np.linalg.norm(np.diff(curve, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    pitch = float(cum[-1]) / count
    at = (np.arange(count) + 0.5) * pitch
    points = np.stack([np.interp(at, cum, curve[:, 0]), np.interp(at, cum, curve[:, 1])], axis=1)
    return points, pitch


def default_jaw(
    n_teeth: int,
    shape: Shape3 = (160, 160, 160),
    spacing_mm: Spacing3 = (0.4, 0.4, 0.4),
    seed: int = 0,
    *,
    noise_sigma: float = 0.0,
) -> PhantomConfig:
    """Place ``n_teeth`` vertical teeth on an upper and a lower parabolic arch.

    The upper arch gets ``ceil(n/2)`` teeth numbered around 8/9, the lower arch
    the rest numbered around 24/25. Numbers run in anatomical order along
    the arch.

    Raises:
        PhantomError: ``n_teeth`` outside 1..32 or the teeth do not fit.
    """
    if not 1 <= n_teeth <= MAX_LABEL:
        raise PhantomError(f"n_teeth must be in 1..{MAX_LABEL}, got {n_teeth}")
    ez, ey, ex = (n * s for n, s in zip(shape, spacing_mm))
    occlusal = ez / 2.0
    gap = 2.0
    root_length = min(0.55 * ez / 2.0, 14.0)

    upper_count = (n_teeth + 1) // 2
    lower_count = n_teeth - upper_count
    base = JawArch(
        y_front_mm=0.2 * ey,
        depth_mm=0.55 * ey,
        x_center_mm=0.5 * ex,
        half_width_mm=0.35 * ex,
        z_low_mm=0.0,
        z_high_mm=0.0,
        half_thickness_mm=0.0,
    )

    teeth: list[ToothSpec] = []
    arches: list[JawArch] = []
    for count, first_central, direction in ((upper_count, 8, 1.0), (lower_count, 24, -1.0)):
        if count == 0:
            continue
        positions, pitch = _arch_positions(base, count)
        crown_r = min(3.0, 0.35 * pitch)
        root_r = max(0.6 * crown_r, min(1.0, crown_r))
        if crown_r < 2.0 * max(spacing_mm):
            raise PhantomError(
                f"{count} teeth leave a {crown_r:.2f} mm crown radius; "
                f"the grid {shape} at {spacing_mm} mm is too small"
            )
        crown_z = occlusal + direction * (gap + crown_r)
        tip_z = crown_z + direction * root_length

        numbers = _jaw_numbers(count, first_central)
        # Upper numbers increase with x, lower numbers decrease.
        if direction < 0:
            numbers = numbers[::-1]
        for number, (y, x) in zip(numbers, positions):
            teeth.append(
                ToothSpec(number, (crown_z, float(y), float(x)), (tip_z, float(y), float(x)), crown_r, root_r)
            )

        neck_z = crown_z
        far_z = tip_z + direction * (root_r + 2.0)
        arches.append(
            JawArch(
                y_front_mm=base.y_front_mm,
                depth_mm=base.depth_mm,
                x_center_mm=base.x_center_mm,
                half_width_mm=base.half_width_mm,
                z_low_mm=min(neck_z, far_z),
                z_high_mm=max(neck_z, far_z),
                half_thickness_mm=crown_r + 2.5,
            )
        )

    try:
        return PhantomConfig(
            shape=tuple(shape),  # type: ignore[arg-type]
            spacing_mm=tuple(spacing_mm),  # type: ignore[arg-type]
            teeth=tuple(teeth),
            arches=tuple(arches),
            noise_sigma=noise_sigma,
            seed=seed,
            study_id=f"phantom-{n_teeth}-{seed}",
        )
    except PhantomError as e:
        raise PhantomError(f"default_jaw({n_teeth}) does not fit: {e}") from e


@stage_call("save_study", writes=True)
def save_study(
    out_dir: str | Path,
    image: Volume,
    labels: LabelVolume,
    annotations: AnnotationSet,
) -> dict[str, Path]:
    """Write ``image.vjson``, ``labels.vjson`` and ``ann.json`` into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return {
        "image": save_volume(image, out / "image"),
        "labels": save_volume(labels, out / "labels"),
        "annotations": save_annotations(annotations, out / "ann.json"),
    }
