"""Coarse-to-fine tooth segmentation toolkit for CBCT volumes.

Quick start:
    from toothseglib import default_jaw, generate_phantom, run_pipeline
    from toothseglib import PipelineConfig, oracle_coarse, threshold_fine

    image, gt, annotations = generate_phantom(default_jaw(8, (96, 96, 96)))
    labels = run_pipeline(image, oracle_coarse(gt), threshold_fine(0.5), PipelineConfig())
"""

from toothseglib.core import types
from toothseglib.core.config import AppConfig, Config
from toothseglib.core.exceptions import (
    AnnotationError,
    DataLengthError,
    DegenerateInputError,
    EmptyMaskError,
    GeometryError,
    PhantomError,
    SegmenterError,
    ToothNotFoundError,
    ToothSegError,
    VolumeFormatError,
    VolumeNotFoundError,
)
from toothseglib.core.utils.logging import get_logger
from toothseglib.stages.metrics import EvalReport, ProbStack, asd, evaluate, iou, match_labels, soft_jaccard_loss
from toothseglib.stages.phantom import PhantomConfig, ToothSpec, default_jaw, generate_phantom, save_study
from toothseglib.stages.roi import Box3, RoICrop, bounding_box, expand_box, extract_roi, largest_component, stitch
from toothseglib.stages.segmenters import (
    CoarseSegmenter,
    FineSegmenter,
    PipelineConfig,
    classical_coarse,
    external_coarse,
    external_fine,
    get_coarse,
    get_fine,
    oracle_coarse,
    oracle_fine,
    threshold_fine,
    upsample_fine,
)
from toothseglib.stages.volume import (
    LabelVolume,
    Volume,
    load_intensity,
    load_labels,
    load_volume,
    normalize_intensities,
    random_crop,
    resample_isotropic,
    resample_labels,
    save_volume,
)
from toothseglib.stages.weaklabels import (
    AnnotationSet,
    AxialBox,
    Centerline,
    DistanceField,
    EnergyParams,
    build_centerline,
    distance_field,
    energy_argmax,
    parse_annotations,
    weak_to_mask,
)
from toothseglib.workflows.pipeline import compare_regimes, run_pipeline, run_pipeline_detailed

__all__ = [
    # Core
    "AppConfig",
    "Config",
    "get_logger",
    "types",
    # Errors
    "ToothSegError",
    "VolumeFormatError",
    "DataLengthError",
    "VolumeNotFoundError",
    "AnnotationError",
    "GeometryError",
    "DegenerateInputError",
    "EmptyMaskError",
    "ToothNotFoundError",
    "PhantomError",
    "SegmenterError",
    # Volumes
    "Volume",
    "LabelVolume",
    "load_volume",
    "load_intensity",
    "load_labels",
    "save_volume",
    "normalize_intensities",
    "resample_isotropic",
    "resample_labels",
    "random_crop",
    # Weak labels
    "AxialBox",
    "AnnotationSet",
    "Centerline",
    "DistanceField",
    "EnergyParams",
    "parse_annotations",
    "build_centerline",
    "distance_field",
    "energy_argmax",
    "weak_to_mask",
    # RoI
    "Box3",
    "RoICrop",
    "largest_component",
    "bounding_box",
    "expand_box",
    "extract_roi",
    "stitch",
    # Metrics
    "ProbStack",
    "EvalReport",
    "soft_jaccard_loss",
    "iou",
    "asd",
    "evaluate",
    "match_labels",
    # Segmenters
    "CoarseSegmenter",
    "FineSegmenter",
    "PipelineConfig",
    "oracle_coarse",
    "oracle_fine",
    "classical_coarse",
    "threshold_fine",
    "upsample_fine",
    "external_coarse",
    "external_fine",
    "get_coarse",
    "get_fine",
    # Phantoms
    "PhantomConfig",
    "ToothSpec",
    "default_jaw",
    "generate_phantom",
    "save_study",
    # Workflows
    "run_pipeline",
    "run_pipeline_detailed",
    "compare_regimes",
]
