"""gpmcut: composite stacks of aligned generated images by graph cut.

Given several images generated from the same prompt and their attention
features, the engine turns sparse user strokes into a per-cell image
assignment (multi-label graph cut over a feature-space smoothness field),
then emits composited attention tensors, pixel previews, and seam metrics.
"""

from .compositor import (
    MaskPyramid,
    PixelComposite,
    build_masks,
    composite_kv,
    composite_q,
    export_bundle,
    pixel_composite,
    resize_nearest,
)
from .config import EngineConfig, load_config
from .energy import (
    DEFAULT_CONSTRAINT_COST,
    DEFAULT_SIGMA,
    DEFAULT_SMOOTHNESS,
    SDXL_SIGMA,
    EnergyModel,
    GraphCutParams,
    build_energy,
    edge_weights,
    labeling_energy,
)
from .errors import (
    BadDtype,
    BadMagic,
    BlobError,
    DataError,
    StackError,
    TruncatedFile,
    UnsupportedVersion,
)
from .features import FeatureSelection, GridPca, fit_pca, project, select_features
from .metrics import masked_ssim, metrics_report, psnr, seam_pixels, sg_score
from .pipeline import SegmentResult, reduce_stack, segment
from .poisson import NoBoundaryWarning, poisson_blend
from .solver import (
    GridGraphCut,
    LabelMap,
    honors_designations,
    solve_alpha_expansion,
    solve_binary,
)
from .stack import FeatureStack, LayerSpec, StackManifest, load_stack, parse_manifest
from .store import StackStore
from .strokes import Stroke, StrokeSet, rasterize_strokes
from .tensorio import TensorBlob, read_blob, read_blob_header, write_blob

__version__ = "0.1.0"

__all__ = [
    "BadDtype",
    "BadMagic",
    "BlobError",
    "DataError",
    "DEFAULT_CONSTRAINT_COST",
    "DEFAULT_SIGMA",
    "DEFAULT_SMOOTHNESS",
    "EngineConfig",
    "EnergyModel",
    "FeatureSelection",
    "FeatureStack",
    "GraphCutParams",
    "GridGraphCut",
    "GridPca",
    "LabelMap",
    "LayerSpec",
    "MaskPyramid",
    "NoBoundaryWarning",
    "PixelComposite",
    "SDXL_SIGMA",
    "SegmentResult",
    "StackError",
    "StackManifest",
    "StackStore",
    "Stroke",
    "StrokeSet",
    "TensorBlob",
    "TruncatedFile",
    "UnsupportedVersion",
    "build_energy",
    "build_masks",
    "composite_kv",
    "composite_q",
    "edge_weights",
    "export_bundle",
    "fit_pca",
    "honors_designations",
    "labeling_energy",
    "load_config",
    "load_stack",
    "masked_ssim",
    "metrics_report",
    "parse_manifest",
    "pixel_composite",
    "poisson_blend",
    "project",
    "psnr",
    "rasterize_strokes",
    "read_blob",
    "read_blob_header",
    "reduce_stack",
    "resize_nearest",
    "seam_pixels",
    "segment",
    "select_features",
    "sg_score",
    "solve_alpha_expansion",
    "solve_binary",
    "write_blob",
]
