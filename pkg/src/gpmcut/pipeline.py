"""End-to-end segmentation: features -> PCA -> strokes -> energy -> labels."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .energy import GraphCutParams, build_energy
from .features import DEFAULT_COMPONENTS, FeatureSelection, fit_pca, project, select_features
from .solver import LabelMap, honors_designations, solve_alpha_expansion
from .stack import FeatureStack
from .strokes import StrokeSet, rasterize_strokes


@dataclass(frozen=True)
class SegmentResult:
    label_map: LabelMap
    designations: np.ndarray
    honors_strokes: bool
    timings: dict  # stage -> seconds


def reduce_stack(stack: FeatureStack, selection: FeatureSelection | None = None,
                 n_components: int = DEFAULT_COMPONENTS) -> tuple:
    """Select features and fit/apply the joint PCA. Returns (model, grids)."""
    selection = selection or FeatureSelection()
    raw = select_features(stack, selection)
    model = fit_pca(raw, n_components=n_components)
    return model, project(model, raw)


def segment(
    stack: FeatureStack,
    strokes: StrokeSet,
    selection: FeatureSelection | None = None,
    params: GraphCutParams | None = None,
    reduced_grids: list | None = None,
) -> SegmentResult:
    """Solve the stroke-constrained segmentation for a stack.

    ``reduced_grids`` lets callers supply cached PCA-reduced features
    (the expensive stage); otherwise they are computed here.
    """
    man = stack.manifest
    strokes.validate(man.n_images, man.width, man.height)
    timings = {}

    start = time.perf_counter()
    if reduced_grids is None:
        _, reduced_grids = reduce_stack(stack, selection)
    timings["features"] = time.perf_counter() - start

    layer = man.segmentation_layer if (selection is None or selection.layer is None) \
        else man.layer(selection.layer)

    start = time.perf_counter()
    designations = rasterize_strokes(
        strokes,
        (man.width, man.height),
        (layer.feat_width, layer.feat_height),
    )
    timings["rasterize"] = time.perf_counter() - start

    start = time.perf_counter()
    model = build_energy(
        np.stack(reduced_grids),
        designations,
        params,
        base_index=strokes.base_index,
    )
    timings["energy"] = time.perf_counter() - start

    start = time.perf_counter()
    label_map = solve_alpha_expansion(model)
    timings["solve"] = time.perf_counter() - start

    return SegmentResult(
        label_map=label_map,
        designations=designations,
        honors_strokes=honors_designations(model, label_map.labels),
        timings=timings,
    )
