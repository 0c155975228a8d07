"""Label-map driven compositing: masks per layer, composite K/V/Q, pixels.

A solved label map lives on the segmentation layer's grid. Every other
layer (and the pixel canvas) gets a nearest-neighbor resize of it; the
per-image one-hot masks of that resize partition each grid by
construction. Composite tensors are exact per-cell gathers — cell p takes
image ``labels[p]``'s value — which is the masked-sum mixing rule
evaluated without floating-point artifacts, so identities such as
"all-base composite == base tensor" hold bitwise.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ShapeMismatch
from .stack import FeatureStack
from .tensorio import TensorBlob, write_blob


def resize_nearest(grid: np.ndarray, out_hw: tuple) -> np.ndarray:
    """Nearest-neighbor resize of a 2-d map to (out_h, out_w).

    Sample centers map linearly: source index = floor((i + 0.5) * src / dst).
    """
    src_h, src_w = grid.shape
    out_h, out_w = int(out_hw[0]), int(out_hw[1])
    rows = np.minimum((np.arange(out_h) + 0.5) * (src_h / out_h), src_h - 1).astype(np.int64)
    cols = np.minimum((np.arange(out_w) + 0.5) * (src_w / out_w), src_w - 1).astype(np.int64)
    return grid[rows[:, None], cols[None, :]]


@dataclass(frozen=True)
class MaskPyramid:
    """Per-layer one-hot masks (N, h_l, w_l) plus the resized label maps."""

    n_images: int
    layer_labels: dict  # layer_id -> (h_l, w_l) int32
    masks: dict  # layer_id -> (N, h_l, w_l) uint8

    def labels_for(self, layer_id: str) -> np.ndarray:
        return self.layer_labels[layer_id]


def build_masks(labels: np.ndarray, manifest) -> MaskPyramid:
    """Resize the label map to every layer and one-hot it per image."""
    labels = np.asarray(labels, dtype=np.int32)
    n = manifest.n_images
    layer_labels = {}
    masks = {}
    for rec in manifest.layers:
        resized = resize_nearest(labels, (rec.feat_height, rec.feat_width))
        onehot = (resized[None, :, :] == np.arange(n)[:, None, None]).astype(np.uint8)
        layer_labels[rec.layer_id] = resized
        masks[rec.layer_id] = onehot
    return MaskPyramid(n_images=n, layer_labels=layer_labels, masks=masks)


def _gather_cells(stacked: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Per-cell select over image axis: out[..., y, x, :] = stacked[labels[y, x], ..., y, x, :]."""
    n, heads, h, w, dim = stacked.shape
    rows = np.arange(h)[:, None]
    cols = np.arange(w)[None, :]
    # (h, w, N, heads, dim) indexed by the label grid -> (h, w, heads, dim)
    picked = stacked.transpose(2, 3, 0, 1, 4)[rows, cols, labels]
    return np.ascontiguousarray(picked.transpose(2, 0, 1, 3))


def composite_kv(stack: FeatureStack, masks: MaskPyramid, layer_id: str, timestep: int) -> tuple:
    """Composite key/value tensors for one layer and timestep.

    Each cell carries the K (resp. V) of the image its mask selects;
    equivalently the sum over images of mask-weighted tensors, computed as
    an exact gather.
    """
    labels = masks.labels_for(layer_id)
    k_stack = np.stack(
        [stack.tensor(i, layer_id, timestep, "K") for i in range(stack.n_images)]
    )
    v_stack = np.stack(
        [stack.tensor(i, layer_id, timestep, "V") for i in range(stack.n_images)]
    )
    return _gather_cells(k_stack, labels), _gather_cells(v_stack, labels)


def composite_q(
    stack: FeatureStack,
    masks: MaskPyramid,
    layer_id: str,
    timestep: int,
    q_model: np.ndarray,
    base_index: int,
) -> np.ndarray:
    """Composite query tensor: live ``q_model`` on base cells, stored Q elsewhere.

    ``q_model`` must be the caller's live query activation for this layer
    and timestep — the stored base-image Q is never substituted for it.
    """
    layer = stack.manifest.layer(layer_id)
    q_model = np.asarray(q_model, dtype=np.float32)
    if q_model.shape != layer.tensor_shape:
        raise ShapeMismatch(
            f"q_model shape {q_model.shape} != layer {layer_id} shape {layer.tensor_shape}"
        )
    labels = masks.labels_for(layer_id)
    q_stack = np.stack(
        [stack.tensor(i, layer_id, timestep, "Q") for i in range(stack.n_images)]
    )
    q_stack = q_stack.copy()
    q_stack[base_index] = q_model
    return _gather_cells(q_stack, labels)


@dataclass(frozen=True)
class PixelComposite:
    """Hard pixel composite and the full-resolution label map behind it."""

    image: np.ndarray  # (H, W, 3) uint8
    fullres_labels: np.ndarray  # (H, W) int32


def fullres_labels(labels: np.ndarray, manifest) -> np.ndarray:
    return resize_nearest(np.asarray(labels, dtype=np.int32),
                          (manifest.height, manifest.width))


def pixel_composite(stack: FeatureStack, labels: np.ndarray) -> PixelComposite:
    """Exact per-pixel gather from source images by upsampled labels."""
    lab = fullres_labels(labels, stack.manifest)
    height, width = lab.shape
    rows = np.arange(height)[:, None]
    cols = np.arange(width)[None, :]
    image = stack.images[lab, rows, cols]
    return PixelComposite(image=np.ascontiguousarray(image), fullres_labels=lab)


def label_map_hash(labels: np.ndarray) -> str:
    labels = np.asarray(labels, dtype=np.int32)
    digest = hashlib.sha256()
    digest.update(np.asarray(labels.shape, dtype=np.int64).tobytes())
    digest.update(np.ascontiguousarray(labels).tobytes())
    return digest.hexdigest()


def export_bundle(
    stack: FeatureStack,
    labels: np.ndarray,
    out_dir,
    base_index: int,
    stack_id: str = "",
    params: dict | None = None,
    manifest_path: str = "",
) -> Path:
    """Write a composite bundle directory.

    Layout: ``masks/{layer}.gpmt`` (one-hot, f32, shape (N, h_l, w_l)),
    ``kv/{layer}_{t}_K.gpmt`` / ``..._V.gpmt`` per layer and timestep,
    ``bundle.json`` (provenance incl. base index and Q-mixing sources),
    ``preview.png`` and ``labels.png`` (indexed palette).
    """
    from .labelpng import save_label_png, save_rgb_png

    out_dir = Path(out_dir)
    (out_dir / "masks").mkdir(parents=True, exist_ok=True)
    (out_dir / "kv").mkdir(parents=True, exist_ok=True)

    man = stack.manifest
    masks = build_masks(labels, man)
    for rec in man.layers:
        blob = TensorBlob.from_array(masks.masks[rec.layer_id].astype(np.float32))
        write_blob(out_dir / "masks" / f"{rec.layer_id}.gpmt", blob)
        for t in man.timesteps:
            k_comp, v_comp = composite_kv(stack, masks, rec.layer_id, t)
            write_blob(out_dir / "kv" / f"{rec.layer_id}_{t}_K.gpmt",
                       TensorBlob.from_array(k_comp))
            write_blob(out_dir / "kv" / f"{rec.layer_id}_{t}_V.gpmt",
                       TensorBlob.from_array(v_comp))

    composite = pixel_composite(stack, labels)
    save_rgb_png(out_dir / "preview.png", composite.image)
    save_label_png(out_dir / "labels.png", np.asarray(labels, dtype=np.int32))

    doc = {
        "stack_id": stack_id,
        "manifest_path": str(manifest_path),
        "base_index": int(base_index),
        "label_hash": label_map_hash(labels),
        "n_images": man.n_images,
        "layers": [rec.layer_id for rec in man.layers],
        "timesteps": list(man.timesteps),
        "params": params or {},
        "q_mixing": {
            "base_index": int(base_index),
            "note": "base cells take the live query; other cells take the "
                    "stored per-image Q referenced by the stack manifest",
        },
    }
    (out_dir / "bundle.json").write_text(json.dumps(doc, indent=2, sort_keys=True))
    return out_dir
