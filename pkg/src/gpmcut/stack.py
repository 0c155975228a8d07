"""Stack manifest loading and validated access to per-image attention tensors.

A stack directory holds a JSON manifest plus one GPMT file per
(image, layer, timestep, Q|K|V) and one pixel file per image. The manifest
schema (all paths relative to the manifest's directory):

.. code-block:: json

    {
      "version": 1,
      "n_images": 3,
      "width": 512, "height": 512,
      "images": ["img0.png", "..."],
      "layers": [{"layer_id": "enc0", "role": "encoder",
                  "feat_width": 64, "feat_height": 64,
                  "heads": 8, "dim": 40}],
      "timesteps": [0, 1],
      "tensors": {"0/enc0/0/K": "t/0_enc0_0_K.gpmt"},
      "prompts": ["..."], "seeds": [1]
    }

Tensor blobs are stored as (heads, feat_height, feat_width, dim). All
manifest invariants are checked eagerly at load; element data is read
lazily per tensor.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import (
    ImageSizeMismatch,
    LayerNotFound,
    MissingTensor,
    ShapeMismatch,
    StackError,
    TimestepNotFound,
)
from .tensorio import read_blob, read_blob_header

ROLES = ("encoder", "middle", "decoder")
WHICH = ("Q", "K", "V")


@dataclass(frozen=True)
class LayerSpec:
    """Geometry of one self-attention layer's feature grid."""

    layer_id: str
    role: str
    feat_width: int
    feat_height: int
    heads: int
    dim: int

    @property
    def tensor_shape(self) -> tuple:
        return (self.heads, self.feat_height, self.feat_width, self.dim)


@dataclass(frozen=True)
class StackManifest:
    n_images: int
    width: int
    height: int
    images: tuple
    layers: tuple
    timesteps: tuple
    tensors: dict
    prompts: tuple
    seeds: tuple

    def layer(self, layer_id: str) -> LayerSpec:
        for rec in self.layers:
            if rec.layer_id == layer_id:
                return rec
        raise LayerNotFound(f"layer {layer_id!r} not in manifest")

    @property
    def segmentation_layer(self) -> LayerSpec:
        """The first encoder layer; substrate for stroke segmentation."""
        for rec in self.layers:
            if rec.role == "encoder":
                return rec
        raise LayerNotFound("manifest has no encoder layer")

    def tensor_key(self, image: int, layer_id: str, timestep: int, which: str) -> str:
        return f"{image}/{layer_id}/{timestep}/{which}"


def tensor_data_nbytes(manifest: StackManifest, bytes_per_element: int = 4) -> int:
    """Total element bytes for all Q/K/V tensors declared by the manifest.

    Computed from the size formula (images x layers x timesteps x 3 tensors),
    not from the files on disk.
    """
    per_image = 0
    for rec in manifest.layers:
        cells = rec.heads * rec.feat_height * rec.feat_width * rec.dim
        per_image += cells * bytes_per_element * 3 * len(manifest.timesteps)
    return per_image * manifest.n_images


def _require(cond: bool, err_cls, msg: str):
    if not cond:
        raise err_cls(msg)


def parse_manifest(manifest_path) -> StackManifest:
    """Parse and validate manifest JSON; does not touch tensor files."""
    manifest_path = Path(manifest_path)
    try:
        doc = json.loads(manifest_path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise StackError(f"cannot read manifest {manifest_path}: {exc}") from exc
    for key in ("version", "n_images", "width", "height", "images", "layers",
                "timesteps", "tensors", "prompts", "seeds"):
        _require(key in doc, StackError, f"manifest missing key {key!r}")
    _require(doc["version"] == 1, StackError, f"unsupported manifest version {doc['version']}")
    n = int(doc["n_images"])
    _require(n >= 1, StackError, "n_images must be >= 1")
    width, height = int(doc["width"]), int(doc["height"])
    _require(width >= 1 and height >= 1, StackError, "width/height must be >= 1")
    _require(len(doc["images"]) == n, StackError,
             f"images[] has {len(doc['images'])} entries for n_images={n}")
    _require(len(doc["prompts"]) == n, StackError, "prompts[] length != n_images")
    _require(len(doc["seeds"]) == n, StackError, "seeds[] length != n_images")
    _require(len(doc["layers"]) >= 1, StackError, "layers[] must be nonempty")
    _require(len(doc["timesteps"]) >= 1, StackError, "timesteps[] must be nonempty")

    layers = []
    seen = set()
    for rec in doc["layers"]:
        spec = LayerSpec(
            layer_id=str(rec["layer_id"]),
            role=str(rec["role"]),
            feat_width=int(rec["feat_width"]),
            feat_height=int(rec["feat_height"]),
            heads=int(rec["heads"]),
            dim=int(rec["dim"]),
        )
        _require(spec.role in ROLES, StackError,
                 f"layer {spec.layer_id}: role {spec.role!r} not in {ROLES}")
        _require(spec.layer_id not in seen, StackError, f"duplicate layer id {spec.layer_id}")
        _require(min(spec.feat_width, spec.feat_height, spec.heads, spec.dim) >= 1,
                 StackError, f"layer {spec.layer_id}: nonpositive geometry")
        # any grid is accepted as long as it tiles the image evenly
        _require(width % spec.feat_width == 0 and height % spec.feat_height == 0,
                 ShapeMismatch,
                 f"layer {spec.layer_id}: grid {spec.feat_width}x{spec.feat_height} "
                 f"does not divide image {width}x{height}")
        seen.add(spec.layer_id)
        layers.append(spec)

    return StackManifest(
        n_images=n,
        width=width,
        height=height,
        images=tuple(str(p) for p in doc["images"]),
        layers=tuple(layers),
        timesteps=tuple(int(t) for t in doc["timesteps"]),
        tensors={str(k): str(v) for k, v in doc["tensors"].items()},
        prompts=tuple(str(p) for p in doc["prompts"]),
        seeds=tuple(int(s) for s in doc["seeds"]),
    )


@dataclass
class FeatureStack:
    """A loaded, validated stack: manifest, decoded images, lazy tensors."""

    manifest: StackManifest
    root: Path
    images: np.ndarray  # (N, H, W, 3) uint8
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def n_images(self) -> int:
        return self.manifest.n_images

    def tensor_path(self, image: int, layer_id: str, timestep: int, which: str) -> Path:
        man = self.manifest
        if not 0 <= image < man.n_images:
            raise StackError(f"image index {image} outside [0, {man.n_images})")
        man.layer(layer_id)
        if timestep not in man.timesteps:
            raise TimestepNotFound(f"timestep {timestep} not in manifest")
        if which not in WHICH:
            raise StackError(f"tensor kind {which!r} not one of {WHICH}")
        key = man.tensor_key(image, layer_id, timestep, which)
        rel = man.tensors.get(key)
        if rel is None:
            raise MissingTensor(f"manifest has no tensor for {key}")
        return self.root / rel

    def tensor(self, image: int, layer_id: str, timestep: int, which: str) -> np.ndarray:
        """Tensor as float32 (heads, h, w, dim); f16 files are promoted."""
        key = (image, layer_id, timestep, which)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        path = self.tensor_path(image, layer_id, timestep, which)
        try:
            blob = read_blob(path)
        except FileNotFoundError as exc:
            raise MissingTensor(f"tensor file missing for {key}: {path}") from exc
        arr = blob.as_f32()
        self._cache[key] = arr
        return arr


def load_stack(manifest_path) -> FeatureStack:
    """Load a stack, eagerly checking every manifest invariant.

    Raises
    ------
    MissingTensor
        A referenced blob key or file is absent.
    ShapeMismatch
        A blob's header shape disagrees with its layer record.
    ImageSizeMismatch
        A pixel file does not decode to (width, height).
    """
    manifest_path = Path(manifest_path)
    man = parse_manifest(manifest_path)
    root = manifest_path.parent

    for image in range(man.n_images):
        for rec in man.layers:
            for t in man.timesteps:
                for which in WHICH:
                    key = man.tensor_key(image, rec.layer_id, t, which)
                    rel = man.tensors.get(key)
                    if rel is None:
                        raise MissingTensor(f"manifest has no tensor for {key}")
                    path = root / rel
                    if not path.is_file():
                        raise MissingTensor(f"tensor file missing for {key}: {path}")
                    _, dims = read_blob_header(path)
                    if tuple(dims) != rec.tensor_shape:
                        raise ShapeMismatch(
                            f"{key}: blob shape {tuple(dims)} != layer "
                            f"{rec.layer_id} shape {rec.tensor_shape}"
                        )

    frames = []
    for image, rel in enumerate(man.images):
        path = root / rel
        try:
            with Image.open(path) as im:
                rgb = im.convert("RGB")
                if rgb.size != (man.width, man.height):
                    raise ImageSizeMismatch(
                        f"image {image} ({rel}) is {rgb.size[0]}x{rgb.size[1]}, "
                        f"manifest says {man.width}x{man.height}"
                    )
                frames.append(np.asarray(rgb, dtype=np.uint8))
        except FileNotFoundError as exc:
            raise StackError(f"image file missing: {path}") from exc
    images = np.stack(frames, axis=0)

    return FeatureStack(manifest=man, root=root, images=images)
