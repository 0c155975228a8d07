"""Shared fixtures: synthetic feature stacks written to disk.

The generator builds stacks that behave like real ones:

- the images share a smooth base field (same scene) and diverge by a small
  low-frequency amount (different variation), with per-image fine texture
  so the stack spans a range of gradient statistics;
- the per-cell features are coupled to image content (a fixed projection
  of block-mean color) plus shared structure and jitter, so feature-space
  edges line up with image edges the way attention features do.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from gpmcut.tensorio import TensorBlob, write_blob


def smooth_field(rng: np.random.Generator, height: int, width: int,
                 channels: int, coarse: int = 4) -> np.ndarray:
    """Low-frequency random field: coarse noise upsampled bilinearly."""
    coarse_h = max(2, min(coarse, height))
    coarse_w = max(2, min(coarse, width))
    grid = rng.normal(size=(coarse_h, coarse_w, channels))
    ys = np.linspace(0, coarse_h - 1, height)
    xs = np.linspace(0, coarse_w - 1, width)
    y0 = np.clip(np.floor(ys).astype(int), 0, coarse_h - 2)
    x0 = np.clip(np.floor(xs).astype(int), 0, coarse_w - 2)
    fy = (ys - y0)[:, None, None]
    fx = (xs - x0)[None, :, None]
    top = grid[y0][:, x0] * (1 - fx) + grid[y0][:, x0 + 1] * fx
    bot = grid[y0 + 1][:, x0] * (1 - fx) + grid[y0 + 1][:, x0 + 1] * fx
    return (top * (1 - fy) + bot * fy).astype(np.float64)


def unit_amplitude(field: np.ndarray) -> np.ndarray:
    return field / max(np.abs(field).max(), 1e-9)


def block_mean(image: np.ndarray, grid_h: int, grid_w: int) -> np.ndarray:
    """Mean color per cell: (H, W, C) -> (grid_h, grid_w, C), float in [0,1]."""
    h, w, c = image.shape
    bh, bw = h // grid_h, w // grid_w
    blocks = image[: grid_h * bh, : grid_w * bw].reshape(
        grid_h, bh, grid_w, bw, c)
    return blocks.mean(axis=(1, 3))


DEFAULT_LAYERS = (
    {"layer_id": "enc0", "role": "encoder", "feat_width": 8, "feat_height": 8,
     "heads": 2, "dim": 4},
    {"layer_id": "dec0", "role": "decoder", "feat_width": 4, "feat_height": 4,
     "heads": 2, "dim": 8},
)


def make_stack_dir(
    root: Path,
    n_images: int = 3,
    width: int = 32,
    height: int = 32,
    layers=DEFAULT_LAYERS,
    timesteps=(0, 10),
    seed: int = 0,
    image_divergence: float = 0.08,
    texture_amplitudes=None,
    texture_coarse: int = 16,
    feature_coupling: float = 3.0,
    feature_jitter: float = 0.25,
    prompts: bool = True,
) -> Path:
    """Write a complete synthetic stack under ``root``; returns manifest path.

    ``texture_amplitudes`` gives each image its own fine-texture strength
    (defaults to 0.05 everywhere); ``image_divergence`` scales the smooth
    per-image deviation from the shared scene.
    """
    root = Path(root)
    (root / "images").mkdir(parents=True, exist_ok=True)
    (root / "tensors").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    if texture_amplitudes is None:
        texture_amplitudes = [0.05] * n_images
    if len(texture_amplitudes) != n_images:
        raise ValueError("texture_amplitudes must have one entry per image")

    # correlated images: shared scene + smooth divergence + fine texture
    base = smooth_field(rng, height, width, 3, coarse=5)
    base = (base - base.min()) / max(np.ptp(base), 1e-9)
    floats = []
    image_paths = []
    for i in range(n_images):
        delta = unit_amplitude(smooth_field(rng, height, width, 3, coarse=6))
        fine = unit_amplitude(smooth_field(rng, height, width, 3,
                                           coarse=texture_coarse))
        img = np.clip(base + image_divergence * delta
                      + texture_amplitudes[i] * fine, 0.0, 1.0)
        floats.append(img)
        arr = np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)
        rel = f"images/img{i}.png"
        Image.fromarray(arr, mode="RGB").save(root / rel)
        image_paths.append(rel)

    tensors = {}
    for rec in layers:
        h, w = rec["feat_height"], rec["feat_width"]
        heads, dim = rec["heads"], rec["dim"]
        for t in timesteps:
            for which in ("Q", "K", "V"):
                shared = smooth_field(rng, h, w, heads * dim)
                proj = rng.normal(size=(3, heads * dim)) / np.sqrt(3.0)
                for i in range(n_images):
                    content = block_mean(floats[i], h, w) @ proj
                    jitter = rng.normal(size=(h, w, heads * dim))
                    cells = (feature_coupling * content + shared
                             + feature_jitter * jitter)
                    tensor = cells.reshape(h, w, heads, dim)
                    tensor = tensor.transpose(2, 0, 1, 3).astype(np.float32)
                    rel = f"tensors/i{i}_{rec['layer_id']}_t{t}_{which}.gpmt"
                    write_blob(root / rel, TensorBlob.from_array(tensor))
                    tensors[f"{i}/{rec['layer_id']}/{t}/{which}"] = rel

    manifest = {
        "version": 1,
        "n_images": n_images,
        "width": width,
        "height": height,
        "images": image_paths,
        "layers": [dict(rec) for rec in layers],
        "timesteps": list(timesteps),
        "tensors": tensors,
        "prompts": [f"sample prompt {i}" for i in range(n_images)] if prompts else [],
        "seeds": list(range(100, 100 + n_images)) if prompts else [],
    }
    manifest_path = root / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=1, sort_keys=True))
    return manifest_path


@pytest.fixture(scope="session")
def stack_dir(tmp_path_factory) -> Path:
    """Manifest path for a small shared stack (3 images, 32x32, 8x8 grid)."""
    root = tmp_path_factory.mktemp("stack")
    return make_stack_dir(root)


@pytest.fixture(scope="session")
def stack(stack_dir):
    from gpmcut.stack import load_stack

    return load_stack(stack_dir)


@pytest.fixture(scope="session")
def warm_solver():
    """Compile the flow kernels once so timed tests measure steady state."""
    from gpmcut import _flow

    _flow.warmup()
    return True
