"""Filesystem-backed storage for stacks, stroke sessions, and PCA caches.

Layout under the data root:

    stacks/{stack_id}/manifest.json + referenced files
    sessions/{stack_id}.json        stroke set, base index, version counter
    cache/{stack_id}/{selection}.npz  PCA model + reduced feature grids
    exports/{stack_id}/v{version}/  composite bundles

Stack ids are content hashes (manifest bytes plus every referenced file),
so re-ingesting identical data is idempotent.
"""

from __future__ import annotations

import hashlib
import json
import shutil
import threading
from pathlib import Path

import numpy as np

from .errors import DataError, StackError
from .features import DEFAULT_COMPONENTS, FeatureSelection, GridPca
from .pipeline import reduce_stack
from .stack import FeatureStack, load_stack, parse_manifest
from .strokes import Stroke, StrokeSet

ID_LENGTH = 16


def _referenced_files(manifest) -> list:
    rels = list(manifest.images) + sorted(set(manifest.tensors.values()))
    seen = []
    for rel in rels:
        if rel not in seen:
            seen.append(rel)
    return seen


def compute_stack_id(manifest_path) -> str:
    """Content hash of the manifest and every file it references."""
    manifest_path = Path(manifest_path)
    man = parse_manifest(manifest_path)
    digest = hashlib.sha256()
    digest.update(manifest_path.read_bytes())
    root = manifest_path.parent
    for rel in _referenced_files(man):
        path = root / rel
        if not path.is_file():
            raise StackError(f"referenced file missing: {path}")
        digest.update(rel.encode())
        digest.update(path.read_bytes())
    return digest.hexdigest()[:ID_LENGTH]


def strokes_from_json(doc: dict, n_images: int, width: int, height: int) -> StrokeSet:
    """Build and validate a StrokeSet from its wire/JSON form.

    Expected shape: ``{"base_index": int, "strokes": [{"image_index": int,
    "polyline": [[x, y], ...], "radius": number}, ...]}``. Raises
    ValueError with a field-level message on any violation.
    """
    strokes = []
    for si, rec in enumerate(doc.get("strokes", [])):
        try:
            stroke = Stroke(
                image_index=int(rec["image_index"]),
                polyline=tuple((float(x), float(y)) for x, y in rec["polyline"]),
                radius=float(rec.get("radius", 4.0)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"strokes[{si}]: {exc}") from exc
        strokes.append(stroke)
    stroke_set = StrokeSet(strokes=tuple(strokes), base_index=int(doc.get("base_index", 0)))
    stroke_set.validate(n_images, width, height)
    return stroke_set


def strokes_to_json(strokes: StrokeSet) -> dict:
    return {
        "base_index": strokes.base_index,
        "strokes": [
            {
                "image_index": s.image_index,
                "polyline": [[x, y] for x, y in s.polyline],
                "radius": s.radius,
            }
            for s in strokes.strokes
        ],
    }


class StackStore:
    """All persisted state, keyed by stack id. Thread-safe per stack."""

    def __init__(self, data_dir):
        self.root = Path(data_dir)
        self.root.mkdir(parents=True, exist_ok=True)
        self._stacks: dict = {}
        self._locks: dict = {}
        self._global_lock = threading.Lock()

    # -- paths ---------------------------------------------------------
    def stack_dir(self, stack_id: str) -> Path:
        return self.root / "stacks" / stack_id

    def manifest_path(self, stack_id: str) -> Path:
        return self.stack_dir(stack_id) / "manifest.json"

    def session_path(self, stack_id: str) -> Path:
        return self.root / "sessions" / f"{stack_id}.json"

    def export_dir(self, stack_id: str, version: int) -> Path:
        return self.root / "exports" / stack_id / f"v{version}"

    def lock(self, stack_id: str) -> threading.Lock:
        with self._global_lock:
            return self._locks.setdefault(stack_id, threading.Lock())

    def list_stacks(self) -> list:
        base = self.root / "stacks"
        if not base.is_dir():
            return []
        return sorted(p.name for p in base.iterdir() if (p / "manifest.json").is_file())

    # -- ingestion ------------------------------------------------------
    def ingest_manifest(self, manifest_path) -> str:
        """Copy a stack (manifest + referenced files) into the store."""
        manifest_path = Path(manifest_path)
        man = parse_manifest(manifest_path)
        stack_id = compute_stack_id(manifest_path)
        dest = self.stack_dir(stack_id)
        if not (dest / "manifest.json").is_file():
            dest.mkdir(parents=True, exist_ok=True)
            shutil.copyfile(manifest_path, dest / "manifest.json")
            for rel in _referenced_files(man):
                target = dest / rel
                target.parent.mkdir(parents=True, exist_ok=True)
                shutil.copyfile(manifest_path.parent / rel, target)
        load_stack(dest / "manifest.json")  # full eager validation
        return stack_id

    def ingest_bytes(self, manifest_bytes: bytes, files: dict) -> str:
        """Ingest an uploaded stack: manifest JSON plus {relpath: bytes}."""
        import tempfile

        with tempfile.TemporaryDirectory(dir=self.root) as tmp:
            tmp = Path(tmp)
            (tmp / "manifest.json").write_bytes(manifest_bytes)
            for rel, blob in files.items():
                rel_path = Path(rel)
                if rel_path.is_absolute() or ".." in rel_path.parts:
                    raise DataError(f"unsafe upload path {rel!r}")
                target = tmp / rel_path
                target.parent.mkdir(parents=True, exist_ok=True)
                target.write_bytes(blob)
            return self.ingest_manifest(tmp / "manifest.json")

    # -- access ---------------------------------------------------------
    def get_stack(self, stack_id: str) -> FeatureStack:
        hit = self._stacks.get(stack_id)
        if hit is not None:
            return hit
        path = self.manifest_path(stack_id)
        if not path.is_file():
            raise KeyError(stack_id)
        stack = load_stack(path)
        self._stacks[stack_id] = stack
        return stack

    # -- sessions ---------------------------------------------------------
    def get_session(self, stack_id: str) -> dict:
        path = self.session_path(stack_id)
        if path.is_file():
            return json.loads(path.read_text())
        return {"version": 0, "base_index": 0, "strokes": []}

    def put_session(self, stack_id: str, session: dict) -> None:
        path = self.session_path(stack_id)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(session, indent=2, sort_keys=True))

    def session_strokes(self, stack_id: str) -> StrokeSet:
        stack = self.get_stack(stack_id)
        man = stack.manifest
        doc = self.get_session(stack_id)
        return strokes_from_json(doc, man.n_images, man.width, man.height)

    # -- PCA cache --------------------------------------------------------
    def reduced_grids(self, stack_id: str, selection: FeatureSelection,
                      n_components: int = DEFAULT_COMPONENTS) -> list:
        """Reduced feature grids, persisted per (stack, selection)."""
        token = hashlib.sha256(
            f"{selection.cache_token()}|{n_components}".encode()
        ).hexdigest()[:12]
        cache = self.root / "cache" / stack_id / f"reduced_{token}.npz"
        if cache.is_file():
            with np.load(cache) as archive:
                return [archive[f"grid_{i}"] for i in range(int(archive["n_images"]))]
        stack = self.get_stack(stack_id)
        model, grids = reduce_stack(stack, selection, n_components=n_components)
        cache.parent.mkdir(parents=True, exist_ok=True)
        payload = {f"grid_{i}": g for i, g in enumerate(grids)}
        payload["n_images"] = np.int64(len(grids))
        payload["mean"] = model.mean_
        payload["components"] = model.components_
        payload["explained_variance"] = model.explained_variance_
        payload["degenerate"] = np.bool_(model.degenerate_)
        np.savez(cache, **payload)
        return grids

    def pca_model(self, stack_id: str, selection: FeatureSelection,
                  n_components: int = DEFAULT_COMPONENTS) -> GridPca:
        """The fitted PCA for (stack, selection), from cache when present."""
        self.reduced_grids(stack_id, selection, n_components)
        token = hashlib.sha256(
            f"{selection.cache_token()}|{n_components}".encode()
        ).hexdigest()[:12]
        cache = self.root / "cache" / stack_id / f"reduced_{token}.npz"
        with np.load(cache) as archive:
            model = GridPca(n_components=n_components)
            model.mean_ = archive["mean"]
            model.components_ = archive["components"]
            model.explained_variance_ = archive["explained_variance"]
            model.degenerate_ = bool(archive["degenerate"])
            model.n_features_in_ = model.components_.shape[1]
        return model
