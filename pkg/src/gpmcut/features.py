"""Segmentation feature selection and joint PCA reduction.

The per-cell segmentation features are attention tensors from one layer,
flattened so each grid cell carries one D-vector (D = heads * dim, heads
concatenated in order). A single PCA basis is fitted jointly over the
cells of every image in the stack, so that projected coordinates are
comparable across images; each cell is then reduced to its top
``n_components`` (default 10) principal coordinates.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .errors import DimensionMismatch, LayerNotFound, TimestepNotFound
from .stack import FeatureStack

DEFAULT_COMPONENTS = 10

_AVERAGE_RE = re.compile(r"^average_from\((-?\d+)\)$")


@dataclass(frozen=True)
class FeatureSelection:
    """Which attention tensor feeds the segmentation energy.

    Parameters
    ----------
    source : str
        One of ``"K"``, ``"Q"``, ``"V"``. Default ``"K"``.
    layer : str or None
        Layer id; ``None`` selects the first encoder layer.
    timestep_mode : str
        ``"final"`` (last listed timestep) or ``"average_from(t0)"``
        (element-wise mean over listed timesteps >= t0).
    """

    source: str = "K"
    layer: str | None = None
    timestep_mode: str = "final"

    def __post_init__(self):
        if self.source not in ("K", "Q", "V"):
            raise ValueError(f"source must be K, Q or V, got {self.source!r}")
        if self.timestep_mode != "final" and not _AVERAGE_RE.match(self.timestep_mode):
            raise ValueError(
                f"timestep_mode must be 'final' or 'average_from(t0)', got {self.timestep_mode!r}"
            )

    def cache_token(self) -> str:
        """Stable string identifying this selection (cache key component)."""
        return f"{self.source}|{self.layer or ''}|{self.timestep_mode}"


def _selected_timesteps(sel: FeatureSelection, timesteps: tuple) -> tuple:
    if sel.timestep_mode == "final":
        return (timesteps[-1],)
    t0 = int(_AVERAGE_RE.match(sel.timestep_mode).group(1))
    chosen = tuple(t for t in timesteps if t >= t0)
    if not chosen:
        raise TimestepNotFound(f"no manifest timestep >= {t0} for {sel.timestep_mode}")
    return chosen


def _flatten_heads(tensor: np.ndarray) -> np.ndarray:
    # (heads, h, w, dim) -> (h, w, heads*dim), head 0's dims first
    heads, h, w, dim = tensor.shape
    return np.ascontiguousarray(tensor.transpose(1, 2, 0, 3).reshape(h, w, heads * dim))


def select_features(stack: FeatureStack, sel: FeatureSelection) -> list:
    """Per-image raw feature grids, each (h, w, D) float32.

    Raises
    ------
    LayerNotFound, TimestepNotFound
    """
    man = stack.manifest
    if sel.layer is None:
        layer = man.segmentation_layer
    else:
        layer = man.layer(sel.layer)  # raises LayerNotFound
    steps = _selected_timesteps(sel, man.timesteps)

    grids = []
    for image in range(man.n_images):
        acc = None
        for t in steps:
            tensor = stack.tensor(image, layer.layer_id, t, sel.source)
            acc = tensor.astype(np.float64) if acc is None else acc + tensor
        mean = (acc / len(steps)).astype(np.float32)
        grids.append(_flatten_heads(mean))
    return grids


class GridPca(TransformerMixin, BaseEstimator):
    """Deterministic exact PCA over feature-grid cells.

    Fits mean and the leading eigenvectors of the sample covariance via a
    dense symmetric eigendecomposition. Deterministic across runs: stable
    eigenvalue ordering (descending) plus a sign convention that makes each
    component's largest-magnitude element positive.

    Parameters
    ----------
    n_components : int
        Upper bound on retained components; the effective count is
        ``min(n_components, D)``.

    Attributes
    ----------
    mean_ : ndarray of shape (D,)
    components_ : ndarray of shape (k, D)
        Orthonormal rows, descending variance.
    explained_variance_ : ndarray of shape (k,)
        Nonnegative, descending.
    degenerate_ : bool
        True when all samples were identical; the basis is then the first
        k standard unit vectors and every variance is zero.
    n_features_in_ : int
    """

    def __init__(self, n_components: int = DEFAULT_COMPONENTS):
        self.n_components = n_components

    def fit(self, X, y=None):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
            raise ValueError(f"expected a nonempty 2d sample matrix, got shape {X.shape}")
        n, d = X.shape
        k = min(int(self.n_components), d)
        if k < 1:
            raise ValueError("n_components must be >= 1")
        self.n_features_in_ = d
        mean = X.mean(axis=0)
        centered = X - mean

        if not np.any(centered):
            # all samples identical: zero variance, fixed arbitrary basis
            self.mean_ = mean
            self.components_ = np.eye(d, dtype=np.float64)[:k]
            self.explained_variance_ = np.zeros(k, dtype=np.float64)
            self.degenerate_ = True
            return self

        denom = max(n - 1, 1)
        cov = centered.T @ centered / denom
        eigvals, eigvecs = np.linalg.eigh(cov)  # ascending
        order = np.arange(d - 1, d - 1 - k, -1)
        comps = eigvecs[:, order].T.copy()
        variances = np.maximum(eigvals[order], 0.0)

        for row in comps:
            j = int(np.argmax(np.abs(row)))
            if row[j] < 0:
                row *= -1.0

        self.mean_ = mean
        self.components_ = comps
        self.explained_variance_ = variances
        self.degenerate_ = False
        return self

    def transform(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2:
            raise ValueError(f"expected 2d samples, got shape {X.shape}")
        if X.shape[1] != self.n_features_in_:
            raise DimensionMismatch(
                f"samples have D={X.shape[1]}, model was fit with D={self.n_features_in_}"
            )
        return (X - self.mean_) @ self.components_.T


def fit_pca(grids: list, n_components: int = DEFAULT_COMPONENTS) -> GridPca:
    """Fit one PCA jointly on the union of all images' cells.

    ``grids`` holds N arrays of shape (h, w, D); at least 10 cell samples
    are required in total.
    """
    if not grids:
        raise ValueError("need at least one feature grid")
    first = grids[0].shape
    for g in grids:
        if g.ndim != 3 or g.shape != first:
            raise DimensionMismatch(f"grids disagree: {g.shape} vs {first}")
    samples = np.concatenate([g.reshape(-1, g.shape[-1]) for g in grids], axis=0)
    if samples.shape[0] < 10:
        raise ValueError(f"need >= 10 cell samples to fit, got {samples.shape[0]}")
    return GridPca(n_components=n_components).fit(samples)


def project(model: GridPca, grids: list) -> list:
    """Reduce each (h, w, D) grid to (h, w, k) principal coordinates."""
    out = []
    for g in grids:
        h, w, d = g.shape
        flat = model.transform(np.asarray(g, dtype=np.float64).reshape(-1, d))
        out.append(flat.reshape(h, w, -1).astype(np.float32))
    return out
