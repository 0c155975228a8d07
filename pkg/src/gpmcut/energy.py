"""Potts energy over the feature grid.

Total cost of a labeling L is the sum of a unary term and a pairwise term:

* unary: a designated cell pays ``constraint_cost`` for any label other
  than its designation, zero otherwise;
* pairwise, for each 4-neighbor pair (p, q) with different labels:
  ``sum_i smoothness * exp(-||f_i(p) - f_i(q)||_2 / (2 * sigma))`` summed
  over all N images' reduced feature grids. Identical labels cost nothing.

Edge weights therefore lie in (0, N * smoothness]; seams are cheapest
where some image shows a strong feature edge.

The solver works on integer-scaled costs (``SCALE`` = 2**20, rounded) so
min-cut arithmetic is exact; reported energies are integer results mapped
back to float units (a value / SCALE).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SCALE = 1 << 20

DEFAULT_CONSTRAINT_COST = 1e6
DEFAULT_SMOOTHNESS = 100.0
DEFAULT_SIGMA = 10.0
# documented alternative for stacks whose feature scale is larger
SDXL_SIGMA = 25.0


@dataclass(frozen=True)
class GraphCutParams:
    """Energy parameters.

    constraint_cost
        Unary penalty for contradicting a stroke designation. The default
        1e6 dominates any pairwise total for N <= 250, which makes stroke
        constraints effectively hard.
    smoothness
        Pairwise scale per image term.
    sigma
        Feature-distance falloff; larger values flatten the weights so
        cuts stop snapping to feature edges.
    """

    constraint_cost: float = DEFAULT_CONSTRAINT_COST
    smoothness: float = DEFAULT_SMOOTHNESS
    sigma: float = DEFAULT_SIGMA

    def __post_init__(self):
        if self.constraint_cost <= 0 or self.smoothness <= 0 or self.sigma <= 0:
            raise ValueError("all graph-cut parameters must be positive")


@dataclass(frozen=True)
class EnergyModel:
    """Grid energy: designations plus horizontal/vertical edge weights.

    ``weight_h[r, c]`` joins cells (r, c)-(r, c+1); ``weight_v[r, c]``
    joins (r, c)-(r+1, c). ``designations`` holds an image index per
    stroked cell and -1 elsewhere. Integer-scaled copies are derived once
    and shared with the solver.
    """

    n_labels: int
    designations: np.ndarray  # (h, w) int32, -1 = unconstrained
    weight_h: np.ndarray  # (h, w-1) float64
    weight_v: np.ndarray  # (h-1, w) float64
    params: GraphCutParams
    base_index: int = 0
    weight_h_int: np.ndarray = field(init=False, repr=False)
    weight_v_int: np.ndarray = field(init=False, repr=False)
    constraint_cost_int: int = field(init=False, repr=False)

    def __post_init__(self):
        h, w = self.designations.shape
        if self.weight_h.shape != (h, max(w - 1, 0)):
            raise ValueError(f"weight_h shape {self.weight_h.shape} != {(h, w - 1)}")
        if self.weight_v.shape != (max(h - 1, 0), w):
            raise ValueError(f"weight_v shape {self.weight_v.shape} != {(h - 1, w)}")
        if self.n_labels < 1:
            raise ValueError("n_labels must be >= 1")
        if not 0 <= self.base_index < self.n_labels:
            raise ValueError(f"base_index {self.base_index} outside [0, {self.n_labels})")
        dmax = int(self.designations.max(initial=-1))
        if dmax >= self.n_labels:
            raise ValueError(f"designation {dmax} outside [0, {self.n_labels})")
        object.__setattr__(
            self, "weight_h_int", np.rint(self.weight_h * SCALE).astype(np.int64)
        )
        object.__setattr__(
            self, "weight_v_int", np.rint(self.weight_v * SCALE).astype(np.int64)
        )
        object.__setattr__(
            self, "constraint_cost_int", int(round(self.params.constraint_cost * SCALE))
        )

    @property
    def grid_shape(self) -> tuple:
        return self.designations.shape


def edge_weights(feature_grids, sigma: float, smoothness: float) -> tuple:
    """Pairwise weights for 4-neighbor edges from per-image feature grids.

    ``feature_grids`` is an (N, h, w, k) array or a list of (h, w, k)
    arrays. Returns float64 (weight_h, weight_v).
    """
    feats = np.asarray(feature_grids, dtype=np.float64)
    if feats.ndim != 4:
        raise ValueError(f"expected (N, h, w, k) features, got shape {feats.shape}")
    diff_h = feats[:, :, :-1, :] - feats[:, :, 1:, :]
    diff_v = feats[:, :-1, :, :] - feats[:, 1:, :, :]
    dist_h = np.sqrt((diff_h**2).sum(axis=-1))
    dist_v = np.sqrt((diff_v**2).sum(axis=-1))
    weight_h = (smoothness * np.exp(-dist_h / (2.0 * sigma))).sum(axis=0)
    weight_v = (smoothness * np.exp(-dist_v / (2.0 * sigma))).sum(axis=0)
    return weight_h, weight_v


def build_energy(
    feature_grids,
    designations: np.ndarray,
    params: GraphCutParams | None = None,
    base_index: int = 0,
    n_labels: int | None = None,
) -> EnergyModel:
    """Assemble the Potts energy from reduced features and designations."""
    params = params or GraphCutParams()
    feats = np.asarray(feature_grids, dtype=np.float64)
    if feats.ndim != 4:
        raise ValueError(f"expected (N, h, w, k) features, got shape {feats.shape}")
    designations = np.asarray(designations, dtype=np.int32)
    if designations.shape != feats.shape[1:3]:
        raise ValueError(
            f"designations shape {designations.shape} != grid {feats.shape[1:3]}"
        )
    weight_h, weight_v = edge_weights(feats, params.sigma, params.smoothness)
    return EnergyModel(
        n_labels=int(n_labels if n_labels is not None else feats.shape[0]),
        designations=designations,
        weight_h=weight_h,
        weight_v=weight_v,
        params=params,
        base_index=base_index,
    )


def labeling_energy_int(model: EnergyModel, labels: np.ndarray) -> int:
    """Exact integer-scaled energy of a labeling."""
    labels = np.asarray(labels)
    desig = model.designations
    violations = int(np.count_nonzero((desig >= 0) & (labels != desig)))
    unary = violations * model.constraint_cost_int
    cut_h = int(model.weight_h_int[labels[:, :-1] != labels[:, 1:]].sum())
    cut_v = int(model.weight_v_int[labels[:-1, :] != labels[1:, :]].sum())
    return unary + cut_h + cut_v


def labeling_energy(model: EnergyModel, labels: np.ndarray) -> float:
    """Energy of a labeling in original float units (unscaled weights)."""
    labels = np.asarray(labels)
    desig = model.designations
    violations = int(np.count_nonzero((desig >= 0) & (labels != desig)))
    unary = violations * model.params.constraint_cost
    cut_h = float(model.weight_h[labels[:, :-1] != labels[:, 1:]].sum())
    cut_v = float(model.weight_v[labels[:-1, :] != labels[1:, :]].sum())
    return unary + cut_h + cut_v
