"""Label-map solvers: binary min-cut and multi-label expansion moves.

Each expansion move fixes a candidate label ``alpha`` and asks every cell
to either keep its current label (source side of a binary cut) or take
``alpha`` (sink side). For a neighbor pair (p, q) with weight w and
current labels (Lp, Lq) the four move outcomes cost

    keep/keep = w*[Lp != Lq]    keep/take = w*[Lp != alpha]
    take/keep = w*[alpha != Lq]   take/take = 0

which is submodular, so it folds exactly into one directed arc p->q with
capacity (keep/take + take/keep - keep/keep) plus terminal adjustments —
no auxiliary nodes needed. Cells already labeled ``alpha`` are constants
and stay out of the graph; their pairwise influence lands on the
neighbor's terminal capacity. Ambiguous zero-residual cells resolve to
"keep" (the maximal source side), which keeps results deterministic.

All capacities are integer-scaled; reported energies are exact integers
mapped back to float units.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from . import _flow
from .energy import SCALE, EnergyModel, GraphCutParams, build_energy, labeling_energy_int


@dataclass(frozen=True)
class LabelMap:
    """Solver output: per-cell image indices plus the achieved energy.

    ``energy`` is the integer-exact objective in float units;
    ``move_energies`` traces the accepted-move sequence (non-increasing).
    """

    labels: np.ndarray  # (h, w) int32
    energy: float
    move_energies: tuple = field(default_factory=tuple)
    n_sweeps: int = 0

    @property
    def grid_shape(self) -> tuple:
        return self.labels.shape


def honors_designations(model: EnergyModel, labels: np.ndarray) -> bool:
    """True when every stroked cell carries its designated label."""
    desig = model.designations
    stroked = desig >= 0
    return bool(np.all(labels[stroked] == desig[stroked]))


def _terminal_caps(model: EnergyModel, labels: np.ndarray, alpha: int,
                   participating: np.ndarray) -> np.ndarray:
    desig = model.designations
    cost = model.constraint_cost_int
    keep_cost = np.where((desig >= 0) & (desig != labels), cost, 0)
    take_cost = np.where((desig >= 0) & (desig != alpha), cost, 0)
    return (take_cost - keep_cost)[participating].astype(np.int64)


def _pair_terms(weights: np.ndarray, lab_p: np.ndarray, lab_q: np.ndarray, alpha: int):
    keep_keep = np.where(lab_p != lab_q, weights, 0)
    keep_take = np.where(lab_p != alpha, weights, 0)
    take_keep = np.where(lab_q != alpha, weights, 0)
    return keep_keep, keep_take, take_keep


def _expansion_move(model: EnergyModel, labels: np.ndarray, alpha: int) -> np.ndarray | None:
    """Optimal single-alpha move from ``labels``; None when alpha saturates the grid."""
    grid_h, grid_w = model.grid_shape
    participating = labels != alpha
    n_nodes = int(participating.sum())
    if n_nodes == 0:
        return None
    ids = np.full((grid_h, grid_w), -1, dtype=np.int64)
    ids[participating] = np.arange(n_nodes)

    tcap = _terminal_caps(model, labels, alpha, participating)

    srcs, dsts, caps = [], [], []
    for weights, (pr, pc), (qr, qc) in (
        (model.weight_h_int, (slice(None), slice(None, -1)), (slice(None), slice(1, None))),
        (model.weight_v_int, (slice(None, -1), slice(None)), (slice(1, None), slice(None))),
    ):
        lab_p, lab_q = labels[pr, pc], labels[qr, qc]
        id_p, id_q = ids[pr, pc], ids[qr, qc]
        part_p, part_q = participating[pr, pc], participating[qr, qc]
        keep_keep, keep_take, take_keep = _pair_terms(weights, lab_p, lab_q, alpha)

        # q's terminal term is take/take - take/keep whenever q participates;
        # p's differs by whether q is in the graph (see module docstring)
        sel_q = part_q
        np.add.at(tcap, id_q[sel_q], -take_keep[sel_q])
        both = part_p & part_q
        np.add.at(tcap, id_p[both], (take_keep - keep_keep)[both])
        p_only = part_p & ~part_q
        np.add.at(tcap, id_p[p_only], -keep_take[p_only])

        cap = (keep_take + take_keep - keep_keep)[both]
        live = cap > 0
        srcs.append(id_p[both][live])
        dsts.append(id_q[both][live])
        caps.append(cap[live])

    src = np.concatenate(srcs) if srcs else np.empty(0, dtype=np.int64)
    dst = np.concatenate(dsts) if dsts else np.empty(0, dtype=np.int64)
    cap = np.concatenate(caps) if caps else np.empty(0, dtype=np.int64)

    arc_head, arc_cap, adj_start, adj_arc = _flow.build_graph(n_nodes, src, dst, cap)
    _flow.maxflow(tcap, arc_head, arc_cap, adj_start, adj_arc)
    take = _flow.sink_side(tcap, arc_head, arc_cap, adj_start, adj_arc)

    moved = labels.copy()
    take_grid = np.zeros((grid_h, grid_w), dtype=bool)
    take_grid[participating] = take.astype(bool)
    moved[take_grid] = alpha
    return moved


def solve_binary(model: EnergyModel) -> LabelMap:
    """Globally optimal two-label cut via a single max-flow.

    Ties resolve toward label 0 (the maximal source side of the cut).
    """
    if model.n_labels != 2:
        raise ValueError(f"solve_binary requires n_labels == 2, got {model.n_labels}")
    start = np.zeros(model.grid_shape, dtype=np.int32)
    labels = _expansion_move(model, start, 1)
    assert labels is not None
    energy_int = labeling_energy_int(model, labels)
    return LabelMap(
        labels=labels,
        energy=energy_int / SCALE,
        move_energies=(energy_int / SCALE,),
        n_sweeps=1,
    )


MAX_SWEEPS = 64


def solve_alpha_expansion(model: EnergyModel, sweep_order=None) -> LabelMap:
    """Multi-label minimization by repeated expansion sweeps.

    Starts from the all-base labeling and sweeps alpha = 0..N-1 in index
    order (or ``sweep_order`` when given), accepting a move only on strict
    energy decrease, until a full sweep accepts nothing. The accepted-move
    energy sequence is strictly decreasing (so non-increasing, and
    termination is guaranteed); the result is exact for two labels and
    within 2x of the optimum for the Potts form.

    Relabeling images by a permutation, with designations, base index and
    ``sweep_order`` mapped through the same permutation, permutes the
    output label map identically.
    """
    if sweep_order is None:
        sweep_order = range(model.n_labels)
    else:
        if sorted(sweep_order) != list(range(model.n_labels)):
            raise ValueError(
                f"sweep_order must permute 0..{model.n_labels - 1}, got {sweep_order}")
    labels = np.full(model.grid_shape, model.base_index, dtype=np.int32)
    energy_int = labeling_energy_int(model, labels)
    history = [energy_int / SCALE]
    sweeps = 0
    if model.n_labels > 1:
        for _ in range(MAX_SWEEPS):
            sweeps += 1
            improved = False
            for alpha in sweep_order:
                proposal = _expansion_move(model, labels, alpha)
                if proposal is None:
                    continue
                proposal_int = labeling_energy_int(model, proposal)
                if proposal_int < energy_int:
                    labels, energy_int = proposal, proposal_int
                    history.append(energy_int / SCALE)
                    improved = True
            if not improved:
                break
    return LabelMap(
        labels=labels,
        energy=energy_int / SCALE,
        move_energies=tuple(history),
        n_sweeps=sweeps,
    )


class GridGraphCut(BaseEstimator):
    """Stroke-constrained Potts segmentation over per-image feature grids.

    scikit-learn style: construction stores parameters, :meth:`fit`
    computes ``labels_`` / ``energy_`` from data.

    Parameters
    ----------
    constraint_cost, smoothness, sigma : float
        See :class:`gpmcut.energy.GraphCutParams`.

    Attributes
    ----------
    labels_ : ndarray of shape (h, w)
    energy_ : float
    move_energies_ : tuple of float
    n_sweeps_ : int
    model_ : EnergyModel
    """

    def __init__(self, constraint_cost: float = 1e6, smoothness: float = 100.0,
                 sigma: float = 10.0):
        self.constraint_cost = constraint_cost
        self.smoothness = smoothness
        self.sigma = sigma

    def fit(self, X, y=None, designations=None, base_index: int = 0):
        """Solve for the label map.

        Parameters
        ----------
        X : array-like of shape (n_images, h, w, k)
            Reduced per-image feature grids.
        designations : array-like of shape (h, w) or None
            Per-cell stroke designations, -1 for unconstrained.
        base_index : int
            Initial label for every cell.
        """
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 4:
            raise ValueError(f"expected (n_images, h, w, k) features, got {X.shape}")
        if designations is None:
            designations = np.full(X.shape[1:3], -1, dtype=np.int32)
        params = GraphCutParams(
            constraint_cost=self.constraint_cost,
            smoothness=self.smoothness,
            sigma=self.sigma,
        )
        self.model_ = build_energy(X, designations, params, base_index=base_index)
        result = solve_alpha_expansion(self.model_)
        self.labels_ = result.labels
        self.energy_ = result.energy
        self.move_energies_ = result.move_energies
        self.n_sweeps_ = result.n_sweeps
        return self

    def fit_predict(self, X, y=None, **fit_params) -> np.ndarray:
        return self.fit(X, y, **fit_params).labels_
