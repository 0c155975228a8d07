"""Gradient-domain (Poisson) blending baseline over the hard composite.

Solves, per channel, the discrete Poisson equation on the non-base region
with known pixel values (base region, per the composite) as Dirichlet
boundary. The guidance on an edge (p, q) is the mean of the two pixels'
own source-image gradients: on same-label edges that IS the composite's
gradient, and where regions meet it splits the difference symmetrically —
region interiors keep their texture while seam jumps relax.
"""

from __future__ import annotations

import warnings

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.linalg import cg

from .compositor import PixelComposite
from .stack import FeatureStack

MAX_ITERATIONS = 10_000
RELATIVE_RESIDUAL = 1e-6


class NoBoundaryWarning(UserWarning):
    """The non-base region covers the whole image; hard composite returned."""


def _gather_pixels(images: np.ndarray, labels: np.ndarray) -> np.ndarray:
    # images (N, H', W', C), labels (H', W') -> (H', W', C)
    rows = np.arange(labels.shape[0])[:, None]
    cols = np.arange(labels.shape[1])[None, :]
    return images[labels, rows, cols]


def _edge_guidance(images: np.ndarray, labels: np.ndarray, axis: int) -> np.ndarray:
    """Guidance g[p] = u(p) - u(q) for adjacent pairs along ``axis``."""
    if axis == 0:
        img_p, img_q = images[:, :-1, :, :], images[:, 1:, :, :]
        lab_p, lab_q = labels[:-1, :], labels[1:, :]
    else:
        img_p, img_q = images[:, :, :-1, :], images[:, :, 1:, :]
        lab_p, lab_q = labels[:, :-1], labels[:, 1:]
    grad_of_p_source = _gather_pixels(img_p, lab_p) - _gather_pixels(img_q, lab_p)
    grad_of_q_source = _gather_pixels(img_p, lab_q) - _gather_pixels(img_q, lab_q)
    return 0.5 * (grad_of_p_source + grad_of_q_source)


def poisson_blend(composite: PixelComposite, stack: FeatureStack, base_index: int) -> np.ndarray:
    """Blend the hard composite's non-base region into the base image.

    Returns an (H, W, 3) uint8 image, pixel values clamped to [0, 255].
    The conjugate-gradient solve runs per channel to a relative residual
    of 1e-6 or 10,000 iterations. When no base pixels exist anywhere there
    is no boundary to anchor the solve: the hard composite is returned
    unchanged under a :class:`NoBoundaryWarning`.
    """
    labels = composite.fullres_labels
    height, width = labels.shape
    region = labels != base_index
    n_unknown = int(region.sum())
    if n_unknown == 0:
        return composite.image.copy()
    if n_unknown == labels.size:
        warnings.warn(
            "label map contains no base pixels; returning the hard composite",
            NoBoundaryWarning,
            stacklevel=2,
        )
        return composite.image.copy()

    images = stack.images.astype(np.float64)
    comp = composite.image.astype(np.float64)

    ids = np.full((height, width), -1, dtype=np.int64)
    ids[region] = np.arange(n_unknown)

    rows_idx, cols_idx, off_vals = [], [], []
    diag = np.zeros(n_unknown, dtype=np.float64)
    rhs = np.zeros((n_unknown, 3), dtype=np.float64)

    def add_direction(p_slice, q_slice, guide):
        reg_p, reg_q = region[p_slice], region[q_slice]
        id_p, id_q = ids[p_slice], ids[q_slice]
        comp_p, comp_q = comp[p_slice], comp[q_slice]
        inner = reg_p & reg_q

        # each unknown endpoint contributes (u_self - u_other) = +-g to its row
        np.add.at(diag, id_p[reg_p], 1.0)
        np.add.at(rhs, id_p[reg_p], guide[reg_p])
        np.add.at(diag, id_q[reg_q], 1.0)
        np.add.at(rhs, id_q[reg_q], -guide[reg_q])

        rows_idx.append(id_p[inner])
        cols_idx.append(id_q[inner])
        rows_idx.append(id_q[inner])
        cols_idx.append(id_p[inner])
        off_vals.append(np.full(2 * int(inner.sum()), -1.0))

        # known neighbors carry their composite value to the right-hand side
        p_border = reg_p & ~reg_q
        np.add.at(rhs, id_p[p_border], comp_q[p_border])
        q_border = reg_q & ~reg_p
        np.add.at(rhs, id_q[q_border], comp_p[q_border])

    add_direction(
        (slice(None, -1), slice(None)),
        (slice(1, None), slice(None)),
        _edge_guidance(images, labels, axis=0),
    )
    add_direction(
        (slice(None), slice(None, -1)),
        (slice(None), slice(1, None)),
        _edge_guidance(images, labels, axis=1),
    )

    rows_all = np.concatenate(rows_idx + [np.arange(n_unknown)])
    cols_all = np.concatenate(cols_idx + [np.arange(n_unknown)])
    vals_all = np.concatenate(off_vals + [diag])
    laplacian = coo_matrix(
        (vals_all, (rows_all, cols_all)), shape=(n_unknown, n_unknown)
    ).tocsr()

    out = comp.copy()
    start = comp[region]
    for channel in range(3):
        solution, _ = cg(
            laplacian,
            rhs[:, channel],
            x0=start[:, channel],
            rtol=RELATIVE_RESIDUAL,
            maxiter=MAX_ITERATIONS,
        )
        out[region, channel] = solution
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)
