"""User strokes and their rasterization onto the feature grid."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import GridNotDivisible

# dense polyline sampling step, pixels; with radius >= 1 the stamped disks
# overlap at this spacing, so coverage has no gaps
_STEP = 0.5

NO_LABEL = -1


@dataclass(frozen=True)
class Stroke:
    """One polyline bound to a stack image.

    ``polyline`` is a sequence of (x, y) pixel coordinates, each inside
    [0, W) x [0, H); ``radius`` is the brush radius in pixels (>= 1).
    """

    image_index: int
    polyline: tuple
    radius: float = 4.0

    def __post_init__(self):
        pts = tuple((float(x), float(y)) for x, y in self.polyline)
        if not pts:
            raise ValueError("stroke polyline must contain at least one point")
        if self.radius < 1:
            raise ValueError(f"stroke radius must be >= 1 pixel, got {self.radius}")
        object.__setattr__(self, "polyline", pts)


@dataclass(frozen=True)
class StrokeSet:
    """Ordered strokes plus the base-image designation."""

    strokes: tuple = field(default_factory=tuple)
    base_index: int = 0

    def __post_init__(self):
        object.__setattr__(self, "strokes", tuple(self.strokes))

    def validate(self, n_images: int, width: int, height: int) -> None:
        """Raise ValueError naming the offending stroke/point on bad input."""
        if not 0 <= self.base_index < n_images:
            raise ValueError(f"base_index {self.base_index} outside [0, {n_images})")
        for si, stroke in enumerate(self.strokes):
            if not 0 <= stroke.image_index < n_images:
                raise ValueError(
                    f"strokes[{si}].image_index {stroke.image_index} outside [0, {n_images})"
                )
            for pi, (x, y) in enumerate(stroke.polyline):
                if not (0 <= x < width and 0 <= y < height):
                    raise ValueError(
                        f"strokes[{si}].polyline[{pi}] = ({x}, {y}) outside "
                        f"[0, {width}) x [0, {height})"
                    )


def _stamp_disks(canvas: np.ndarray, points: np.ndarray, radius: float) -> None:
    height, width = canvas.shape
    r_int = int(np.ceil(radius))
    r2 = radius * radius
    for cx, cy in points:
        x_lo = max(int(np.floor(cx)) - r_int, 0)
        x_hi = min(int(np.ceil(cx)) + r_int, width - 1)
        y_lo = max(int(np.floor(cy)) - r_int, 0)
        y_hi = min(int(np.ceil(cy)) + r_int, height - 1)
        if x_lo > x_hi or y_lo > y_hi:
            continue
        ys = np.arange(y_lo, y_hi + 1)
        xs = np.arange(x_lo, x_hi + 1)
        dist2 = (xs[None, :] - cx) ** 2 + (ys[:, None] - cy) ** 2
        canvas[y_lo : y_hi + 1, x_lo : x_hi + 1] |= dist2 <= r2


def _densify(polyline: tuple) -> np.ndarray:
    pts = [np.asarray(polyline[0], dtype=np.float64)]
    for a, b in zip(polyline, polyline[1:]):
        a = np.asarray(a, dtype=np.float64)
        b = np.asarray(b, dtype=np.float64)
        length = float(np.hypot(*(b - a)))
        n = max(int(np.ceil(length / _STEP)), 1)
        for i in range(1, n + 1):
            pts.append(a + (b - a) * (i / n))
    return np.asarray(pts)


def rasterize_strokes(strokes: StrokeSet, image_size: tuple, grid_size: tuple) -> np.ndarray:
    """Designation map (h, w) int32: image index per stroked cell, -1 elsewhere.

    Each polyline is stamped as disks along densely interpolated segments in
    pixel space; a cell is designated when any stamped pixel lands in its
    (W/w x H/h) block. The latest stroke wins where strokes overlap.

    Raises
    ------
    GridNotDivisible
        When the image size is not an integer multiple of the grid.
    """
    width, height = int(image_size[0]), int(image_size[1])
    grid_w, grid_h = int(grid_size[0]), int(grid_size[1])
    if width % grid_w != 0 or height % grid_h != 0:
        raise GridNotDivisible(
            f"grid {grid_w}x{grid_h} does not divide image {width}x{height}"
        )
    block_w = width // grid_w
    block_h = height // grid_h

    designations = np.full((grid_h, grid_w), NO_LABEL, dtype=np.int32)
    canvas = np.zeros((height, width), dtype=bool)
    for stroke in strokes.strokes:
        canvas[:] = False
        _stamp_disks(canvas, _densify(stroke.polyline), float(stroke.radius))
        touched = canvas.reshape(grid_h, block_h, grid_w, block_w).any(axis=(1, 3))
        designations[touched] = stroke.image_index
    return designations
