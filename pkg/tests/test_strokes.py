"""Stroke validation and rasterization onto the feature grid."""

import numpy as np
import pytest

from gpmcut.errors import GridNotDivisible
from gpmcut.strokes import NO_LABEL, Stroke, StrokeSet, rasterize_strokes


def brute_force_rasterize(strokes, image_size, grid_size, samples_per_px=4):
    """Independent oracle: dense pixel sampling of each polyline's tube.

    Walks each segment at sub-pixel resolution, marks every pixel whose
    center lies within ``radius`` of any sample, then ORs pixel marks into
    grid cells. Later strokes overwrite earlier ones.
    """
    width, height = image_size
    grid_w, grid_h = grid_size
    block_w, block_h = width // grid_w, height // grid_h
    out = np.full((grid_h, grid_w), NO_LABEL, dtype=np.int32)
    yy, xx = np.mgrid[0:height, 0:width]
    for stroke in strokes.strokes:
        pts = list(stroke.polyline)
        samples = [pts[0]]
        for (ax, ay), (bx, by) in zip(pts, pts[1:]):
            seg = float(np.hypot(bx - ax, by - ay))
            n = max(int(np.ceil(seg * samples_per_px)), 1)
            samples.extend((ax + (bx - ax) * t / n, ay + (by - ay) * t / n)
                           for t in range(1, n + 1))
        hit = np.zeros((height, width), dtype=bool)
        for sx, sy in samples:
            hit |= (xx - sx) ** 2 + (yy - sy) ** 2 <= stroke.radius ** 2
        cells = hit.reshape(grid_h, block_h, grid_w, block_w).any(axis=(1, 3))
        out[cells] = stroke.image_index
    return out


class TestStrokeTypes:
    def test_polyline_coerced_to_float_tuples(self):
        s = Stroke(image_index=0, polyline=[(1, 2), (3, 4)])
        assert s.polyline == ((1.0, 2.0), (3.0, 4.0))

    def test_empty_polyline_rejected(self):
        with pytest.raises(ValueError):
            Stroke(image_index=0, polyline=())

    def test_sub_pixel_radius_rejected(self):
        with pytest.raises(ValueError):
            Stroke(image_index=0, polyline=((1.0, 1.0),), radius=0.5)

    def test_validate_passes_in_bounds(self):
        ss = StrokeSet(strokes=(Stroke(0, ((0.0, 0.0), (31.0, 31.0))),),
                       base_index=2)
        ss.validate(n_images=3, width=32, height=32)

    def test_validate_names_offending_field(self):
        ss = StrokeSet(strokes=(
            Stroke(0, ((1.0, 1.0),)),
            Stroke(1, ((5.0, 5.0), (40.0, 5.0))),
        ))
        with pytest.raises(ValueError, match=r"strokes\[1\]\.polyline\[1\]"):
            ss.validate(n_images=3, width=32, height=32)

    def test_validate_checks_image_index_and_base(self):
        with pytest.raises(ValueError, match=r"strokes\[0\]\.image_index"):
            StrokeSet(strokes=(Stroke(7, ((1.0, 1.0),)),)).validate(3, 32, 32)
        with pytest.raises(ValueError, match="base_index"):
            StrokeSet(base_index=-1).validate(3, 32, 32)


class TestRasterize:
    def test_single_point_marks_cell_block(self):
        # radius-1 dot at pixel (9, 5) on a 32x32 image, 8x8 grid: block 4px
        ss = StrokeSet(strokes=(Stroke(2, ((9.0, 5.0),), radius=1.0),))
        got = rasterize_strokes(ss, (32, 32), (8, 8))
        assert got[1, 2] == 2  # cell row 1 (y 4..7), col 2 (x 8..11)
        assert (got == 2).sum() == 1
        assert (got == NO_LABEL).sum() == 63

    def test_horizontal_line_covers_row(self):
        ss = StrokeSet(strokes=(Stroke(1, ((0.0, 16.0), (31.0, 16.0)), radius=1.0),))
        got = rasterize_strokes(ss, (32, 32), (8, 8))
        assert np.all(got[4, :] == 1)  # y=16 falls in cell row 4

    def test_radius_spills_into_neighbor_cells(self):
        # center of cell (1,1) is (6,6); radius 3 reaches x=3..9 -> cells 0..2
        ss = StrokeSet(strokes=(Stroke(0, ((6.0, 6.0),), radius=3.0),))
        got = rasterize_strokes(ss, (32, 32), (8, 8))
        assert got[1, 1] == 0
        assert got[1, 0] == 0 and got[1, 2] == 0
        assert got[0, 1] == 0 and got[2, 1] == 0
        assert got[0, 0] == NO_LABEL  # corner pixel (3,3) is > 3px away

    def test_last_stroke_wins_on_overlap(self):
        ss = StrokeSet(strokes=(
            Stroke(0, ((8.0, 8.0),), radius=6.0),
            Stroke(2, ((8.0, 8.0),), radius=2.0),
        ))
        got = rasterize_strokes(ss, (32, 32), (8, 8))
        # pixel (8,8) is a cell corner: the small disk claims all 4 cells
        assert np.all(got[1:3, 1:3] == 2)
        assert got[3, 2] == 0  # reached only by the wide first stroke
        assert got[0, 1] == 0

    def test_empty_stroke_set(self):
        got = rasterize_strokes(StrokeSet(), (32, 32), (8, 8))
        assert np.all(got == NO_LABEL)

    def test_grid_must_divide(self):
        ss = StrokeSet()
        with pytest.raises(GridNotDivisible):
            rasterize_strokes(ss, (33, 32), (8, 8))
        with pytest.raises(GridNotDivisible):
            rasterize_strokes(ss, (32, 30), (8, 8))

    def test_full_resolution_grid(self):
        # grid == image: each pixel is its own cell
        ss = StrokeSet(strokes=(Stroke(1, ((3.0, 2.0),), radius=1.0),))
        got = rasterize_strokes(ss, (8, 8), (8, 8))
        assert got[2, 3] == 1
        assert got[2, 2] == 1 and got[2, 4] == 1  # radius-1 neighbors
        assert got[1, 3] == 1 and got[3, 3] == 1
        assert got[1, 2] == NO_LABEL  # diagonal is sqrt(2) > 1 away

    def test_matches_dense_sampling_oracle(self):
        rng = np.random.default_rng(31)
        for _ in range(12):
            strokes = []
            for _ in range(int(rng.integers(1, 4))):
                n_pts = int(rng.integers(1, 5))
                pts = tuple((float(rng.uniform(0, 31.99)),
                             float(rng.uniform(0, 31.99))) for _ in range(n_pts))
                strokes.append(Stroke(int(rng.integers(0, 3)), pts,
                                      radius=float(rng.uniform(1, 5))))
            ss = StrokeSet(strokes=tuple(strokes))
            got = rasterize_strokes(ss, (32, 32), (8, 8))
            want = brute_force_rasterize(ss, (32, 32), (8, 8))
            assert np.array_equal(got, want)

    def test_deterministic(self):
        ss = StrokeSet(strokes=(Stroke(1, ((3.3, 7.7), (21.2, 14.1)), radius=2.5),))
        a = rasterize_strokes(ss, (32, 32), (8, 8))
        b = rasterize_strokes(ss, (32, 32), (8, 8))
        assert np.array_equal(a, b)

    def test_output_dtype_and_shape(self):
        got = rasterize_strokes(StrokeSet(), (64, 32), (16, 8))
        assert got.shape == (8, 16)  # (h, w) ordering
        assert got.dtype == np.int32
