import numpy as np
import pytest
from shapely.geometry import Polygon, box

from planfrac.mesh import (
    EXTERNAL,
    INTERNAL,
    RIBBON,
    TIP,
    Grid,
    Classification,
    classify,
    update_collections,
)


def circle(radius, center=(0.0, 0.0), n=256):
    th = np.linspace(0.0, 2.0 * np.pi, n, endpoint=False)
    return np.stack([center[0] + radius * np.cos(th),
                     center[1] + radius * np.sin(th)], axis=1)


def shapely_oracle(grid, front):
    """Independent classification using shapely geometry predicates."""
    poly = Polygon(front)
    ring = poly.exterior
    codes = np.full(grid.nx * grid.ny, EXTERNAL, dtype=np.int8)
    for j in range(grid.ny):
        for i in range(grid.nx):
            cx = grid.origin[0] + i * grid.dx
            cy = grid.origin[1] + j * grid.dy
            cell = box(cx - grid.dx / 2, cy - grid.dy / 2,
                       cx + grid.dx / 2, cy + grid.dy / 2)
            k = j * grid.nx + i
            if ring.intersects(cell):
                codes[k] = TIP
            elif poly.contains(cell.centroid):
                codes[k] = INTERNAL
    tip2d = (codes == TIP).reshape(grid.ny, grid.nx)
    for j in range(grid.ny):
        for i in range(grid.nx):
            k = j * grid.nx + i
            if codes[k] != INTERNAL:
                continue
            for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                ii, jj = i + di, j + dj
                if 0 <= ii < grid.nx and 0 <= jj < grid.ny and tip2d[jj, ii]:
                    codes[k] = RIBBON
                    break
    return codes


class TestClassify:
    def test_circle_matches_shapely_oracle_every_cell(self):
        grid = Grid(16, 16, 1.0, 1.0, origin=(-7.5, -7.5))
        front = circle(2.5, center=(0.5, 0.5))  # centered on a cell center
        cls = classify(grid, front)
        oracle = shapely_oracle(grid, front)
        assert np.array_equal(cls.codes, oracle)

    def test_offcenter_ellipse_matches_oracle(self):
        grid = Grid(20, 18, 0.7, 0.9, origin=(-6.65, -7.2))
        th = np.linspace(0, 2 * np.pi, 180, endpoint=False)
        front = np.stack([0.3 + 3.1 * np.cos(th), -0.2 + 2.3 * np.sin(th)], axis=1)
        cls = classify(grid, front)
        oracle = shapely_oracle(grid, front)
        assert np.array_equal(cls.codes, oracle)

    def test_partition_property(self):
        grid = Grid(14, 14, 1.0, 1.0, origin=(-6.5, -6.5))
        cls = classify(grid, circle(3.2))
        n = len(cls.internal) + len(cls.ribbon) + len(cls.tip) \
            + np.sum(cls.codes == EXTERNAL)
        assert n == grid.nx * grid.ny

    def test_ribbon_cells_touch_tip(self):
        grid = Grid(14, 14, 1.0, 1.0, origin=(-6.5, -6.5))
        cls = classify(grid, circle(3.2))
        tip2d = (cls.codes == TIP).reshape(grid.ny, grid.nx)
        for k in cls.ribbon:
            j, i = divmod(k, grid.nx)
            assert (tip2d[j, i - 1] or tip2d[j, i + 1]
                    or tip2d[j - 1, i] or tip2d[j + 1, i])

    def test_front_inside_single_cell_rejected(self):
        grid = Grid(10, 10, 1.0, 1.0, origin=(-4.5, -4.5))
        with pytest.raises(ValueError):
            classify(grid, circle(0.3))

    def test_translation_by_one_pitch(self):
        grid = Grid(20, 20, 1.0, 1.0, origin=(-9.5, -9.5))
        c1 = classify(grid, circle(2.5, center=(0.5, 0.5)))
        c2 = classify(grid, circle(2.5, center=(1.5, 0.5)))
        a = c1.codes.reshape(grid.ny, grid.nx)
        b = c2.codes.reshape(grid.ny, grid.nx)
        assert np.array_equal(a[:, :-1], b[:, 1:])

    def test_front_touching_boundary_rejected(self):
        grid = Grid(10, 10, 1.0, 1.0, origin=(-4.5, -4.5))
        with pytest.raises(ValueError, match="domain too small|boundary"):
            classify(grid, circle(4.4))

    def test_self_intersecting_front_rejected(self):
        grid = Grid(12, 12, 1.0, 1.0, origin=(-5.5, -5.5))
        bowtie = np.array([[-3.0, -3.0], [3.0, 3.0], [-3.0, 3.0], [3.0, -3.0]])
        with pytest.raises(ValueError, match="self-intersect"):
            classify(grid, bowtie)

    def test_deterministic(self):
        grid = Grid(14, 14, 1.0, 1.0, origin=(-6.5, -6.5))
        f = circle(3.1, center=(0.2, -0.3))
        c1 = classify(grid, f)
        c2 = classify(grid, f)
        assert np.array_equal(c1.codes, c2.codes)
        assert np.array_equal(c1.ribbon, c2.ribbon)


class TestUpdateCollections:
    def test_no_change_for_tiny_advance(self):
        grid = Grid(16, 16, 1.0, 1.0, origin=(-7.5, -7.5))
        c1 = classify(grid, circle(3.0))
        c2 = update_collections(grid, c1, circle(3.001))
        assert np.array_equal(c1.codes, c2.codes)

    def test_growth_matches_full_reclassification(self):
        grid = Grid(16, 16, 1.0, 1.0, origin=(-7.5, -7.5))
        c = classify(grid, circle(2.6))
        r = 2.6
        for _ in range(10):
            r += 0.25
            c = update_collections(grid, c, circle(r))
            ref = classify(grid, circle(r))
            assert np.array_equal(c.codes, ref.codes)

    def test_monotone_growth(self):
        grid = Grid(16, 16, 1.0, 1.0, origin=(-7.5, -7.5))
        c1 = classify(grid, circle(2.6))
        c2 = update_collections(grid, c1, circle(3.3))
        frac1 = set(c1.fracture)
        frac2 = set(c2.fracture)
        assert frac1 <= frac2

    def test_shrinking_front_rejected(self):
        grid = Grid(16, 16, 1.0, 1.0, origin=(-7.5, -7.5))
        c1 = classify(grid, circle(3.4))
        with pytest.raises(ValueError, match="expanding"):
            update_collections(grid, c1, circle(2.4))

    def test_jump_beyond_one_pitch_rejected(self):
        grid = Grid(20, 20, 1.0, 1.0, origin=(-9.5, -9.5))
        c1 = classify(grid, circle(2.5))
        with pytest.raises(ValueError, match="one cell pitch"):
            update_collections(grid, c1, circle(5.6))


class TestGrid:
    def test_bad_cell_size_rejected(self):
        with pytest.raises(ValueError):
            Grid(4, 4, -1.0, 1.0)

    def test_cell_of_point_roundtrip(self):
        grid = Grid(9, 7, 0.5, 0.25, origin=(-2.0, -0.75))
        k = grid.flat(3, 4)
        cx, cy = grid.center_of(k)
        assert grid.cell_of_point(cx + 0.1, cy - 0.05) == k
