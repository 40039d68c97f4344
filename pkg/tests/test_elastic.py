import numpy as np
import pytest
from scipy.integrate import dblquad

from planfrac.elastic import (
    InfluenceMatrix,
    assemble_influence,
    influence_coefficient,
    line_influence_coefficient,
    line_matrix,
    line_offset_table,
    offset_table,
    pressure,
)
from planfrac.mesh import Grid, classify


def finite_part_self_quadrature(eps=1e-4):
    """Independent finite-part quadrature of the 1/R^3 kernel over the unit
    square centered at the evaluation point.

    FP int = lim_{eps->0} [ int_{R>eps} R^-3 dS - 2*pi/eps ].  The annulus
    eps < R < 1/2 integrates to 2*pi*(1/eps - 2); the four corner regions are
    integrated numerically.
    """
    def corner(theta):
        # radial integral from 1/2 to 0.5/cos(theta): int r^-3 r dr = [-1/r]
        return 2.0 - 2.0 * np.cos(theta)

    from scipy.integrate import quad
    val, _ = quad(corner, -np.pi / 4, np.pi / 4, epsabs=1e-12)
    corners = 4.0 * val
    fp = (2.0 * np.pi * (1.0 / eps - 2.0) + corners) - 2.0 * np.pi / eps
    # pressure = -(1/8pi) * FP for unit opening
    return -fp / (8.0 * np.pi)


class TestInfluenceCoefficient:
    def test_self_coefficient_matches_finite_part_quadrature(self):
        oracle = finite_part_self_quadrature()
        val = float(influence_coefficient(0, 0, 1.0, 1.0))
        assert val == pytest.approx(oracle, abs=1e-6)
        assert val == pytest.approx(np.sqrt(2.0) / np.pi, rel=1e-12)

    def test_far_field_matches_patch_quadrature(self):
        # receiver at (10, 0): p = -(1/8pi) int_patch R^-3 dS
        def integrand(y, x):
            return ((10.0 - x) ** 2 + y ** 2) ** -1.5

        patch, _ = dblquad(integrand, -0.5, 0.5, -0.5, 0.5, epsabs=1e-12)
        oracle = -patch / (8.0 * np.pi)
        val = float(influence_coefficient(10, 0, 1.0, 1.0))
        assert val == pytest.approx(oracle, rel=1e-10)
        # point-patch estimate magnitude and opposite sign to the diagonal
        assert abs(val) == pytest.approx(1.0 / (8.0 * np.pi * 10.0 ** 3), rel=0.01)
        assert val < 0.0 < float(influence_coefficient(0, 0, 1.0, 1.0))

    def test_depends_only_on_offsets(self):
        a = influence_coefficient(3, -2, 0.7, 1.1)
        b = influence_coefficient(3, -2, 0.7, 1.1)
        assert float(a) == float(b)

    def test_rectangular_cells_against_quadrature(self):
        dx, dy = 0.8, 0.5

        def integrand(y, x):
            return ((4 * dx - x) ** 2 + (3 * dy - y) ** 2) ** -1.5

        patch, _ = dblquad(integrand, -dx / 2, dx / 2, -dy / 2, dy / 2,
                           epsabs=1e-13)
        oracle = -patch / (8.0 * np.pi)
        assert float(influence_coefficient(4, 3, dx, dy)) == pytest.approx(
            oracle, rel=1e-9)

    def test_symmetry_in_offset_sign(self):
        for di, dj in ((2, 5), (1, 0), (3, -4)):
            a = float(influence_coefficient(di, dj, 0.9, 0.6))
            b = float(influence_coefficient(-di, -dj, 0.9, 0.6))
            assert a == pytest.approx(b, rel=1e-14)


def circle(radius, center=(0.0, 0.0), n=256):
    th = np.linspace(0.0, 2.0 * np.pi, n, endpoint=False)
    return np.stack([center[0] + radius * np.cos(th),
                     center[1] + radius * np.sin(th)], axis=1)


class TestAssemblyAndPressure:
    def setup_method(self):
        self.grid = Grid(16, 16, 1.0, 1.0, origin=(-7.5, -7.5))
        self.cls = classify(self.grid, circle(3.4))
        self.G = assemble_influence(self.grid, self.cls)

    def test_offset_table_matches_direct_evaluation(self):
        t = offset_table(4, 3, 0.8, 0.5)
        for di in range(-3, 4):
            for dj in range(-2, 3):
                assert t[dj + 2, di + 3] == pytest.approx(
                    float(influence_coefficient(di, dj, 0.8, 0.5)), rel=0.0)

    def test_matrix_symmetric_and_diagonal_positive(self):
        M = self.G.matrix
        assert np.array_equal(M, M.T)
        assert np.all(np.diag(M) > 0.0)

    def test_zero_opening_returns_stress_contrast(self):
        nf = len(self.cls.fracture)
        p = pressure(self.cls, self.G, np.zeros(nf), stress_contrast=0.7)
        assert p == pytest.approx(np.full(nf, 0.7))

    def test_unit_impulse_reproduces_coefficients(self):
        nf = len(self.cls.fracture)
        w = np.zeros(nf)
        w[nf // 2] = 1.0
        p = pressure(self.cls, self.G, w)
        src = self.cls.fracture[nf // 2]
        js, is_ = np.divmod(self.cls.fracture, self.grid.nx)
        j0, i0 = divmod(src, self.grid.nx)
        expect = influence_coefficient(is_ - i0, js - j0, 1.0, 1.0)
        assert p == pytest.approx(expect, rel=1e-14)

    def test_superposition(self):
        nf = len(self.cls.fracture)
        rng = np.random.default_rng(7)
        w1 = rng.uniform(0, 1, nf)
        w2 = rng.uniform(0, 1, nf)
        p1 = pressure(self.cls, self.G, w1, 0.3)
        p2 = pressure(self.cls, self.G, w2, 0.3)
        p12 = pressure(self.cls, self.G, w1 + w2, 0.3)
        assert p12 - 0.3 == pytest.approx((p1 - 0.3) + (p2 - 0.3), rel=1e-12)

    def test_matvec_bit_identical(self):
        nf = len(self.cls.fracture)
        w = np.linspace(0.1, 1.0, nf)
        p1 = pressure(self.cls, self.G, w)
        p2 = pressure(self.cls, self.G, w)
        assert np.array_equal(p1, p2)

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(ValueError):
            pressure(self.cls, self.G, np.zeros(3))

    def test_penny_crack_uniform_pressure(self):
        # classical: w = (8 p0 / pi E') sqrt(a^2 - rho^2) gives p = p0 inside
        grid = Grid(42, 42, 0.25, 0.25, origin=(-5.125, -5.125))
        cls = classify(grid, circle(3.6, n=720))
        G = assemble_influence(grid, cls)
        js, is_ = np.divmod(cls.fracture, grid.nx)
        x = grid.origin[0] + is_ * grid.dx
        y = grid.origin[1] + js * grid.dy
        rho2 = x * x + y * y
        a = 3.6
        w = (8.0 / np.pi) * np.sqrt(np.maximum(a * a - rho2, 0.0))
        p = pressure(cls, G, w)
        interior = rho2 < (0.6 * a) ** 2
        assert np.max(np.abs(p[interior] - 1.0)) < 0.02


class TestLineKernel:
    def test_self_coefficient(self):
        assert float(line_influence_coefficient(0, 0.5)) == pytest.approx(
            1.0 / (np.pi * 0.5), rel=1e-14)

    def test_sign_flips_off_diagonal(self):
        assert float(line_influence_coefficient(1, 1.0)) < 0.0

    def test_plane_strain_crack_uniform_pressure(self):
        # w = 4 p0 sqrt(a^2 - x^2) / E' gives p = p0 on the crack
        n = 401
        a = 1.0
        dx = 2.05 * a / n
        x = (np.arange(n) - n // 2) * dx
        idx = np.flatnonzero(np.abs(x) < a)
        w = 4.0 * np.sqrt(np.maximum(a * a - x[idx] ** 2, 0.0))
        tab = line_offset_table(n, dx)
        M = line_matrix(idx, tab, n)
        p = M @ w
        xs = x[idx]
        interior = np.abs(xs) < 0.8 * a
        assert np.max(np.abs(p[interior] - 1.0)) < 0.01
