import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from planfrac.lubrication import (
    FluidModel,
    apply_source_regularization,
    continuity_rhs,
    extrapolate_source_opening,
    side_velocity,
    source_side_fluxes,
)
from planfrac.mesh import Grid


class TestSideVelocity:
    def test_newtonian_unit_case(self):
        assert side_velocity(1.0, -1.0, 0.0, 1.0) == pytest.approx(1.0)

    def test_zero_gradient_any_index(self):
        for n in (1.0, 0.7, 0.3):
            assert side_velocity(2.0, 0.0, 0.0, n) == 0.0

    def test_power_law_symbolic_case(self):
        # n = 0.5, w = 2, gx = -1: v = (2^1.5)^2 = 8
        assert side_velocity(2.0, -1.0, 0.0, 0.5) == pytest.approx(8.0, rel=1e-12)

    def test_zero_opening(self):
        assert side_velocity(0.0, -3.0, 0.0, 0.6) == 0.0

    def test_cross_gradient_enters_bracket(self):
        # with n < 1 a transverse gradient changes the magnitude factor
        v1 = side_velocity(1.0, -1.0, 0.0, 0.5)
        v2 = side_velocity(1.0, -1.0, 1.0, 0.5)
        assert v2 != pytest.approx(v1)
        # explicit: v = { w^1.5 * (2)^(0.25) }^2 * 1 for gx=-1, gy=1
        assert v2 == pytest.approx(2.0 ** 0.5, rel=1e-12)

    @given(w=st.floats(1e-3, 10.0), g=st.floats(1e-6, 100.0),
           n=st.floats(0.2, 1.0))
    @settings(max_examples=200, deadline=None)
    def test_antisymmetry(self, w, g, n):
        vp = side_velocity(w, g, 0.0, n)
        vm = side_velocity(w, -g, 0.0, n)
        assert vp == pytest.approx(-vm, rel=1e-12)
        assert vm >= 0.0

    @given(w=st.floats(0.0, 5.0), gx=st.floats(-10, 10), gy=st.floats(-10, 10))
    @settings(max_examples=200, deadline=None)
    def test_newtonian_reduction_exact(self, w, gx, gy):
        assert side_velocity(w, gx, gy, 1.0) == pytest.approx(-w * w * gx, rel=1e-14)

    def test_vectorized(self):
        w = np.array([1.0, 2.0])
        g = np.array([-1.0, -1.0])
        v = side_velocity(w, g, np.zeros(2), 1.0)
        assert v == pytest.approx([1.0, 4.0])


class TestContinuityRhs:
    def setup_method(self):
        self.grid = Grid(8, 6, 0.5, 0.4, origin=(0.0, 0.0))
        self.fluid = FluidModel(n=1.0, source_cell=self.grid.flat(4, 3))

    def test_zero_fluxes_zero_rate_away_from_source(self):
        qx = np.zeros((6, 9))
        qy = np.zeros((7, 8))
        dwdt = continuity_rhs(self.grid, qx, qy, self.fluid, 0.0)
        j, i = divmod(self.fluid.source_cell, 8)
        assert dwdt[j, i] == pytest.approx(1.0 / (0.5 * 0.4))
        dwdt[j, i] = 0.0
        assert np.all(dwdt == 0.0)

    def test_uniform_flux_telescopes(self):
        qx = np.full((6, 9), 0.37)
        qy = np.zeros((7, 8))
        fluid = FluidModel(n=1.0)  # no source
        dwdt = continuity_rhs(self.grid, qx, qy, fluid, 0.0)
        assert np.all(dwdt == 0.0)

    @given(seed=st.integers(0, 10_000))
    @settings(max_examples=60, deadline=None)
    def test_global_balance_for_arbitrary_fluxes(self, seed):
        # zero border fluxes: sum(dwdt) dx dy = Q0 f(t) exactly
        rng = np.random.default_rng(seed)
        qx = np.zeros((6, 9))
        qy = np.zeros((7, 8))
        qx[:, 1:-1] = rng.normal(size=(6, 7))
        qy[1:-1, :] = rng.normal(size=(5, 8))
        fluid = FluidModel(n=1.0, q0=1.0, source_cell=11,
                           profile=lambda t: 1.0 + 0.5 * np.sin(t))
        t = float(rng.uniform(0, 10))
        dwdt = continuity_rhs(self.grid, qx, qy, fluid, t)
        total = np.sum(dwdt) * 0.5 * 0.4
        assert total == pytest.approx(1.0 + 0.5 * np.sin(t), rel=1e-12)

    def test_leakoff_field_subtracts(self):
        qx = np.zeros((6, 9))
        qy = np.zeros((7, 8))
        leak = np.full(48, 0.2)
        fluid = FluidModel(n=1.0, leakoff=leak)
        dwdt = continuity_rhs(self.grid, qx, qy, fluid, 0.0)
        assert np.all(dwdt == pytest.approx(-0.2))

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            continuity_rhs(self.grid, np.zeros((6, 8)), np.zeros((7, 8)),
                           self.fluid, 0.0)

    def test_source_override_zeroes_the_cell(self):
        qx = np.zeros((6, 9))
        qy = np.zeros((7, 8))
        apply_source_regularization(self.grid, qx, qy, self.fluid, 0.0)
        dwdt = continuity_rhs(self.grid, qx, qy, self.fluid, 0.0,
                              source_override=True)
        j, i = divmod(self.fluid.source_cell, 8)
        assert dwdt[j, i] == 0.0
        # the four neighbours of the source receive exactly Q0 in total
        total = np.sum(dwdt) * 0.5 * 0.4
        assert total == pytest.approx(1.0, rel=1e-12)


class TestSourceSideFluxes:
    def test_square_cells(self):
        qx, qy = source_side_fluxes(0.2, 0.2, 1.0)
        assert qx == pytest.approx(0.25 / 0.2, rel=1e-12)
        assert qy == pytest.approx(0.25 / 0.2, rel=1e-12)

    @given(dx=st.floats(0.05, 5.0), dy=st.floats(0.05, 5.0),
           q0=st.floats(0.1, 10.0))
    @settings(max_examples=100, deadline=None)
    def test_mass_identity(self, dx, dy, q0):
        qx, qy = source_side_fluxes(dx, dy, q0)
        assert 2 * qx * dy + 2 * qy * dx == pytest.approx(q0, rel=1e-12)

    def test_anisotropic_cells(self):
        dx = 0.3
        qx, qy = source_side_fluxes(dx, 2 * dx, 1.0)
        assert qx == pytest.approx(np.arctan(2.0) / (2 * np.pi * dx), rel=1e-12)


class TestSourceOpening:
    def test_quadratic_profile_reproduced(self):
        # separable quadratic fields are extrapolated exactly
        y, x = np.mgrid[0:7, 0:9].astype(float)
        w = 3.0 - 0.1 * (x - 4) ** 2 - 0.2 * (y - 3) ** 2
        val = extrapolate_source_opening(w, 3, 4)
        assert val == pytest.approx(w[3, 4], rel=1e-12)

    def test_fallback_near_edges(self):
        w = np.ones((4, 4))
        assert extrapolate_source_opening(w, 1, 1) == pytest.approx(1.0)


class TestFluidModel:
    def test_invalid_index_rejected(self):
        with pytest.raises(ValueError):
            FluidModel(n=1.4)
        with pytest.raises(ValueError):
            FluidModel(n=0.0)

    def test_negative_leakoff_rejected(self):
        with pytest.raises(ValueError):
            FluidModel(leakoff=-1.0)
