import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from conftest import SQRT_PI_2, forced_problem, varying_problem
from heatinv.exceptions import CoefficientError
from heatinv.forward import (
    ModeTrajectory,
    accumulate_A,
    fd_solve,
    reconstruct_u,
    solve_modes,
    synthesize_flux,
)
from heatinv.model import FunctionSpec as Fn
from heatinv.model import ProblemSpec, TimeGrid, TimeSeries, compatibility_check
from heatinv.spectral import ModeData, lift

# DOP853 (rtol 1e-13) solutions of c' + c = rhs, c(0) = sqrt(pi/2), evaluated at t = 1.
C1_FREE_AT_1 = 0.4610685044478974
C1_FORCED_AT_1 = 0.9221370088957871


def single_mode(grid, forcing=None):
    F = np.zeros((len(grid), 3))
    if forcing is not None:
        F[:, 0] = forcing(grid.nodes)
    return ModeData(3, np.array([SQRT_PI_2, 0, 0]), F, grid)


class TestAccumulate:
    def test_constant(self):
        assert accumulate_A(Fn.constant(1.0), TimeGrid(1.0, 10)).values[-1] == pytest.approx(1.0, abs=1e-15)

    def test_sinusoid(self):
        A = accumulate_A(Fn.sinusoidal(1.0, 0.5, 1.0), TimeGrid(1.0, 200))
        exact = 1 + 0.5 * (1 - math.cos(1))
        assert exact == pytest.approx(1.2298488, abs=1e-7)
        assert A.values[-1] == pytest.approx(exact, abs=1e-12)

    def test_zero_coefficient(self):
        with pytest.raises(CoefficientError):
            accumulate_A(Fn.constant(0.0), TimeGrid(1.0, 10))

    def test_floor(self):
        with pytest.raises(CoefficientError):
            accumulate_A(Fn.constant(0.5), TimeGrid(1.0, 10), a_floor=0.6)

    def test_strictly_increasing(self):
        A = accumulate_A(Fn.exponential(2.0, 3.0), TimeGrid(2.0, 50))
        assert A.values[0] == 0.0
        assert np.all(np.diff(A.values) > 0)


class TestSolveModes:
    def test_unforced(self):
        grid = TimeGrid(1.0, 100)
        traj = solve_modes(TimeSeries(grid, grid.nodes), single_mode(grid))
        assert traj.c[-1, 0] == pytest.approx(C1_FREE_AT_1, rel=1e-14)
        assert C1_FREE_AT_1 == pytest.approx(SQRT_PI_2 * math.exp(-1), rel=1e-12)

    def test_forced(self):
        grid = TimeGrid(1.0, 1000)
        md = single_mode(grid, lambda s: SQRT_PI_2 * np.exp(-s))
        traj = solve_modes(TimeSeries(grid, grid.nodes), md)
        assert traj.c[-1, 0] == pytest.approx(C1_FORCED_AT_1, abs=1e-6)
        expected = SQRT_PI_2 * np.exp(-grid.nodes) * (1 + grid.nodes)
        np.testing.assert_allclose(traj.c[:, 0], expected, atol=1e-12)

    def test_zero_data(self):
        grid = TimeGrid(1.0, 20)
        md = ModeData(4, np.zeros(4), np.zeros((21, 4)), grid)
        traj = solve_modes(TimeSeries(grid, grid.nodes), md)
        assert not np.any(traj.c)

    def test_initial_condition_held(self):
        spec = varying_problem()
        grid = TimeGrid(1.0, 64)
        lp = lift(spec, grid, 8)
        traj = solve_modes(accumulate_A(spec.a_true, grid), lp.mode_data)
        np.testing.assert_array_equal(traj.c[0], lp.mode_data.H)

    def test_no_overflow_for_high_modes(self):
        grid = TimeGrid(3.0, 300)
        md = ModeData(64, np.ones(64), np.ones((301, 64)), grid)
        traj = solve_modes(TimeSeries(grid, 5 * grid.nodes), md)
        assert np.all(np.isfinite(traj.c))

    def test_matches_direct_duhamel_sum(self):
        spec = varying_problem()
        grid = TimeGrid(1.0, 40)
        lp = lift(spec, grid, 4)
        A = accumulate_A(spec.a_true, grid).values
        traj = solve_modes(TimeSeries(grid, A), lp.mode_data)
        i, dt = 40, grid.dt
        w = np.full(i + 1, dt)
        w[0] = w[-1] = dt / 2
        for m in range(1, 5):
            kern = np.exp(-(m**2) * (A[i] - A[: i + 1]))
            direct = lp.mode_data.H[m - 1] * math.exp(-(m**2) * A[i]) + np.sum(w * kern * lp.mode_data.F[: i + 1, m - 1])
            assert traj.c[i, m - 1] == pytest.approx(direct, rel=1e-13, abs=1e-15)

    def test_ode_residual_second_order(self):
        spec = varying_problem()
        residuals = []
        for n in (100, 200, 400):
            grid = TimeGrid(1.0, n)
            lp = lift(spec, grid, 4)
            traj = solve_modes(accumulate_A(spec.a_true, grid), lp.mode_data)
            c = traj.c
            a = spec.a_true(grid.nodes)[1:-1, None]
            m2 = np.arange(1, 5) ** 2
            res = (c[2:] - c[:-2]) / (2 * grid.dt) + a * m2 * c[1:-1] - lp.mode_data.F[1:-1]
            residuals.append(np.max(np.abs(res)))
        assert residuals[0] / residuals[1] > 3.5
        assert residuals[1] / residuals[2] > 3.5

    def test_damping_bound(self):
        spec = varying_problem()
        grid = TimeGrid(2.0, 200)
        lp = lift(spec, grid, 6)
        traj = solve_modes(accumulate_A(spec.a_true, grid), lp.mode_data)
        H, F = lp.mode_data.H, lp.mode_data.F
        bound = np.abs(H) + grid.nodes[:, None] * np.max(np.abs(F), axis=0)
        assert np.all(np.abs(traj.c) <= bound + 1e-14)


class TestReconstructAndFlux:
    def test_single_mode_field(self):
        grid = TimeGrid(1.0, 10)
        c = np.zeros((11, 2))
        c[:, 0] = SQRT_PI_2 * np.exp(-grid.nodes)
        lp = lift(ProblemSpec(h=Fn.sine({1: 1})), grid, 2)
        snap = reconstruct_u(ModeTrajectory(c, grid), lp, [math.pi / 2], 10)
        assert snap.values[0] == pytest.approx(math.exp(-1), rel=1e-14)
        assert snap.values[0] == pytest.approx(0.3678794, abs=1e-7)

    def test_pure_lift(self):
        grid = TimeGrid(1.0, 4)
        spec = ProblemSpec(u1=Fn.constant(1), u2=Fn.constant(1), h=Fn.constant(1))
        lp = lift(spec, grid, 3)
        snap = reconstruct_u(ModeTrajectory(np.zeros((5, 3)), grid), lp, np.linspace(0, math.pi, 7), 2)
        np.testing.assert_allclose(snap.values, 1.0, rtol=1e-15)

    def test_zero_field(self):
        grid = TimeGrid(1.0, 4)
        lp = lift(ProblemSpec(), grid, 3)
        snap = reconstruct_u(ModeTrajectory(np.zeros((5, 3)), grid), lp, np.linspace(0, math.pi, 5), 4)
        assert not np.any(snap.values)

    def test_flux_unforced(self):
        grid = TimeGrid(1.0, 50)
        c = np.zeros((51, 1))
        c[:, 0] = SQRT_PI_2 * np.exp(-grid.nodes)
        lp = lift(ProblemSpec(h=Fn.sine({1: 1})), grid, 1)
        g = synthesize_flux(ModeTrajectory(c, grid), lp).g
        np.testing.assert_allclose(g, np.exp(-grid.nodes), rtol=1e-14)
        assert g[0] == pytest.approx(1.0, rel=1e-15)

    def test_flux_lift_slope_only(self):
        grid = TimeGrid(1.0, 5)
        spec = ProblemSpec(u2=Fn.constant(math.pi), h=Fn.polynomial(0, 1))
        lp = lift(spec, grid, 3)
        g = synthesize_flux(ModeTrajectory(np.zeros((6, 3)), grid), lp).g
        np.testing.assert_allclose(g, 1.0, rtol=1e-15)

    def test_flux_forced(self):
        grid = TimeGrid(1.0, 50)
        c = np.zeros((51, 1))
        c[:, 0] = SQRT_PI_2 * np.exp(-grid.nodes) * (1 + grid.nodes)
        lp = lift(ProblemSpec(h=Fn.sine({1: 1})), grid, 1)
        g = synthesize_flux(ModeTrajectory(c, grid), lp).g
        assert g[-1] == pytest.approx(2 * math.exp(-1), rel=1e-14)
        assert g[-1] == pytest.approx(0.7357589, abs=1e-7)

    @pytest.mark.parametrize("problem", [forced_problem, varying_problem])
    def test_flux_consistent_with_compatibility(self, problem):
        spec = problem()
        grid = TimeGrid(1.0, 50)
        lp = lift(spec, grid, 16)
        flux = synthesize_flux(solve_modes(accumulate_A(spec.a_true, grid), lp.mode_data), lp)
        assert compatibility_check(spec, flux, 16) <= 1e-10

    def test_flux_with_moving_boundaries(self):
        spec = ProblemSpec(
            u1=Fn.polynomial(0.0, 0.2),
            u2=Fn.polynomial(0.0, 0.3),
            h=Fn.sine({1: 1}),
            a_true=Fn.constant(1.0),
        )
        grid = TimeGrid(1.0, 20)
        lp = lift(spec, grid, 8)
        flux = synthesize_flux(solve_modes(accumulate_A(spec.a_true, grid), lp.mode_data), lp)
        assert compatibility_check(spec, flux, 8) <= 1e-10


class TestFiniteDifferenceOracle:
    def test_heat_kernel_mode(self):
        spec = ProblemSpec(h=Fn.sine({1: 1}))
        grid = TimeGrid(1.0, 1000)
        snaps, flux = fd_solve(spec, Fn.constant(1.0), 200, grid, keep=[1000])
        x = snaps[0].x_nodes
        mid = np.argmin(np.abs(x - math.pi / 2))
        assert snaps[0].values[mid] == pytest.approx(math.exp(-1), abs=1e-4)
        np.testing.assert_allclose(flux.g, np.exp(-grid.nodes), atol=2e-4)

    def test_zero_data(self):
        snaps, flux = fd_solve(ProblemSpec(), Fn.constant(1.0), 16, TimeGrid(1.0, 20))
        assert all(not np.any(s.values) for s in snaps)
        assert not np.any(flux.g)

    def test_constant_solution(self):
        spec = ProblemSpec(u1=Fn.constant(1), u2=Fn.constant(1), h=Fn.constant(1))
        snaps, flux = fd_solve(spec, Fn.sinusoidal(1, 0.5, 1), 16, TimeGrid(1.0, 20))
        for s in snaps:
            np.testing.assert_allclose(s.values, 1.0, rtol=1e-14)
        np.testing.assert_allclose(flux.g, 0.0, atol=1e-12)

    def test_boundary_values_held(self):
        spec = ProblemSpec(u1=Fn.polynomial(0, 1), u2=Fn.polynomial(0, 2), h=Fn.zero())
        snaps, _ = fd_solve(spec, Fn.constant(1.0), 32, TimeGrid(1.0, 10))
        for s in snaps:
            assert s.values[0] == pytest.approx(s.t)
            assert s.values[-1] == pytest.approx(2 * s.t)

    def test_rejects_coarse_grid(self):
        with pytest.raises(ValueError):
            fd_solve(ProblemSpec(), Fn.constant(1.0), 4, TimeGrid(1.0, 4))

    def test_rejects_bad_coefficient(self):
        with pytest.raises(CoefficientError):
            fd_solve(ProblemSpec(), Fn.constant(-1.0), 16, TimeGrid(1.0, 4))

    def test_agrees_with_spectral_route_with_moving_boundaries(self):
        spec = ProblemSpec(
            u1=Fn.polynomial(0.0, 0.5),
            u2=Fn.constant(0.0),
            h=Fn.sine({1: 1.0}),
            f=Fn.sine({2: 0.5}),
            a_true=Fn.sinusoidal(1.0, 0.3, 2.0),
        )
        grid = TimeGrid(0.5, 500)
        snaps, _ = fd_solve(spec, spec.a_true, 200, grid, keep=[500])
        lp = lift(spec, grid, 64)
        traj = solve_modes(accumulate_A(spec.a_true, grid), lp.mode_data)
        spectral = reconstruct_u(traj, lp, snaps[0].x_nodes, 500).values
        # the lift forcing has 1/m coefficients, so the truncated series converges slowly
        rel = np.linalg.norm(spectral - snaps[0].values) / np.linalg.norm(snaps[0].values)
        assert rel < 5e-3
