"""Forward problem: given a(t), produce mode amplitudes, the field and the flux.

Two independent routes are provided.  The spectral route integrates each
mode ODE ``c_m' + a(t) m^2 c_m = F_m(t)`` through its Duhamel formula on the
time grid.  :func:`fd_solve` is a plain Crank-Nicolson finite-difference
solver used to cross-check it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from scipy.linalg import solve_banded

from .exceptions import OracleFailure
from .model import (
    SQRT_2_OVER_PI,
    FluxData,
    FunctionSpec,
    ProblemSpec,
    TimeGrid,
    TimeSeries,
    check_coefficient_samples,
)
from .spectral import LiftedProblem, ModeData, lift


@dataclass(frozen=True)
class ModeTrajectory:
    """``c[i, m-1] = c_m(t_i)``."""

    c: np.ndarray
    grid: TimeGrid

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float)
        if c.ndim != 2 or c.shape[0] != len(self.grid):
            raise ValueError(f"trajectory shape {c.shape} does not match grid")
        if not np.all(np.isfinite(c)):
            raise ValueError("trajectory has non-finite entries")
        c.setflags(write=False)
        object.__setattr__(self, "c", c)


@dataclass(frozen=True)
class FieldSnapshot:
    x_nodes: np.ndarray
    values: np.ndarray
    t: float


def accumulate_A(a: FunctionSpec, grid: TimeGrid, a_floor: float = 0.0) -> TimeSeries:
    """``A(t_i) = int_0^{t_i} a(s) ds``.

    Each step is integrated by the trapezoid rule on the step and on its two
    halves; the Richardson combination of the pair is what gets accumulated.
    """
    t = grid.nodes
    a_nodes = np.asarray(a(t), dtype=float) + np.zeros_like(t)
    a_mid = np.asarray(a(0.5 * (t[:-1] + t[1:])), dtype=float) + np.zeros(grid.n)
    floor = a_floor if a_floor > 0 else 0.0
    check_coefficient_samples(a_nodes, floor)
    check_coefficient_samples(a_mid, floor)
    dt = grid.dt
    coarse = 0.5 * dt * (a_nodes[:-1] + a_nodes[1:])
    fine = 0.25 * dt * (a_nodes[:-1] + 2.0 * a_mid + a_nodes[1:])
    steps = fine + (fine - coarse) / 3.0
    A = np.concatenate([[0.0], np.cumsum(steps)])
    return TimeSeries(grid, A)


def solve_modes(A: TimeSeries, mode_data: ModeData) -> ModeTrajectory:
    """Duhamel solution of every mode ODE, trapezoid rule in time.

    ``c_m(t_i) = H_m e^{-m^2 A_i} + sum_j w_j e^{-m^2 (A_i - A_j)} F_m(t_j)``
    is evaluated by the equivalent recursion

    ``S_{i+1} = e^{-m^2 (A_{i+1} - A_i)} (S_i + dt/2 F_i) + dt/2 F_{i+1}``

    which only ever forms decaying exponentials.
    """
    Av = np.asarray(A.values)
    if Av[0] != 0.0:
        raise ValueError("A(0) must be 0")
    if np.any(np.diff(Av) < 0):
        raise ValueError("A must be nondecreasing")
    H, F = mode_data.H, mode_data.F
    m2 = np.arange(1, mode_data.M + 1, dtype=float) ** 2
    decay = np.exp(-np.outer(np.diff(Av), m2))
    half = 0.5 * mode_data.grid.dt
    c = np.empty_like(F)
    homog = H.copy()
    duhamel = np.zeros_like(H)
    c[0] = H
    for i in range(len(Av) - 1):
        homog = decay[i] * homog
        duhamel = decay[i] * (duhamel + half * F[i]) + half * F[i + 1]
        c[i + 1] = homog + duhamel
    return ModeTrajectory(c, mode_data.grid)


def reconstruct_u(
    traj: ModeTrajectory, lifted: LiftedProblem, x_nodes, t_index: int
) -> FieldSnapshot:
    x = np.asarray(x_nodes, dtype=float)
    t = float(traj.grid.nodes[t_index])
    m = np.arange(1, traj.c.shape[1] + 1)
    basis = SQRT_2_OVER_PI * np.sin(np.outer(x, m))
    values = basis @ traj.c[t_index] + lifted.r_at(x, t)
    return FieldSnapshot(x, values, t)


def flux_weights(M: int) -> np.ndarray:
    """``p_m'(0) = m sqrt(2/pi)``."""
    return SQRT_2_OVER_PI * np.arange(1, M + 1, dtype=float)


def synthesize_flux(traj: ModeTrajectory, lifted: LiftedProblem) -> FluxData:
    g = traj.c @ flux_weights(traj.c.shape[1]) + lifted.r_slope
    return FluxData(traj.grid, g)


def synthesize_from_spec(
    spec: ProblemSpec, grid: TimeGrid, modes: int
) -> FluxData:
    """Flux generated by ``spec.a_true`` through the spectral route."""
    spec.check_coefficient(grid)
    lifted = lift(spec, grid, modes)
    A = accumulate_A(spec.a_true, grid, spec.a_floor)
    return synthesize_flux(solve_modes(A, lifted.mode_data), lifted)


def fd_solve(
    spec: ProblemSpec,
    a: FunctionSpec,
    x_count: int,
    grid: TimeGrid,
    keep: Optional[List[int]] = None,
) -> Tuple[List[FieldSnapshot], FluxData]:
    """Crank-Nicolson solve of ``u_t = a(t) u_xx + f`` with Dirichlet data.

    ``x_count`` is the number of spatial intervals.  ``a`` is taken at half
    steps and the source is averaged over each step.  The flux at ``x = 0``
    uses the one-sided stencil ``(-3 u0 + 4 u1 - u2) / (2 dx)``.  Snapshots
    are kept at the grid indices in ``keep`` (default: all).
    """
    if x_count < 8:
        raise ValueError("x_count must be >= 8")
    t = grid.nodes
    dt = grid.dt
    a_half = np.asarray(a(t[:-1] + 0.5 * dt), dtype=float) + np.zeros(grid.n)
    check_coefficient_samples(a_half, spec.a_floor)
    x = np.linspace(0.0, math.pi, x_count + 1)
    dx = x[1] - x[0]
    xi = x[1:-1]
    keep_set = set(range(len(t))) if keep is None else set(keep)

    u = np.asarray(spec.h(x), dtype=float) + np.zeros_like(x)
    u[0] = spec.u1(0.0)
    u[-1] = spec.u2(0.0)
    u1 = np.asarray(spec.u1(t), dtype=float) + np.zeros_like(t)
    u2 = np.asarray(spec.u2(t), dtype=float) + np.zeros_like(t)
    src_prev = spec.source(xi, t[0])

    snapshots = []
    flux = np.empty_like(t)

    def record(i, field):
        flux[i] = (-3.0 * field[0] + 4.0 * field[1] - field[2]) / (2.0 * dx)
        if i in keep_set:
            snapshots.append(FieldSnapshot(x, field.copy(), float(t[i])))

    record(0, u)
    n_in = x_count - 1
    ab = np.empty((3, n_in))
    for i in range(grid.n):
        lam = 0.5 * dt * a_half[i] / dx**2
        src_next = spec.source(xi, t[i + 1])
        interior = u[1:-1]
        rhs = (1.0 - 2.0 * lam) * interior
        rhs[1:] += lam * interior[:-1]
        rhs[:-1] += lam * interior[1:]
        rhs += 0.5 * dt * (src_prev + src_next)
        rhs[0] += lam * (u[0] + u1[i + 1])
        rhs[-1] += lam * (u[-1] + u2[i + 1])
        ab[0, :] = -lam
        ab[1, :] = 1.0 + 2.0 * lam
        ab[2, :] = -lam
        new_interior = solve_banded((1, 1), ab, rhs)
        u = np.concatenate([[u1[i + 1]], new_interior, [u2[i + 1]]])
        if not np.all(np.isfinite(u)):
            raise OracleFailure(f"finite-difference solution blew up at t={t[i + 1]:.6g}")
        record(i + 1, u)
        src_prev = src_next
    return snapshots, FluxData(grid, flux)
