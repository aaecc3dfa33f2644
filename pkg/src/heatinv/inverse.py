"""Recovery of A(t) = int_0^t a(s) ds from boundary flux data.

The flux identity on the grid reads, for every node ``t_i``::

    Q0(A_i) + sum_{j<=i} w_ij Q(A_i - A_j, t_j) = g~_i

where ``g~ = g - (u2 - u1)/pi`` removes the flux of the affine lift and
``w_ij`` are trapezoid weights.  ``Q0`` is strictly decreasing, so the
identity can be solved for ``A_i`` by inverting ``Q0``; iterating that map
from ``A_1 = Q0^{-1}(g~)`` is the fixed-point scheme implemented here.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.ndimage import uniform_filter1d

from .exceptions import DataInconsistent, DomainError, NotConvergedWarning, OutOfRange
from .model import SQRT_2_OVER_PI, FluxData, TimeSeries
from .spectral import (
    RANGE_SLACK,
    LiftedProblem,
    admissible_h,
    eval_q0,
    eval_q0_prime,
    invert_q0_many,
)

METHODS = ("picard-global", "volterra-marching")
CLAMP_POLICIES = ("clamp-to-zero", "monotone-projection")


@dataclass(frozen=True)
class SolverOptions:
    """Parameters of the fixed-point solve.

    ``relaxation`` blends each new iterate with the previous one,
    ``A <- (1 - w) A + w T(A)``.  ``w = 1`` is the bare iteration; the
    default ``0.5`` damps the sign-alternating error mode that otherwise
    stalls the iteration once ``t_max`` approaches the contraction horizon.
    """

    modes: int = 16
    tol: float = 1e-10
    max_iter: int = 200
    method: str = "picard-global"
    inversion_tol: float = 1e-14
    clamp_policy: str = "clamp-to-zero"
    relaxation: float = 0.5
    smoothing_window: Optional[int] = None

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("solver.tol must be > 0")
        if isinstance(self.max_iter, bool) or int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise ValueError("solver.max_iter must be an integer >= 1")
        if isinstance(self.modes, bool) or int(self.modes) != self.modes or self.modes < 1:
            raise ValueError("solver.modes must be an integer >= 1")
        if self.method not in METHODS:
            raise ValueError(f"solver.method must be one of {', '.join(METHODS)}")
        if self.clamp_policy not in CLAMP_POLICIES:
            raise ValueError(f"solver.clamp_policy must be one of {', '.join(CLAMP_POLICIES)}")
        if not 0 < self.relaxation <= 1:
            raise ValueError("solver.relaxation must lie in (0, 1]")
        if not self.inversion_tol > 0:
            raise ValueError("solver.inversion_tol must be > 0")
        if self.smoothing_window is not None and (
            int(self.smoothing_window) != self.smoothing_window or self.smoothing_window < 1
        ):
            raise ValueError("solver.smoothing_window must be a positive integer")
        object.__setattr__(self, "modes", int(self.modes))
        object.__setattr__(self, "max_iter", int(self.max_iter))


@dataclass(frozen=True)
class InverseResult:
    A: TimeSeries
    a: TimeSeries
    residual_history: tuple
    equation_residual: float
    converged: bool
    iterations_used: int
    clamped_mass: float
    method: str

    def as_dict(self) -> dict:
        return {
            "method": self.method,
            "converged": self.converged,
            "iterations_used": self.iterations_used,
            "residual_history": [float(r) for r in self.residual_history],
            "equation_residual": float(self.equation_residual),
            "clamped_mass": float(self.clamped_mass),
        }


@dataclass(frozen=True)
class ContractionReport:
    C0: float
    C: float
    C1: float
    t0_predicted: float
    ball_radius: float

    def as_dict(self) -> dict:
        return {k: float(v) for k, v in self.__dict__.items()}


@dataclass
class _Kernel:
    """Precomputed pieces of the discrete flux identity."""

    H: np.ndarray
    Fw: np.ndarray  # sqrt(2/pi) * m * F_m(t_j), shape (N, M)
    m2: np.ndarray
    weights: np.ndarray  # trapezoid weights, lower triangular (N, N)
    g: np.ndarray
    q0_max: float
    inversion_tol: float

    @classmethod
    def build(cls, data: FluxData, lifted: LiftedProblem, opts: SolverOptions):
        md = lifted.mode_data
        if md.grid != data.grid:
            raise ValueError("flux data and lifted problem live on different grids")
        H = admissible_h(md.H)
        m = np.arange(1, md.M + 1, dtype=float)
        g = lifted_flux(data, lifted, opts.smoothing_window)
        n1 = len(data.grid)
        dt = data.grid.dt
        W = np.tril(np.full((n1, n1), dt))
        W[:, 0] = 0.5 * dt
        W[np.diag_indices(n1)] = 0.5 * dt
        W[0, 0] = 0.0
        return cls(
            H=H,
            Fw=SQRT_2_OVER_PI * m * md.F,
            m2=m**2,
            weights=W,
            g=g,
            q0_max=eval_q0(H, 0.0),
            inversion_tol=opts.inversion_tol,
        )

    def integral(self, A, clamp=True):
        """``sum_j w_ij Q(A_i - A_j, t_j)`` for every node ``i``."""
        D = A[:, None] - A[None, :]
        if clamp:
            D = np.maximum(D, 0.0)
        out = np.zeros(len(A))
        for k, m2 in enumerate(self.m2):
            col = self.Fw[:, k]
            if not np.any(col):
                continue
            out += (self.weights * np.exp(-m2 * D)) @ col
        return out

    def invert(self, y, grid):
        bad = ~np.isfinite(y) | (y <= 0) | (y > self.q0_max * (1.0 + RANGE_SLACK))
        if np.any(bad):
            i = int(np.flatnonzero(bad)[0])
            raise DataInconsistent(
                f"flux value {y[i]:.6g} at node {i} (t={grid.nodes[i]:.6g}) lies outside "
                f"the range (0, {self.q0_max:.6g}] of Q0",
                node=i,
            )
        return invert_q0_many(self.H, y, self.inversion_tol)


def lifted_flux(data: FluxData, lifted: LiftedProblem, smoothing_window=None) -> np.ndarray:
    """``g - (u2 - u1)/pi``, optionally moving-average smoothed."""
    g = np.asarray(data.g, dtype=float) - lifted.r_slope
    if smoothing_window and smoothing_window > 1:
        g = uniform_filter1d(g, size=int(smoothing_window), mode="nearest")
    return g


def clamped_mass(A) -> float:
    """Total amount by which earlier values of ``A`` exceed later ones."""
    A = np.asarray(A)
    D = A[None, :] - A[:, None]  # A_j - A_i
    return float(np.sum(np.tril(np.maximum(D, 0.0), k=-1)))


def _picard(kernel: _Kernel, grid, opts: SolverOptions):
    g = kernel.g
    project = opts.clamp_policy == "monotone-projection"
    A = kernel.invert(g, grid)
    A[0] = 0.0
    if project:
        A = np.maximum.accumulate(A)
    history = []
    converged = False
    omega = opts.relaxation
    for _ in range(opts.max_iter):
        TA = kernel.invert(g - kernel.integral(A), grid)
        TA[0] = 0.0
        step = float(np.max(np.abs(TA - A)))
        history.append(step)
        A = (1.0 - omega) * A + omega * TA
        if project:
            A = np.maximum.accumulate(A)
        if step <= opts.tol:
            converged = True
            break
    return A, history, converged, len(history)


def _march(kernel: _Kernel, grid, opts: SolverOptions):
    g = kernel.g
    N = len(g)
    dt = grid.dt
    A = np.zeros(N)
    if g[0] <= 0 or g[0] > kernel.q0_max * (1.0 + RANGE_SLACK):
        kernel.invert(g[:1], grid)  # raises with the diagnostic
    most_iters = 0
    for i in range(1, N):
        w = kernel.weights[i, :i]
        Fw = kernel.Fw[:i]
        const = 0.5 * dt * float(np.sum(kernel.Fw[i])) - g[i]

        def phi(z):
            e = np.exp(-np.outer(np.maximum(z - A[:i], 0.0), kernel.m2))
            val = eval_q0(kernel.H, z) + w @ np.sum(Fw * e, axis=1) + const
            active = (z - A[:i]) > 0
            dval = eval_q0_prime(kernel.H, z) - (w * active) @ np.sum(Fw * e * kernel.m2, axis=1)
            return val, dval

        lo = A[i - 1] if phi(A[i - 1])[0] >= 0 else 0.0
        if phi(lo)[0] < 0:
            raise DataInconsistent(
                f"no admissible A at node {i} (t={grid.nodes[i]:.6g}): flux too large",
                node=i,
            )
        hi = max(2.0 * lo, lo + 1.0)
        for _ in range(200):
            if phi(hi)[0] <= 0:
                break
            lo, hi = hi, 2.0 * hi
        else:
            raise DataInconsistent(
                f"no admissible A at node {i} (t={grid.nodes[i]:.6g}): flux too small",
                node=i,
            )
        z = lo
        for it in range(1, 201):
            val, dval = phi(z)
            if val > 0:
                lo = z
            else:
                hi = z
            new = z - val / dval if dval < 0 else 0.5 * (lo + hi)
            if not lo < new < hi:
                new = 0.5 * (lo + hi)
            done = abs(new - z) <= 4 * np.finfo(float).eps * max(1.0, z) or hi - lo <= 1e-15
            z = new
            if done:
                break
        most_iters = max(most_iters, it)
        A[i] = z
    TA = kernel.invert(g - kernel.integral(A), grid)
    TA[0] = 0.0
    step = float(np.max(np.abs(TA - A)))
    return A, [step], step <= opts.tol, most_iters


def equation_residual(kernel: _Kernel, A) -> float:
    lhs = eval_q0(kernel.H, np.maximum(A, 0.0)) + kernel.integral(A)
    return float(np.max(np.abs(lhs - kernel.g)))


def fixed_point_solve(
    data: FluxData, lifted: LiftedProblem, opts: Optional[SolverOptions] = None
) -> InverseResult:
    """Recover ``A`` and ``a`` from flux data.

    Raises :class:`DataInconsistent` when some node requires inverting
    ``Q0`` outside its range.  Hitting ``max_iter`` returns the last iterate
    with ``converged=False`` and emits :class:`NotConvergedWarning`.
    """
    opts = opts or SolverOptions(modes=lifted.mode_data.M)
    kernel = _Kernel.build(data, lifted, opts)
    if opts.method == "picard-global":
        A, history, converged, iters = _picard(kernel, data.grid, opts)
    else:
        A, history, converged, iters = _march(kernel, data.grid, opts)
    if not converged:
        warnings.warn(
            f"{opts.method} stopped after {iters} iterations with residual {history[-1]:.3g} > tol={opts.tol:g}",
            NotConvergedWarning,
            stacklevel=2,
        )
    A_series = TimeSeries(data.grid, A)
    return InverseResult(
        A=A_series,
        a=differentiate(A_series),
        residual_history=tuple(history),
        equation_residual=equation_residual(kernel, A),
        converged=converged,
        iterations_used=iters,
        clamped_mass=clamped_mass(A),
        method=opts.method,
    )


def fixed_point_map(data: FluxData, lifted: LiftedProblem, A, opts: Optional[SolverOptions] = None):
    """One unrelaxed application of the fixed-point map to ``A``."""
    opts = opts or SolverOptions(modes=lifted.mode_data.M)
    kernel = _Kernel.build(data, lifted, opts)
    A = np.asarray(A, dtype=float)
    TA = kernel.invert(kernel.g - kernel.integral(A), data.grid)
    TA[0] = 0.0
    return TA


def differentiate(A: TimeSeries) -> TimeSeries:
    """Second-order differences: central inside, one-sided at the ends."""
    return TimeSeries(A.grid, np.gradient(np.asarray(A.values), A.grid.dt, edge_order=2))


def closed_form_recover(data: FluxData, t_min: float, g_prime=None) -> TimeSeries:
    """Coefficient for the single-mode experiment ``u1 = u2 = h = 0``, ``f = p_1``.

    There ``u = c(t) p_1(x)`` with ``c' + a c = 1`` and ``g = sqrt(2/pi) c``,
    so ``a = (sqrt(2/pi) - g') / g``.  ``g'`` defaults to second-order finite
    differences.  Nodes before ``t_min`` are returned as NaN.
    """
    if not t_min > 0:
        raise ValueError("t_min must be positive")
    t = data.grid.nodes
    g = np.asarray(data.g, dtype=float)
    if g_prime is None:
        dg = np.gradient(g, data.grid.dt, edge_order=2)
    else:
        dg = np.asarray(g_prime(t) if callable(g_prime) else g_prime, dtype=float)
    window = t >= t_min - 1e-12 * data.grid.t_max
    if not np.any(window):
        raise DomainError(f"t_min={t_min} is beyond the data horizon")
    if np.any(g[window] <= 0):
        i = int(np.flatnonzero(window & (g <= 0))[0])
        raise DomainError(f"flux must be positive for t >= t_min; g={g[i]:.3g} at t={t[i]:.6g}")
    a = np.full_like(g, np.nan)
    a[window] = (SQRT_2_OVER_PI - dg[window]) / g[window]
    return TimeSeries(data.grid, a)


def contraction_estimate(
    lifted: LiftedProblem, data: FluxData, opts: Optional[SolverOptions] = None
) -> ContractionReport:
    """Bounds entering the local contraction argument for the fixed-point map."""
    opts = opts or SolverOptions(modes=lifted.mode_data.M)
    md = lifted.mode_data
    m = np.arange(1, md.M + 1, dtype=float)
    absF = np.abs(md.F)
    C1 = SQRT_2_OVER_PI * float(np.max(absF @ m**3))
    C = SQRT_2_OVER_PI * float(np.max(absF @ m))
    g = lifted_flux(data, lifted, opts.smoothing_window)
    try:
        H = admissible_h(md.H)
        q0_max = eval_q0(H, 0.0)
        usable = g[(g > 0) & (g <= q0_max * (1.0 + RANGE_SLACK))]
        if usable.size == 0:
            raise OutOfRange("no flux sample in the range of Q0")
        ends = invert_q0_many(H, [usable.min(), usable.max()])
        slope = float(np.min(np.abs(eval_q0_prime(H, ends))))
        C0 = 1.0 / slope if slope > 0 else math.inf
        ball = 2.0 * float(np.max(np.abs(invert_q0_many(H, usable))))
    except (OutOfRange, DomainError, ValueError):
        C0, ball = math.inf, math.inf
    if C1 == 0.0:
        t0 = math.inf
    elif math.isinf(C0):
        t0 = 0.0
    else:
        t0 = 1.0 / (C0 * C1)
    return ContractionReport(C0=C0, C=C, C1=C1, t0_predicted=t0, ball_radius=ball)
