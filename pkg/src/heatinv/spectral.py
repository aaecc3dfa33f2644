"""Sine-basis machinery on ``[0, pi]``.

The orthonormal basis is ``p_m(x) = sqrt(2/pi) sin(m x)``.  The flux kernels
carry the factor ``sqrt(2/pi)`` that comes from ``p_m'(0)``::

    Q0(z)    = sqrt(2/pi) * sum_m m H_m    exp(-m^2 z)
    Q(z, s)  = sqrt(2/pi) * sum_m m F_m(s) exp(-m^2 z)

so that ``Q0(A(t)) + int_0^t Q(A(t) - A(s), s) ds`` is exactly the flux of
the homogeneous part ``v = u - r`` at ``x = 0``.  ``Q0`` is strictly
*decreasing* for nonnegative, not identically zero ``H``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import simpson

from .exceptions import DegenerateKernel, DomainError, EvaluationError, OutOfRange
from .model import SQRT_2_OVER_PI, FunctionSpec, ProblemSpec, TimeGrid

log = logging.getLogger(__name__)

SQRT_PI_OVER_2 = math.sqrt(math.pi / 2.0)
TAIL_WARN = 1e-8
# g(0) may exceed Q0(0) by this relative amount from rounding alone.
RANGE_SLACK = 1e-12


@dataclass(frozen=True)
class ModeData:
    """Truncated coefficients: ``H`` has shape ``(M,)``, ``F`` has shape ``(n+1, M)``."""

    M: int
    H: np.ndarray
    F: np.ndarray
    grid: TimeGrid

    def __post_init__(self):
        H = np.asarray(self.H, dtype=float)
        F = np.asarray(self.F, dtype=float)
        if H.shape != (self.M,) or F.shape != (len(self.grid), self.M):
            raise ValueError(
                f"shape mismatch: M={self.M}, H{H.shape}, F{F.shape}, {len(self.grid)} nodes"
            )
        if not (np.all(np.isfinite(H)) and np.all(np.isfinite(F))):
            raise EvaluationError("mode coefficients must be finite")
        H.setflags(write=False)
        F.setflags(write=False)
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "F", F)

    @property
    def tail_indicator(self) -> float:
        return self.M * abs(self.H[-1]) + self.M * float(np.max(np.abs(self.F[:, -1])))


@dataclass(frozen=True)
class LiftedProblem:
    """Homogenized problem ``v = u - r`` with ``r = u1 + (x/pi)(u2 - u1)``."""

    mode_data: ModeData
    r_slope: np.ndarray
    u1: FunctionSpec
    u2: FunctionSpec

    @property
    def grid(self) -> TimeGrid:
        return self.mode_data.grid

    def r_at(self, x, t):
        x = np.asarray(x, dtype=float)
        u1 = self.u1(t)
        return u1 + (x / math.pi) * (self.u2(t) - u1)


def _poly_sine_integrals(degree: int, M: int) -> np.ndarray:
    """``I[k, m-1] = int_0^pi x^k sin(m x) dx`` for ``k <= degree``, exactly."""
    m = np.arange(1, M + 1, dtype=float)
    sign = (-1.0) ** m
    I = np.zeros((degree + 1, M))
    J = np.zeros((degree + 1, M))
    I[0] = (1.0 - sign) / m
    for k in range(1, degree + 1):
        I[k] = -(math.pi**k) * sign / m + (k / m) * J[k - 1]
        J[k] = -(k / m) * I[k - 1]
    return I


def sine_coefficients(fn: FunctionSpec, M: int) -> np.ndarray:
    """Inner products ``(fn, p_m)`` for ``m = 1..M``.

    Sine combinations and polynomials are integrated exactly; anything else
    uses composite Simpson with ``64 * M`` panels over
    ``[0, pi]`` (split at the knots of a table).
    """
    if M < 1:
        raise ValueError("M must be >= 1")
    if fn.kind == "sine":
        out = np.zeros(M)
        for m, k in fn.sine_modes:
            if m <= M:
                out[m - 1] += k * SQRT_PI_OVER_2
        return out
    if fn.kind in ("constant", "polynomial"):
        coeffs = np.asarray(fn.params)
        return SQRT_2_OVER_PI * (coeffs @ _poly_sine_integrals(len(coeffs) - 1, M))
    # Simpson on each smooth piece: the whole interval, or between table knots
    knots = [0.0, math.pi]
    if fn.kind == "table":
        xs, _ = fn.table_points
        knots = sorted({0.0, math.pi, *(float(k) for k in xs if 0.0 < k < math.pi)})
    m = np.arange(1, M + 1)
    total = np.zeros(M)
    for left, right in zip(knots, knots[1:]):
        panels = 2 * math.ceil(32 * M * (right - left) / math.pi)
        x = np.linspace(left, right, panels + 1)
        try:
            values = np.asarray(fn(x), dtype=float)
        except EvaluationError:
            raise
        except Exception as exc:  # noqa: BLE001 - anything the evaluator throws
            raise EvaluationError(f"cannot evaluate {fn.kind} on [0, pi]: {exc}") from exc
        basis = SQRT_2_OVER_PI * np.sin(np.outer(m, x))
        total += simpson(basis * values, x=x, axis=1)
    return total


def _linear_coefficients(M: int):
    """Coefficients of the functions ``1`` and ``x``."""
    I = _poly_sine_integrals(1, M)
    return SQRT_2_OVER_PI * I[0], SQRT_2_OVER_PI * I[1]


def initial_coefficients(spec: ProblemSpec, M: int) -> np.ndarray:
    """``H_m`` of ``h(x) - r(x, 0)``."""
    one, x = _linear_coefficients(M)
    u1 = spec.u1(0.0)
    u2 = spec.u2(0.0)
    return sine_coefficients(spec.h, M) - u1 * one - (u2 - u1) / math.pi * x


def lift(spec: ProblemSpec, grid: TimeGrid, M: int) -> LiftedProblem:
    """Subtract the affine lift and expand initial data and forcing in sines."""
    t = grid.nodes
    H = initial_coefficients(spec, M)
    F = np.zeros((len(t), M))
    for term in spec.f:
        F += np.outer(term.time(t), sine_coefficients(term.space, M))
    one, x = _linear_coefficients(M)
    du1 = np.asarray(spec.u1.derivative(t), dtype=float)
    du2 = np.asarray(spec.u2.derivative(t), dtype=float)
    F -= np.outer(du1, one) + np.outer((du2 - du1) / math.pi, x)
    mode_data = ModeData(M, H, F, grid)
    if mode_data.tail_indicator > TAIL_WARN:
        log.warning(
            "truncation tail indicator %.3g exceeds %.0e at M=%d",
            mode_data.tail_indicator,
            TAIL_WARN,
            M,
        )
    r_slope = (np.asarray(spec.u2(t)) - np.asarray(spec.u1(t))) / math.pi
    return LiftedProblem(mode_data, np.broadcast_to(r_slope, t.shape).copy(), spec.u1, spec.u2)


def _kernel(coeffs, z, power):
    coeffs = np.asarray(coeffs, dtype=float)
    z_arr = np.asarray(z, dtype=float)
    if np.any(z_arr < 0):
        raise DomainError("kernel argument z must be nonnegative")
    m = np.arange(1, coeffs.shape[-1] + 1, dtype=float)
    weights = SQRT_2_OVER_PI * m**power * coeffs
    out = np.exp(-np.multiply.outer(z_arr, m**2)) @ weights
    return out if out.ndim else float(out)


def eval_q0(H, z):
    """``Q0(z)``; vectorized over ``z``."""
    return _kernel(H, z, 1)


def eval_q0_prime(H, z):
    """``dQ0/dz``, summed term by term."""
    d = _kernel(H, z, 3)
    return -d


def eval_q(F_at_s, z):
    """``Q(z, s)`` for one time ``s`` whose coefficients are ``F_at_s``."""
    return _kernel(F_at_s, z, 1)


def eval_q_dz(F_at_s, z):
    return -_kernel(F_at_s, z, 3)


def admissible_h(H) -> np.ndarray:
    """Return ``H`` with rounding-level negatives zeroed, or raise."""
    H = np.asarray(H, dtype=float)
    scale = float(np.max(np.abs(H))) if H.size else 0.0
    if scale == 0.0:
        raise DegenerateKernel("all initial coefficients vanish; Q0 is identically zero")
    tiny = np.abs(H) <= 1e-12 * scale
    if np.any((H < 0) & ~tiny):
        raise DomainError("Q0 inversion needs nonnegative initial coefficients")
    return np.where(tiny, 0.0, H)


def invert_q0_many(H, y, tol: float = 1e-14) -> np.ndarray:
    """Vectorized inverse of ``Q0``: bracket by doubling, then safeguarded Newton."""
    H = admissible_h(H)
    y = np.atleast_1d(np.asarray(y, dtype=float))
    q0_at_0 = eval_q0(H, 0.0)
    bad = ~np.isfinite(y) | (y <= 0) | (y > q0_at_0 * (1.0 + RANGE_SLACK))
    if np.any(bad):
        idx = int(np.flatnonzero(bad)[0])
        raise OutOfRange(
            f"value {y[idx]!r} at index {idx} is outside the range (0, {q0_at_0!r}] of Q0",
        )
    z = np.zeros_like(y)
    todo = y < q0_at_0
    if not np.any(todo):
        return z
    yt = y[todo]
    lo = np.zeros_like(yt)
    hi = np.ones_like(yt)
    for _ in range(200):
        above = eval_q0(H, hi) > yt
        if not np.any(above):
            break
        lo = np.where(above, hi, lo)
        hi = np.where(above, 2.0 * hi, hi)
    else:
        raise OutOfRange("could not bracket Q0 inverse")

    zt = 0.5 * (lo + hi)
    active = np.ones(zt.shape, dtype=bool)
    eps = np.finfo(float).eps
    for _ in range(200):
        q = eval_q0(H, zt) - yt
        dq = eval_q0_prime(H, zt)
        lo = np.where(q > 0, zt, lo)
        hi = np.where(q <= 0, zt, hi)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = -q / dq
        scale = np.maximum(1.0, zt)
        done = (q == 0) | (np.abs(step) <= 4 * eps * scale)
        done |= (np.abs(q) <= tol * yt) & (np.abs(step) <= 1e-13 * scale)
        done |= hi - lo <= 4 * eps * scale
        target = zt + step
        inside = np.isfinite(target) & (target >= lo) & (target <= hi)
        moved = np.where(inside, target, 0.5 * (lo + hi))
        zt = np.where(active & ~done, moved, zt)
        active &= ~done
        if not np.any(active):
            break
    z[todo] = zt
    return z


def invert_q0(H, y: float, tol: float = 1e-14) -> float:
    """Solve ``Q0(z) = y`` for ``z >= 0``.

    Raises :class:`OutOfRange` when ``y <= 0`` or ``y > Q0(0)``, and
    :class:`DegenerateKernel` when every ``H_m`` is zero.
    """
    return float(invert_q0_many(H, [y], tol)[0])
