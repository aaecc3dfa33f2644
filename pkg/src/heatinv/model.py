"""Problem data model: grids, function specs, flux data and assumption checks.

Functions of a single variable (``t`` for boundary data and coefficients,
``x`` for initial data) are described by :class:`FunctionSpec`.  The source
``f(x, t)`` is a sum of separable terms ``space(x) * time(t)``, see
:class:`SourceTerm`.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .exceptions import CoefficientError, EvaluationError, InvalidGrid

SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)

FUNCTION_KINDS = (
    "constant",
    "polynomial",
    "exponential",
    "sinusoidal",
    "sine",
    "table",
)

# Coefficients with magnitude below this fraction of the largest one count as zero.
_ZERO_RTOL = 1e-12
CORNER_TOL = 1e-8


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t_i = i * t_max / n`` for ``i = 0..n``."""

    t_max: float
    n: int

    def __post_init__(self):
        if not (isinstance(self.t_max, (int, float)) and math.isfinite(self.t_max)) or self.t_max <= 0:
            raise InvalidGrid(f"t_max must be a positive finite number, got {self.t_max!r}")
        if isinstance(self.n, bool) or int(self.n) != self.n or self.n < 2:
            raise InvalidGrid(f"n must be an integer >= 2, got {self.n!r}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "t_max", float(self.t_max))

    @property
    def dt(self) -> float:
        return self.t_max / self.n

    @property
    def nodes(self) -> np.ndarray:
        t = np.arange(self.n + 1) * self.dt
        t[-1] = self.t_max
        return t

    def __len__(self):
        return self.n + 1


def build_time_grid(t_max: float, n: int) -> TimeGrid:
    return TimeGrid(t_max, n)


@dataclass(frozen=True)
class TimeSeries:
    """Scalar samples on a :class:`TimeGrid`."""

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (len(self.grid),):
            raise ValueError(
                f"expected {len(self.grid)} samples, got shape {values.shape}"
            )
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def t(self) -> np.ndarray:
        return self.grid.nodes


@dataclass(frozen=True)
class FunctionSpec:
    """A concrete, evaluable function of one variable.

    ``kind`` selects the family; ``params`` is a flat tuple of numbers:

    ==============  ===============================  ==========================
    kind            params                           value
    ==============  ===============================  ==========================
    constant        (c,)                             c
    polynomial      (c0, c1, ..., ck)                sum c_j s**j
    exponential     (amp, lam)                       amp * exp(-lam * s)
    sinusoidal      (a, b, omega)                    a + b * sin(omega * s)
    sine            (m1, k1, m2, k2, ...)            sum k_j sin(m_j s)
    table           (s0, y0, s1, y1, ...)            linear interpolation
    ==============  ===============================  ==========================
    """

    kind: str
    params: tuple = ()

    def __post_init__(self):
        if self.kind not in FUNCTION_KINDS:
            raise ValueError(
                f"unknown function kind {self.kind!r}; expected one of {', '.join(FUNCTION_KINDS)}"
            )
        try:
            params = tuple(float(p) for p in self.params)
        except (TypeError, ValueError) as exc:
            raise ValueError(f"{self.kind}: params must be numbers") from exc
        if not all(math.isfinite(p) for p in params):
            raise ValueError(f"{self.kind}: params must be finite")
        object.__setattr__(self, "params", params)
        _check_params(self.kind, params)

    # convenience constructors
    @classmethod
    def constant(cls, c: float) -> "FunctionSpec":
        return cls("constant", (c,))

    @classmethod
    def zero(cls) -> "FunctionSpec":
        return cls("constant", (0.0,))

    @classmethod
    def polynomial(cls, *coeffs: float) -> "FunctionSpec":
        return cls("polynomial", coeffs)

    @classmethod
    def exponential(cls, amp: float, lam: float) -> "FunctionSpec":
        return cls("exponential", (amp, lam))

    @classmethod
    def sinusoidal(cls, a: float, b: float, omega: float) -> "FunctionSpec":
        return cls("sinusoidal", (a, b, omega))

    @classmethod
    def sine(cls, modes: dict) -> "FunctionSpec":
        """``modes`` maps mode index ``m`` to amplitude ``k`` of ``sin(m s)``."""
        flat = []
        for m, k in modes.items():
            flat.extend((m, k))
        return cls("sine", tuple(flat))

    @classmethod
    def table(cls, s: Sequence[float], y: Sequence[float]) -> "FunctionSpec":
        s = np.asarray(s, dtype=float)
        y = np.asarray(y, dtype=float)
        if s.shape != y.shape or s.ndim != 1:
            raise ValueError("table abscissae and values must be 1-d and equally long")
        flat = np.column_stack([s, y]).ravel()
        return cls("table", tuple(flat))

    # structure helpers
    @property
    def sine_modes(self) -> list:
        """``[(m, k), ...]`` for a sine-combination."""
        p = self.params
        return [(int(p[i]), p[i + 1]) for i in range(0, len(p), 2)]

    @property
    def table_points(self):
        p = np.asarray(self.params).reshape(-1, 2)
        return p[:, 0], p[:, 1]

    @property
    def is_zero(self) -> bool:
        if self.kind in ("constant", "polynomial"):
            return all(p == 0.0 for p in self.params)
        if self.kind == "exponential":
            return self.params[0] == 0.0
        if self.kind == "sinusoidal":
            return self.params[0] == 0.0 and self.params[1] == 0.0
        if self.kind == "sine":
            return all(k == 0.0 for _, k in self.sine_modes)
        return bool(np.all(self.table_points[1] == 0.0))

    def __call__(self, s):
        s_arr = np.asarray(s, dtype=float)
        kind, p = self.kind, self.params
        if kind == "constant":
            out = np.full_like(s_arr, p[0])
        elif kind == "polynomial":
            out = np.polynomial.polynomial.polyval(s_arr, p) + np.zeros_like(s_arr)
        elif kind == "exponential":
            out = p[0] * np.exp(-p[1] * s_arr)
        elif kind == "sinusoidal":
            out = p[0] + p[1] * np.sin(p[2] * s_arr)
        elif kind == "sine":
            out = np.zeros_like(s_arr)
            for m, k in self.sine_modes:
                out = out + k * np.sin(m * s_arr)
        else:
            xs, ys = self.table_points
            span = 1e-12 * max(1.0, abs(xs[-1]))
            if np.any(s_arr < xs[0] - span) or np.any(s_arr > xs[-1] + span):
                raise EvaluationError(
                    f"table covers [{xs[0]}, {xs[-1]}]; asked for values outside it"
                )
            out = np.interp(s_arr, xs, ys)
        if not np.all(np.isfinite(out)):
            raise EvaluationError(f"{kind} function produced non-finite values")
        return out if out.ndim else float(out)

    def derivative(self, s):
        """First derivative; analytic except for tables (central differences)."""
        s_arr = np.asarray(s, dtype=float)
        kind, p = self.kind, self.params
        if kind == "constant":
            out = np.zeros_like(s_arr)
        elif kind == "polynomial":
            dcoef = np.polynomial.polynomial.polyder(p) if len(p) > 1 else [0.0]
            out = np.polynomial.polynomial.polyval(s_arr, dcoef) + np.zeros_like(s_arr)
        elif kind == "exponential":
            out = -p[1] * p[0] * np.exp(-p[1] * s_arr)
        elif kind == "sinusoidal":
            out = p[1] * p[2] * np.cos(p[2] * s_arr)
        elif kind == "sine":
            out = np.zeros_like(s_arr)
            for m, k in self.sine_modes:
                out = out + k * m * np.cos(m * s_arr)
        else:
            xs, ys = self.table_points
            self(s_arr)  # domain check
            slopes = np.gradient(ys, xs, edge_order=2 if len(xs) > 2 else 1)
            out = np.interp(s_arr, xs, slopes)
        return out if out.ndim else float(out)


def _check_params(kind, p):
    counts = {"constant": 1, "exponential": 2, "sinusoidal": 3}
    if kind in counts and len(p) != counts[kind]:
        raise ValueError(f"{kind} takes {counts[kind]} params, got {len(p)}")
    if kind == "polynomial" and len(p) < 1:
        raise ValueError("polynomial needs at least one coefficient")
    if kind == "sine":
        if len(p) == 0 or len(p) % 2:
            raise ValueError("sine params are (m1, k1, m2, k2, ...) pairs")
        ms = p[0::2]
        if any(m != int(m) or m < 1 for m in ms):
            raise ValueError("sine mode indices must be positive integers")
        if len(set(ms)) != len(ms):
            raise ValueError("sine mode indices must be distinct")
    if kind == "table":
        if len(p) < 4 or len(p) % 2:
            raise ValueError("table params are (s0, y0, s1, y1, ...) with at least two points")
        xs = p[0::2]
        if any(b <= a for a, b in zip(xs, xs[1:])):
            raise ValueError("table abscissae must be strictly increasing")


@dataclass(frozen=True)
class SourceTerm:
    """One separable piece ``space(x) * time(t)`` of the source ``f``."""

    space: FunctionSpec
    time: FunctionSpec = field(default_factory=lambda: FunctionSpec.constant(1.0))


@dataclass(frozen=True)
class ProblemSpec:
    """Boundary data ``u1(t)``, ``u2(t)``, initial data ``h(x)`` and source ``f(x, t)``.

    ``a_true`` is only needed to synthesize data.  Corner compatibility
    ``h(0) = u1(0)`` and ``h(pi) = u2(0)`` is enforced at construction.
    """

    u1: FunctionSpec = field(default_factory=FunctionSpec.zero)
    u2: FunctionSpec = field(default_factory=FunctionSpec.zero)
    h: FunctionSpec = field(default_factory=FunctionSpec.zero)
    f: tuple = ()
    a_true: Optional[FunctionSpec] = None
    a_floor: float = 1e-6

    def __post_init__(self):
        f = self.f
        if isinstance(f, (SourceTerm, FunctionSpec)):
            f = (f,)
        f = tuple(t if isinstance(t, SourceTerm) else SourceTerm(t) for t in f)
        object.__setattr__(self, "f", f)
        if not self.a_floor > 0:
            raise CoefficientError(f"a_floor must be positive, got {self.a_floor}")
        gap0 = abs(self.h(0.0) - self.u1(0.0))
        gap_pi = abs(self.h(math.pi) - self.u2(0.0))
        if gap0 > CORNER_TOL or gap_pi > CORNER_TOL:
            raise ValueError(
                f"incompatible corner data: |h(0)-u1(0)|={gap0:.3g}, |h(pi)-u2(0)|={gap_pi:.3g}"
            )

    def source(self, x, t):
        """Evaluate ``f(x, t)`` with broadcasting."""
        x = np.asarray(x, dtype=float)
        t = np.asarray(t, dtype=float)
        out = np.zeros(np.broadcast(x, t).shape)
        for term in self.f:
            out = out + term.space(x) * term.time(t)
        return out

    def check_coefficient(self, grid: TimeGrid) -> np.ndarray:
        """Sample ``a_true`` on the grid, raising if it dips below ``a_floor``."""
        if self.a_true is None:
            raise CoefficientError("problem has no a_true to synthesize from")
        return check_coefficient_samples(self.a_true(grid.nodes), self.a_floor)


def check_coefficient_samples(values, a_floor):
    values = np.asarray(values, dtype=float)
    if np.any(~np.isfinite(values)) or np.any(values <= 0):
        raise CoefficientError("coefficient a(t) must be positive on the whole grid")
    if np.any(values < a_floor):
        raise CoefficientError(f"coefficient a(t) drops below the floor a0={a_floor}")
    return values


@dataclass(frozen=True)
class FluxData:
    """Samples of the boundary flux ``g(t) = u_x(0, t)`` on a grid."""

    grid: TimeGrid
    g: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.g, dtype=float)
        if g.shape != (len(self.grid),):
            raise ValueError(f"expected {len(self.grid)} flux samples, got shape {g.shape}")
        if not np.all(np.isfinite(g)):
            raise ValueError("flux samples must be finite")
        g.setflags(write=False)
        object.__setattr__(self, "g", g)

    @classmethod
    def from_function(cls, fn, grid: TimeGrid) -> "FluxData":
        return cls(grid, np.asarray(fn(grid.nodes), dtype=float))

    @classmethod
    def from_samples(cls, t, g, grid: TimeGrid) -> "FluxData":
        """Linearly interpolate a measured table onto ``grid``."""
        table = FunctionSpec.table(t, g)
        return cls(grid, table(grid.nodes))


class Verdict(str, enum.Enum):
    PASS = "pass"
    WARN = "warn-nonnegative"
    FAIL = "fail"


@dataclass(frozen=True)
class AssumptionReport:
    h_coeff_positivity: Verdict
    g_positivity: Verdict
    f_coeff_nonnegativity: Verdict
    cubic_sum_bound: float
    cubic_sum_tail: float
    cubic_sum_verdict: Verdict
    compatibility_residual: float
    notes: tuple = ()

    @property
    def has_failure(self) -> bool:
        return Verdict.FAIL in (
            self.h_coeff_positivity,
            self.g_positivity,
            self.f_coeff_nonnegativity,
            self.cubic_sum_verdict,
        )

    def as_dict(self) -> dict:
        return {
            "h_coeff_positivity": self.h_coeff_positivity.value,
            "g_positivity": self.g_positivity.value,
            "f_coeff_nonnegativity": self.f_coeff_nonnegativity.value,
            "cubic_sum_bound": self.cubic_sum_bound,
            "cubic_sum_tail": self.cubic_sum_tail,
            "cubic_sum_verdict": self.cubic_sum_verdict.value,
            "compatibility_residual": self.compatibility_residual,
            "notes": list(self.notes),
        }


def sign_verdict(values, strict: bool = True) -> Verdict:
    """Classify a coefficient array by sign.

    With ``strict`` all-positive passes and nonnegative-with-some-positive
    warns; otherwise nonnegative passes.  Tiny values relative to the largest
    magnitude count as zero.
    """
    v = np.asarray(values, dtype=float).ravel()
    scale = float(np.max(np.abs(v))) if v.size else 0.0
    zero = np.abs(v) <= _ZERO_RTOL * scale
    if np.any((v < 0) & ~zero):
        return Verdict.FAIL
    if not strict:
        return Verdict.PASS
    if scale == 0.0:
        return Verdict.FAIL
    return Verdict.PASS if not np.any(zero) else Verdict.WARN


def compatibility_check(spec: ProblemSpec, data: FluxData, modes: int) -> float:
    """Mismatch between the measured ``g(0)`` and the flux implied by ``h``."""
    from .spectral import eval_q0, initial_coefficients

    H = initial_coefficients(spec, modes)
    implied = eval_q0(H, 0.0) + (spec.u2(0.0) - spec.u1(0.0)) / math.pi
    return abs(float(data.g[0]) - implied)


def validate_assumptions(
    spec: ProblemSpec,
    grid: TimeGrid,
    modes: int,
    data: Optional[FluxData] = None,
    decay_exponent: float = 5.0,
) -> AssumptionReport:
    """Check positivity of the initial and source coefficients and of the flux.

    When ``data`` is omitted the flux is synthesized from ``spec.a_true``; with
    neither available the flux verdict is ``warn`` and noted.  The cubic sum
    ``max_t sum m^3 |F_m(t)|`` is reported for the truncated series together
    with a tail estimate assuming ``|F_m| <= c / m**decay_exponent``.
    """
    from .spectral import lift

    if modes < 1:
        raise ValueError("modes must be >= 1")
    notes = []
    lifted = lift(spec, grid, modes)
    md = lifted.mode_data
    h_verdict = sign_verdict(md.H, strict=True)
    f_verdict = sign_verdict(md.F, strict=False)

    m = np.arange(1, modes + 1)
    cubic = np.abs(md.F) @ (m.astype(float) ** 3)
    cubic_max = float(np.max(cubic))
    tail = _cubic_tail(md.F, modes, decay_exponent)
    if not math.isfinite(cubic_max):
        cubic_verdict = Verdict.FAIL
    elif tail > max(cubic_max, 1e-14):
        cubic_verdict = Verdict.WARN
        notes.append("cubic-sum tail estimate exceeds truncated sum; increase modes")
    else:
        cubic_verdict = Verdict.PASS

    if data is None and spec.a_true is not None:
        from .forward import synthesize_from_spec

        data = synthesize_from_spec(spec, grid, modes)
    if data is None:
        g_verdict = Verdict.WARN
        compat = float("nan")
        notes.append("no flux data or a_true available; flux positivity not checked")
    else:
        g_lifted = np.asarray(data.g) - lifted.r_slope
        g_verdict = sign_verdict(g_lifted, strict=True)
        compat = compatibility_check(spec, data, modes)

    return AssumptionReport(
        h_coeff_positivity=h_verdict,
        g_positivity=g_verdict,
        f_coeff_nonnegativity=f_verdict,
        cubic_sum_bound=cubic_max,
        cubic_sum_tail=tail,
        cubic_sum_verdict=cubic_verdict,
        compatibility_residual=compat,
        notes=tuple(notes),
    )


def _cubic_tail(F, modes, p):
    if p <= 4:
        return math.inf
    c = float(np.max(np.abs(F[:, -1]))) * modes**p
    # sum_{m>M} c m^(3-p) <= c * M^(4-p) / (p-4)
    return c * modes ** (4.0 - p) / (p - 4.0)
