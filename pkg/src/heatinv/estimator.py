"""scikit-learn style wrapper around the fixed-point recovery."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_consistent_length, check_is_fitted

from .inverse import SolverOptions, contraction_estimate, fixed_point_solve
from .model import FluxData, ProblemSpec, TimeGrid
from .spectral import lift


class DiffusivityRecovery(BaseEstimator):
    """Estimate ``a(t)`` from flux samples ``g(t) = u_x(0, t)``.

    ``fit(t, g)`` takes sample times and measured flux.  Times must start at
    0; non-uniform samples are linearly resampled onto a uniform grid with
    the same number of nodes.  ``predict(t)`` interpolates the recovered
    coefficient.

    Parameters
    ----------
    problem : ProblemSpec
        Boundary data, initial data and source of the experiment.
    modes, tol, max_iter, method, relaxation, clamp_policy, inversion_tol,
    smoothing_window
        Forwarded to :class:`heatinv.inverse.SolverOptions`.

    Attributes
    ----------
    grid_ : TimeGrid
    A_ : ndarray
        Recovered ``int_0^t a``.
    a_ : ndarray
        Recovered coefficient on ``grid_``.
    result_ : InverseResult
    contraction_ : ContractionReport
    n_iter_ : int
    """

    def __init__(
        self,
        problem=None,
        modes=16,
        tol=1e-10,
        max_iter=200,
        method="picard-global",
        relaxation=0.5,
        clamp_policy="clamp-to-zero",
        inversion_tol=1e-14,
        smoothing_window=None,
    ):
        self.problem = problem
        self.modes = modes
        self.tol = tol
        self.max_iter = max_iter
        self.method = method
        self.relaxation = relaxation
        self.clamp_policy = clamp_policy
        self.inversion_tol = inversion_tol
        self.smoothing_window = smoothing_window

    def _options(self):
        return SolverOptions(
            modes=self.modes,
            tol=self.tol,
            max_iter=self.max_iter,
            method=self.method,
            inversion_tol=self.inversion_tol,
            clamp_policy=self.clamp_policy,
            relaxation=self.relaxation,
            smoothing_window=self.smoothing_window,
        )

    def fit(self, X, y):
        if not isinstance(self.problem, ProblemSpec):
            raise ValueError("problem must be a ProblemSpec")
        t = _times(X)
        g = check_array(y, ensure_2d=False, dtype=float).ravel()
        check_consistent_length(t, g)
        if t.size < 3:
            raise ValueError("need at least three flux samples")
        if abs(t[0]) > 1e-12 * max(1.0, abs(t[-1])):
            raise ValueError("sample times must start at t=0")
        if np.any(np.diff(t) <= 0):
            raise ValueError("sample times must be strictly increasing")
        grid = TimeGrid(float(t[-1]), t.size - 1)
        if np.allclose(t, grid.nodes, rtol=0, atol=1e-9 * grid.dt):
            data = FluxData(grid, g)
        else:
            data = FluxData.from_samples(t, g, grid)
        opts = self._options()
        lifted = lift(self.problem, grid, opts.modes)
        self.result_ = fixed_point_solve(data, lifted, opts)
        self.contraction_ = contraction_estimate(lifted, data, opts)
        self.grid_ = grid
        self.A_ = np.asarray(self.result_.A.values)
        self.a_ = np.asarray(self.result_.a.values)
        self.n_iter_ = self.result_.iterations_used
        self.converged_ = self.result_.converged
        return self

    def predict(self, X):
        """Recovered ``a`` at the given times (linear interpolation)."""
        check_is_fitted(self, "a_")
        return np.interp(_times(X), self.grid_.nodes, self.a_)

    def transform(self, X):
        """Recovered ``A = int_0^t a`` at the given times."""
        check_is_fitted(self, "A_")
        return np.interp(_times(X), self.grid_.nodes, self.A_)


def _times(X):
    arr = check_array(X, ensure_2d=False, dtype=float)
    if arr.ndim == 2:
        if arr.shape[1] != 1:
            raise ValueError("X must hold a single column of times")
        arr = arr[:, 0]
    return arr
