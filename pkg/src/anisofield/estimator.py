"""Scikit-learn style estimator wrapping the MAP fit.

Exposes the anisotropy estimation as a standard ``fit`` interface so it
composes with sklearn tooling (``get_params``/``set_params``, ``clone``,
pipelines that pass fields through as arrays).
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .assembly import assemble_precision
from .coefficients import (
    ConstantFieldLayout,
    FourierFieldLayout,
    ScaledFieldLayout,
)
from .gmrf import PrecisionFactor
from .grid import Grid
from .inference import LogPosterior, ObservationModel, map_estimate

__all__ = ["AnisotropyEstimator"]


class AnisotropyEstimator(BaseEstimator):
    """MAP estimation of a locally anisotropic Gaussian field model.

    Parameters
    ----------
    width, height : float
        Domain extents.
    cells_x, cells_y : int
        Grid resolution; the training field must match it.
    kappa_sq : float
        The (fixed) reaction coefficient of the model.
    layout : {"constant", "fourier", "fixed_field"}
        Parametrization of the diffusion tensor field.
    frequencies : sequence of (k, l) pairs, optional
        Non-constant frequencies of the "fourier" layout.
    base_field : vector field, optional
        Base field of the "fixed_field" layout.
    noise_precision : float, optional
        Observation noise precision; ``None`` means the field is observed
        exactly.
    start : array-like, optional
        Starting parameter vector; defaults to gamma 1 with every field
        coefficient at 0.1 (an exact zero field is a stationary point of
        the sign-symmetric posterior, so it would never move).
    max_evaluations : int
        Budget of posterior evaluations for the optimizer.

    Attributes (after ``fit``)
    --------------------------
    theta_, std_devs_, converged_, log_posterior_, result_, grid_,
    layout_, anisotropy_ : the fitted parameter vector, its standard
    errors (or None), convergence flag, posterior value, full
    :class:`~anisofield.inference.FitResult`, and the fitted model pieces.
    """

    def __init__(self, width=20.0, height=20.0, cells_x=100, cells_y=100,
                 kappa_sq=1.0, layout="constant", frequencies=None,
                 base_field=None, noise_precision=None, start=None,
                 max_evaluations=5000):
        self.width = width
        self.height = height
        self.cells_x = cells_x
        self.cells_y = cells_y
        self.kappa_sq = kappa_sq
        self.layout = layout
        self.frequencies = frequencies
        self.base_field = base_field
        self.noise_precision = noise_precision
        self.start = start
        self.max_evaluations = max_evaluations

    # -- helpers -------------------------------------------------------------

    def _make_grid(self) -> Grid:
        return Grid(self.width, self.height, self.cells_x, self.cells_y)

    def _make_layout(self):
        if self.layout == "constant":
            return ConstantFieldLayout()
        if self.layout == "fourier":
            freqs = tuple(tuple(f) for f in (self.frequencies or ()))
            return FourierFieldLayout(self.width, self.height, freqs)
        if self.layout == "fixed_field":
            if self.base_field is None:
                raise ValueError("fixed_field layout requires base_field")
            return ScaledFieldLayout(self.base_field)
        raise ValueError(f"unknown layout '{self.layout}'")

    def _validate_field(self, X, grid: Grid) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 2 and X.shape == grid.shape:
            X = X.ravel()
        if X.ndim != 1 or X.size != grid.n_cells:
            raise ValueError(
                f"expected a field of shape {grid.shape} or ({grid.n_cells},), got {X.shape}"
            )
        if not np.all(np.isfinite(X)):
            raise ValueError("field contains non-finite values")
        return X

    def _observation(self, X, grid: Grid) -> ObservationModel:
        y = self._validate_field(X, grid)
        if self.noise_precision is None:
            return ObservationModel.exact_field(y)
        return ObservationModel.noisy(y, float(self.noise_precision))

    def _default_start(self, layout) -> np.ndarray:
        theta = np.full(layout.n_params, 0.1)
        theta[0] = 1.0
        return theta

    def _check_fitted(self):
        if not hasattr(self, "theta_"):
            raise NotFittedError("this AnisotropyEstimator is not fitted yet")

    # -- sklearn surface -------------------------------------------------------

    def fit(self, X, y=None):
        """Fit the anisotropy parameters to one observed field.

        ``X`` is the observed field, shaped ``(cells_y, cells_x)`` or flat;
        ``y`` is ignored (sklearn signature compatibility).
        """
        grid = self._make_grid()
        layout = self._make_layout()
        obs = self._observation(X, grid)
        theta0 = self._default_start(layout) if self.start is None else np.asarray(self.start, float)
        result = map_estimate(
            grid, float(self.kappa_sq), layout, obs, theta0,
            max_evaluations=int(self.max_evaluations),
        )
        self.grid_ = grid
        self.layout_ = layout
        self.result_ = result
        self.theta_ = result.theta
        self.std_devs_ = result.std_devs
        self.converged_ = result.converged
        self.log_posterior_ = result.log_posterior
        self.n_evaluations_ = result.n_evaluations
        self.anisotropy_ = layout.unpack(result.theta)
        return self

    def score(self, X, y=None) -> float:
        """Log-posterior of the fitted parameters for the given field."""
        self._check_fitted()
        obs = self._observation(X, self.grid_)
        lp = LogPosterior(self.grid_, float(self.kappa_sq), self.layout_, obs)
        return lp(self.theta_)

    def sample(self, n_samples: int = 1, seed: int | None = 0) -> np.ndarray:
        """Draw fields from the fitted model, shape ``(n_samples, n_cells)``."""
        self._check_fitted()
        model = assemble_precision(self.grid_, float(self.kappa_sq), self.anisotropy_)
        return PrecisionFactor(model.Q).sample(seed, size=n_samples)

    def marginal_variances(self) -> np.ndarray:
        """Exact per-cell variances of the fitted model."""
        self._check_fitted()
        model = assemble_precision(self.grid_, float(self.kappa_sq), self.anisotropy_)
        return PrecisionFactor(model.Q).marginal_variances()
