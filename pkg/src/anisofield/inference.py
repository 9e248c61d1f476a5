"""Hierarchical model, log-posterior, MAP estimation and simulation studies.

The latent field ``u | theta ~ N(0, Q(theta)^{-1})`` is observed either
exactly or through ``y | u ~ N(A u, Q_N^{-1})`` with known noise precision.
Integrating the field out analytically gives the log-posterior (up to an
additive constant that is dropped throughout)

    log pi(theta | y) = log pi(theta) + 1/2 log|Q| - 1/2 log|Q_C|
                        + 1/2 mu_C^T Q_C mu_C,

with ``Q_C = Q + A^T Q_N A`` and ``mu_C = Q_C^{-1} A^T Q_N y``; with exact
observation it degenerates to ``log pi(theta) + 1/2 log|Q| - 1/2 u^T Q u``.
The prior is improper uniform: flat on ``(0, inf)`` for gamma (and on
``[0, inf)`` for the strength of a fixed field) and flat on the real line
for every other coefficient, so the MAP is the maximum of the integrated
likelihood over the feasible set. Optimization is quasi-Newton (BFGS) with
central finite-difference gradients; infeasible parameters evaluate to
``-inf`` so line searches retreat from the boundary instead of clamping.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from joblib import Parallel, delayed

from .assembly import StencilAssembler
from .coefficients import Anisotropy, ParameterLayout, ScaledFieldLayout
from .gmrf import NotPositiveDefiniteError, PrecisionFactor
from .grid import Grid

__all__ = [
    "ObservationModel",
    "LogPosterior",
    "log_posterior",
    "FitResult",
    "map_estimate",
    "observed_information",
    "StudyResult",
    "simulation_study",
    "h_discrepancy",
    "multistart_map",
]


@dataclass(frozen=True)
class ObservationModel:
    """How the data vector was generated from the latent field.

    ``noise_precision`` is ``None`` for exact observation of the field
    itself, otherwise a positive scalar (iid noise) or a positive vector
    (independent heteroscedastic noise, the diagonal of ``Q_N``).
    ``operator`` is ``None`` for the identity or a sparse matrix mapping
    the field to observation space.
    """

    y: np.ndarray
    noise_precision: object = None
    operator: object = None

    def __post_init__(self):
        object.__setattr__(self, "y", np.asarray(self.y, dtype=float).ravel())
        if self.noise_precision is None:
            if self.operator is not None:
                raise ValueError("exact observation requires the identity operator")
        else:
            prec = self.noise_precision
            prec = float(prec) if np.ndim(prec) == 0 else np.asarray(prec, dtype=float)
            if np.any(np.asarray(prec) <= 0):
                raise ValueError("noise precisions must be strictly positive")
            if np.ndim(prec) == 1 and prec.shape != self.y.shape:
                raise ValueError("noise precision vector must match the data length")
            object.__setattr__(self, "noise_precision", prec)
        if self.operator is not None and self.operator.shape[0] != self.y.size:
            raise ValueError("operator rows must match the data length")

    @property
    def exact(self) -> bool:
        return self.noise_precision is None

    @classmethod
    def exact_field(cls, u) -> "ObservationModel":
        return cls(y=u)

    @classmethod
    def noisy(cls, y, precision, operator=None) -> "ObservationModel":
        return cls(y=y, noise_precision=precision, operator=operator)


def _feasible(layout: ParameterLayout, theta: np.ndarray) -> bool:
    if not theta[0] > 0:
        return False
    if isinstance(layout, ScaledFieldLayout) and theta[1] < 0:
        return False
    return True


class LogPosterior:
    """Evaluates the integrated log-posterior for one data set.

    A callable of ``theta`` that counts its evaluations. Two evaluation
    routes exist: the general route assembles the sparse precision and
    factorizes it; when the layout guarantees a constant tensor and the
    observation is exact or identity with scalar precision, the periodic
    operator is block circulant and its spectrum comes from a 2-D FFT of
    the stencil, which is exact and much faster. ``method`` is ``"auto"``
    (pick once per layout, so finite differences never mix routes),
    ``"factor"`` or ``"circulant"`` (force one route; forcing circulant on
    a layout that can vary in space raises).
    """

    def __init__(self, grid: Grid, kappa_sq: float, layout: ParameterLayout,
                 observation: ObservationModel, method: str = "auto"):
        if not kappa_sq > 0:
            raise ValueError("kappa_sq must be strictly positive")
        if method not in ("auto", "factor", "circulant"):
            raise ValueError(f"unknown method '{method}'")
        n = grid.n_cells
        obs = observation
        if obs.operator is None and obs.y.size != n:
            raise ValueError(f"data length {obs.y.size} does not match the grid ({n} cells)")
        if obs.operator is not None and obs.operator.shape[1] != n:
            raise ValueError("operator columns must match the grid")
        self.grid = grid
        self.kappa_sq = float(kappa_sq)
        self.layout = layout
        self.observation = obs
        self.n_evaluations = 0
        scalar_noise = obs.exact or np.ndim(obs.noise_precision) == 0
        circulant_ok = obs.operator is None and scalar_noise
        if method == "auto":
            method = "circulant" if (layout.always_constant and circulant_ok) else "factor"
        elif method == "circulant" and not (layout.always_constant and circulant_ok):
            raise ValueError(
                "circulant evaluation requires a constant-tensor layout and identity observation"
            )
        self.method = method

    @cached_property
    def _assembler(self) -> StencilAssembler:
        return StencilAssembler(self.grid)

    @cached_property
    def _obs_quadratic(self):
        # A^T Q_N A (diagonal of), A^T Q_N y for the factor route
        obs = self.observation
        n = self.grid.n_cells
        if obs.exact:
            return None
        if obs.operator is None:
            qn = obs.noise_precision
            diag = np.full(n, qn) if np.ndim(qn) == 0 else qn
            return sp.diags(diag).tocsc(), diag * obs.y
        A = obs.operator.tocsr()
        qn = obs.noise_precision
        qn_vec = np.full(obs.y.size, qn) if np.ndim(qn) == 0 else qn
        AtQn = A.T.multiply(qn_vec)
        return (AtQn @ A).tocsc(), AtQn @ obs.y

    @cached_property
    def _spectral_grids(self):
        M, N = self.grid.cells_x, self.grid.cells_y
        a = 2.0 * np.pi * np.arange(M) / M
        b = 2.0 * np.pi * np.arange(N) / N
        A, B = np.meshgrid(a, b)
        return np.cos(A), np.cos(B), np.cos(A + B), np.cos(A - B)

    @cached_property
    def _data_power(self):
        # |fft2(y)|^2 / (M N), the Parseval weights of the data
        U = self.observation.y.reshape(self.grid.shape)
        return np.abs(np.fft.fft2(U)) ** 2 / self.grid.n_cells

    def _circulant_symbol(self, aniso: Anisotropy) -> np.ndarray:
        """Eigenvalues of Q on the 2-D Fourier modes (constant tensor only)."""
        g = self.grid
        h11, h12, h22 = (float(np.asarray(c).ravel()[0]) for c in aniso.tensor(0.0, 0.0))
        ax = g.step_y / g.step_x
        ay = g.step_x / g.step_y
        cos_a, cos_b, cos_ab, cos_amb = self._spectral_grids
        lam_stencil = (
            -2.0 * ax * h11 * (1.0 - cos_a)
            - 2.0 * ay * h22 * (1.0 - cos_b)
            + h12 * (cos_ab - cos_amb)
        )
        V = g.cell_area
        lam_A = V * self.kappa_sq - lam_stencil
        return lam_A * lam_A / V

    def __call__(self, theta) -> float:
        theta = np.asarray(theta, dtype=float)
        self.n_evaluations += 1
        if not _feasible(self.layout, theta):
            return -np.inf
        aniso = self.layout.unpack(theta)
        try:
            if self.method == "circulant":
                return self._eval_circulant(aniso)
            return self._eval_factor(aniso)
        except NotPositiveDefiniteError:
            # numerically indefinite precisions mark the point infeasible
            return -np.inf

    def _eval_factor(self, aniso: Anisotropy) -> float:
        obs = self.observation
        Q = self._assembler.precision_matrix(self.kappa_sq, aniso)
        factor = PrecisionFactor(Q)
        if obs.exact:
            quad = float(obs.y @ (Q @ obs.y))
            return 0.5 * factor.log_det - 0.5 * quad
        AtQnA, b = self._obs_quadratic
        factor_c = PrecisionFactor((Q + AtQnA).tocsc())
        mu = factor_c.solve(b)
        return 0.5 * factor.log_det - 0.5 * factor_c.log_det + 0.5 * float(mu @ b)

    def _eval_circulant(self, aniso: Anisotropy) -> float:
        obs = self.observation
        lam_q = self._circulant_symbol(aniso)
        power = self._data_power
        if obs.exact:
            return 0.5 * float(np.log(lam_q).sum()) - 0.5 * float((lam_q * power).sum())
        tau = float(obs.noise_precision)
        lam_c = lam_q + tau
        quad = tau * tau * float((power / lam_c).sum())
        return 0.5 * float(np.log(lam_q).sum()) - 0.5 * float(np.log(lam_c).sum()) + 0.5 * quad


def log_posterior(theta, grid: Grid, kappa_sq: float, layout: ParameterLayout,
                  observation: ObservationModel, method: str = "auto") -> float:
    """One-shot log-posterior evaluation (see :class:`LogPosterior`)."""
    return LogPosterior(grid, kappa_sq, layout, observation, method=method)(theta)


# ---------------------------------------------------------------------------
# derivatives and optimization
# ---------------------------------------------------------------------------


def _fd_step(x: np.ndarray, rel: float) -> np.ndarray:
    return rel * np.maximum(np.abs(x), 1e-2)


def _fd_gradient(fun, x: np.ndarray, f0: float, rel_step: float) -> np.ndarray:
    """Central-difference gradient, one-sided next to the feasible boundary."""
    g = np.empty_like(x)
    h = _fd_step(x, rel_step)
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = h[k]
        fp = fun(x + e)
        fm = fun(x - e)
        if np.isfinite(fp) and np.isfinite(fm):
            g[k] = (fp - fm) / (2.0 * h[k])
        elif np.isfinite(fp):
            g[k] = (fp - f0) / h[k]
        elif np.isfinite(fm):
            g[k] = (f0 - fm) / h[k]
        else:
            raise RuntimeError(f"both finite-difference probes infeasible at coordinate {k}")
    return g


@dataclass
class FitResult:
    """Outcome of a MAP optimization."""

    theta: np.ndarray
    log_posterior: float
    converged: bool
    n_iterations: int
    n_evaluations: int
    message: str
    std_devs: np.ndarray | None = None
    information: np.ndarray | None = None
    information_spd: bool = False
    start: np.ndarray | None = None

    def to_dict(self) -> dict:
        return {
            "theta": [float(v) for v in self.theta],
            "std_devs": None if self.std_devs is None else [float(v) for v in self.std_devs],
            "log_post": float(self.log_posterior),
            "converged": bool(self.converged),
            "evals": int(self.n_evaluations),
            "iterations": int(self.n_iterations),
            "information_spd": bool(self.information_spd),
            "message": self.message,
        }


def _minimize_bfgs(fun, x0, *, rel_grad_tol, step_tol, fd_rel_step, eval_counter, max_evaluations):
    """BFGS with Armijo backtracking; ``fun`` returns +inf when infeasible."""
    x = np.asarray(x0, dtype=float).copy()
    f = fun(x)
    if not np.isfinite(f):
        raise ValueError("starting point is infeasible")
    g = _fd_gradient(fun, x, f, fd_rel_step)
    n = x.size
    Hinv = np.eye(n)
    iterations = 0
    scaled = False
    converged = False
    message = "running"
    while True:
        if np.max(np.abs(g)) <= rel_grad_tol * max(1.0, abs(f)):
            converged = True
            message = "gradient criterion met"
            break
        if eval_counter() >= max_evaluations:
            message = "evaluation budget exhausted"
            break
        p = -(Hinv @ g)
        slope = float(g @ p)
        if slope >= 0:
            Hinv = np.eye(n)
            p = -g
            slope = float(g @ p)
        alpha = 1.0
        ok = False
        for _ in range(60):
            xn = x + alpha * p
            fn = fun(xn)
            if np.isfinite(fn) and fn <= f + 1e-4 * alpha * slope:
                ok = True
                break
            alpha *= 0.5
        if not ok:
            message = "line search could not make progress"
            break
        s = xn - x
        iterations += 1
        if np.max(np.abs(s)) <= step_tol:
            x, f = xn, fn
            converged = True
            message = "parameter step below tolerance"
            break
        gn = _fd_gradient(fun, xn, fn, fd_rel_step)
        yv = gn - g
        sy = float(s @ yv)
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(yv):
            if not scaled:
                Hinv = (sy / float(yv @ yv)) * np.eye(n)
                scaled = True
            rho = 1.0 / sy
            I = np.eye(n)
            V = I - rho * np.outer(s, yv)
            Hinv = V @ Hinv @ V.T + rho * np.outer(s, s)
        x, f, g = xn, fn, gn
    return x, f, iterations, converged, message


def observed_information(lp, theta, rel_step: float = 1e-3):
    """Observed information and standard errors at a mode.

    ``lp`` is the log-posterior callable and ``theta`` the MAP point. The
    information is the negated central finite-difference Hessian (step
    ``rel_step * max(|theta_k|, 1e-2)`` per coordinate, symmetrized);
    standard errors are the square roots of the diagonal of its inverse.
    At a saddle or boundary the information is not positive definite and
    the standard errors are reported as ``None`` with ``spd=False``.
    """
    theta = np.asarray(theta, dtype=float)
    p = theta.size
    h = _fd_step(theta, rel_step)
    f0 = lp(theta)
    H = np.empty((p, p))
    for k in range(p):
        ek = np.zeros(p)
        ek[k] = h[k]
        H[k, k] = (lp(theta + ek) - 2.0 * f0 + lp(theta - ek)) / h[k] ** 2
        for l in range(k):
            el = np.zeros(p)
            el[l] = h[l]
            H[k, l] = H[l, k] = (
                lp(theta + ek + el) - lp(theta + ek - el) - lp(theta - ek + el) + lp(theta - ek - el)
            ) / (4.0 * h[k] * h[l])
    info = -0.5 * (H + H.T)
    try:
        eigvals = np.linalg.eigvalsh(info)
    except np.linalg.LinAlgError:
        return info, None, False
    if np.any(eigvals <= 0) or not np.all(np.isfinite(eigvals)):
        return info, None, False
    std = np.sqrt(np.diag(np.linalg.inv(info)))
    return info, std, True


def map_estimate(grid: Grid, kappa_sq: float, layout: ParameterLayout,
                 observation: ObservationModel, theta0, *,
                 max_evaluations: int = 5000, rel_grad_tol: float = 1e-4,
                 step_tol: float = 1e-8, fd_rel_step: float = 1e-5,
                 compute_information: bool = True, method: str = "auto") -> FitResult:
    """Maximum a posteriori fit by quasi-Newton ascent.

    Starts from ``theta0`` (must be feasible) and stops when the gradient
    infinity norm falls below ``rel_grad_tol * max(1, |log posterior|)``,
    the parameter step falls below ``step_tol``, or ``max_evaluations``
    posterior evaluations have been spent (then ``converged=False`` with
    the best point found). Gamma stays feasible through line-search
    backtracking, never clamping. Standard errors come from the observed
    information at the optimum when requested and well defined.
    """
    lp = LogPosterior(grid, kappa_sq, layout, observation, method=method)
    theta0 = np.asarray(theta0, dtype=float)
    neg = lambda th: -lp(th)  # noqa: E731
    x, fneg, iterations, converged, message = _minimize_bfgs(
        neg,
        theta0,
        rel_grad_tol=rel_grad_tol,
        step_tol=step_tol,
        fd_rel_step=fd_rel_step,
        eval_counter=lambda: lp.n_evaluations,
        max_evaluations=max_evaluations,
    )
    result = FitResult(
        theta=x,
        log_posterior=-fneg,
        converged=converged,
        n_iterations=iterations,
        n_evaluations=lp.n_evaluations,
        message=message,
    )
    if compute_information:
        info, std, spd = observed_information(lp, x)
        result.information = info
        result.std_devs = std
        result.information_spd = spd
        result.n_evaluations = lp.n_evaluations
    return result


# ---------------------------------------------------------------------------
# simulation studies and diagnostics
# ---------------------------------------------------------------------------


@dataclass
class StudyResult:
    """Aggregate of repeated simulate-and-refit experiments."""

    true_theta: np.ndarray
    estimates: np.ndarray
    bias: np.ndarray
    sample_sd: np.ndarray
    n_datasets: int
    n_failed: int

    def to_dict(self) -> dict:
        return {
            "true_theta": [float(v) for v in self.true_theta],
            "bias": [float(v) for v in self.bias],
            "sample_sd": [float(v) for v in self.sample_sd],
            "n_datasets": int(self.n_datasets),
            "n_failed": int(self.n_failed),
        }


def _study_replicate(grid, kappa_sq, layout, true_theta, seed_seq,
                     noise_precision, max_evaluations, method):
    aniso = layout.unpack(true_theta)
    Q = StencilAssembler(grid).precision_matrix(kappa_sq, aniso)
    rng = np.random.default_rng(seed_seq)
    u = PrecisionFactor(Q).sample(rng)
    if noise_precision is None:
        obs = ObservationModel.exact_field(u)
    else:
        y = u + rng.standard_normal(u.size) / math.sqrt(noise_precision)
        obs = ObservationModel.noisy(y, noise_precision)
    try:
        fit = map_estimate(
            grid, kappa_sq, layout, obs, true_theta,
            max_evaluations=max_evaluations, compute_information=False, method=method,
        )
    except (ValueError, RuntimeError, NotPositiveDefiniteError) as exc:
        return None, str(exc)
    if not fit.converged:
        return None, fit.message
    return fit.theta, None


def simulation_study(grid: Grid, kappa_sq: float, layout: ParameterLayout, true_theta,
                     n_datasets: int, seed: int, *, noise_precision=None,
                     n_jobs: int = 1, max_evaluations: int = 5000,
                     method: str = "auto") -> StudyResult:
    """Repeated simulation and refitting from the true model.

    Each replicate draws a field from ``Q(true_theta)`` (plus observation
    noise when requested), fits starting at the truth, and contributes its
    estimate; failed or non-converged fits are excluded and counted.
    Replicates get independent child seeds of ``seed``, so results are
    reproducible for any worker count.
    """
    if n_datasets < 2:
        raise ValueError("need at least two datasets")
    true_theta = np.asarray(true_theta, dtype=float)
    children = np.random.SeedSequence(seed).spawn(n_datasets)
    out = Parallel(n_jobs=n_jobs)(
        delayed(_study_replicate)(
            grid, kappa_sq, layout, true_theta, ss, noise_precision, max_evaluations, method,
        )
        for ss in children
    )
    estimates = np.array([theta for theta, _ in out if theta is not None])
    n_failed = sum(1 for theta, _ in out if theta is None)
    if estimates.size == 0:
        raise RuntimeError("every replicate failed to fit")
    return StudyResult(
        true_theta=true_theta,
        estimates=estimates,
        bias=estimates.mean(axis=0) - true_theta,
        sample_sd=estimates.std(axis=0, ddof=1),
        n_datasets=n_datasets,
        n_failed=n_failed,
    )


def h_discrepancy(true_aniso: Anisotropy, est_aniso: Anisotropy, grid: Grid) -> float:
    """Root-mean-square Frobenius distance between two tensor fields.

    ``sqrt(mean over cell centres of |H - H_hat|_F^2)``; for a 100 x 100
    grid this equals ``(1/100) sqrt(sum of squared norms)``.
    """
    X, Y = grid.cell_center_arrays()
    h11a, h12a, h22a = true_aniso.tensor(X, Y)
    h11b, h12b, h22b = est_aniso.tensor(X, Y)
    fro_sq = (h11a - h11b) ** 2 + 2.0 * (h12a - h12b) ** 2 + (h22a - h22b) ** 2
    return float(np.sqrt(fro_sq.mean()))


def multistart_map(grid: Grid, kappa_sq: float, layout: ParameterLayout,
                   observation: ObservationModel, starts, *, n_jobs: int = 1,
                   **fit_kwargs) -> list[FitResult]:
    """Independent MAP runs from several starts, best posterior first.

    Exposes multimodality of flexible layouts: distinct converged maxima
    appear as entries with different parameter vectors and posterior
    values (the sign non-identifiability of the field makes such local
    maxima expected rather than exceptional).
    """
    starts = [np.asarray(s, dtype=float) for s in starts]
    if not starts:
        raise ValueError("need at least one starting point")
    results = Parallel(n_jobs=n_jobs)(
        delayed(map_estimate)(grid, kappa_sq, layout, observation, s, **fit_kwargs)
        for s in starts
    )
    for s, r in zip(starts, results):
        r.start = s
    return sorted(results, key=lambda r: r.log_posterior, reverse=True)
