"""Closed-form reference results for constant-coefficient models.

For a constant tensor the whole-plane solution is stationary with known
marginal variance and a Matern-type correlation along the principal axes,
which gives independent checks for the discretized models.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import k1 as _bessel_k1

__all__ = [
    "stationary_variance",
    "matern_correlation",
    "StationaryCharacterization",
    "characterize_constant_tensor",
]


def _as_spd_2x2(H) -> np.ndarray:
    H = np.asarray(H, dtype=float)
    if H.shape != (2, 2):
        raise ValueError("tensor must be a 2x2 matrix")
    if abs(H[0, 1] - H[1, 0]) > 1e-12 * max(1.0, abs(H).max()):
        raise ValueError("tensor must be symmetric")
    if H[0, 0] <= 0 or np.linalg.det(H) <= 0:
        raise ValueError("tensor must be positive definite")
    return H


def stationary_variance(kappa_sq: float, H) -> float:
    """Marginal variance ``1 / (4 pi kappa^2 sqrt(det H))``.

    This is the whole-plane value for constant coefficients; on a periodic
    box it holds up to a boundary effect that vanishes as the domain grows
    relative to the correlation range.
    """
    if not kappa_sq > 0:
        raise ValueError("kappa_sq must be strictly positive")
    H = _as_spd_2x2(H)
    return 1.0 / (4.0 * math.pi * kappa_sq * math.sqrt(np.linalg.det(H)))


def matern_correlation(kappa: float, distance):
    """Correlation ``(kappa d) K_1(kappa d)`` of the smoothness-1 family.

    Normalized so the limit at zero distance is 1; accepts scalars or
    arrays of nonnegative distances.
    """
    if not kappa > 0:
        raise ValueError("kappa must be strictly positive")
    d = np.asarray(distance, dtype=float)
    if np.any(d < 0):
        raise ValueError("distances must be nonnegative")
    x = np.atleast_1d(kappa * d)
    out = np.ones_like(x)
    pos = x > 0
    out[pos] = x[pos] * _bessel_k1(x[pos])
    if np.ndim(distance) == 0:
        return float(out[0])
    return out.reshape(np.shape(distance))


@dataclass(frozen=True)
class StationaryCharacterization:
    """Principal-axis description of a constant-coefficient model.

    ``lambda1 >= lambda2 > 0`` are the tensor eigenvalues (diffusion
    strengths along the principal directions), ``theta`` the rotation of
    the ``lambda1`` axis in ``(-pi/2, pi/2]`` (the tensor is quadratic in
    the field, so directions are only defined modulo pi), and ``sigma_sq``
    the stationary marginal variance.
    """

    lambda1: float
    lambda2: float
    theta: float
    sigma_sq: float


def characterize_constant_tensor(kappa_sq: float, H) -> StationaryCharacterization:
    """Eigen-decomposition and marginal variance of a constant tensor."""
    H = _as_spd_2x2(H)
    vals, vecs = np.linalg.eigh(H)
    lam1, lam2 = float(vals[1]), float(vals[0])
    if np.isclose(lam1, lam2):
        theta = 0.0
    else:
        e = vecs[:, 1]
        theta = math.atan2(e[1], e[0])
        if theta <= -0.5 * math.pi:
            theta += math.pi
        elif theta > 0.5 * math.pi:
            theta -= math.pi
    return StationaryCharacterization(
        lambda1=lam1,
        lambda2=lam2,
        theta=theta,
        sigma_sq=stationary_variance(kappa_sq, H),
    )
