"""
Monotonicity check for the expected largest residual spike as a function of
the spike size.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from .errors import ComplexBranch
from .spectra import Spectrum, solve_location
from .spike import angle_estimate_alpha2, angle_estimate_alpha2_largetheta

__all__ = [
    "CriterionCurve",
    "theta_hat_solve",
    "criterion_mu",
    "criterion_mu_largetheta",
    "criterion_check",
    "default_theta_grid",
    "regime_switch",
]

MONOTONE_TOL = 1e-9


@dataclass(frozen=True)
class CriterionCurve:
    thetas: NDArray[np.float64] = field(repr=False)
    mu: NDArray[np.float64] = field(repr=False)
    alpha2: NDArray[np.float64] = field(repr=False)
    verdict: bool
    regime_switch: float

    def __post_init__(self) -> None:
        t = np.asarray(self.thetas, dtype=np.float64)
        if t.size > 1 and np.any(np.diff(t) <= 0):
            raise ValueError("theta grid must be strictly increasing")

    def to_dict(self) -> dict:
        return {
            "thetas": [float(x) for x in self.thetas],
            "mu": [float(x) for x in self.mu],
            "alpha2": [float(x) for x in self.alpha2],
            "verdict": bool(self.verdict),
            "regime_switch": float(self.regime_switch),
        }


def theta_hat_solve(bulk: Spectrum, theta: float) -> float:
    """Location above the bulk where its T-transform equals 1/(theta - 1)."""
    return solve_location(bulk, theta)


def _mu_from_alpha2(theta: float, a2: float) -> float:
    p = 1.0 + theta**2 - (theta - 1.0) ** 2 * a2
    rad = p * p - 4.0 * theta**2
    if rad < -1e-9 * max(1.0, p * p):
        raise ComplexBranch(f"negative radicand {rad!r} at theta={theta!r}")
    root = np.sqrt(max(rad, 0.0))
    return 0.5 * (theta + a2 - theta * a2 + (1.0 + (theta - 1.0) * a2 + root) / theta)


def criterion_mu(bulk_x: Spectrum, bulk_y: Spectrum, theta: float) -> float:
    """Predicted largest residual spike with angles from the fixed-point estimator."""
    a2 = angle_estimate_alpha2(bulk_x, theta) * angle_estimate_alpha2(bulk_y, theta)
    return _mu_from_alpha2(theta, a2)


def criterion_mu_largetheta(bulk_x: Spectrum, bulk_y: Spectrum, theta: float) -> float:
    """Same prediction with angles from the 1/theta series."""
    a2 = angle_estimate_alpha2_largetheta(bulk_x, theta) * angle_estimate_alpha2_largetheta(bulk_y, theta)
    return _mu_from_alpha2(theta, a2)


def _c_hat(bulk: Spectrum) -> float:
    mean = bulk.moment(1)
    return max(bulk.moment(2) / mean**2 - 1.0, 0.0)


def regime_switch(bulk_x: Spectrum, bulk_y: Spectrum) -> float:
    m = max(bulk_x.dim, bulk_y.dim) + 1
    m2 = max(bulk_x.moment(2), bulk_y.moment(2))
    return float(5.0 * np.sqrt(m) * m2)


def default_theta_grid(bulk_x: Spectrum, bulk_y: Spectrum, points: int = 60) -> NDArray[np.float64]:
    """Log-spaced grid from 1.5 times the detection edge to 1e4 sqrt(m)."""
    m = max(bulk_x.dim, bulk_y.dim) + 1
    edge = 1.0 + np.sqrt(max(_c_hat(bulk_x), _c_hat(bulk_y)))
    return np.geomspace(1.5 * edge, 1e4 * np.sqrt(m), points)


def criterion_check(bulk_x: Spectrum, bulk_y: Spectrum, theta_grid=None, switch: float | None = None) -> CriterionCurve:
    """Evaluate the predicted residual spike on a grid and test that it never decreases."""
    thetas = default_theta_grid(bulk_x, bulk_y) if theta_grid is None else np.asarray(theta_grid, dtype=np.float64)
    switch = regime_switch(bulk_x, bulk_y) if switch is None else float(switch)
    mu = np.empty(thetas.size)
    a2 = np.empty(thetas.size)
    for k, th in enumerate(thetas):
        if th > switch:
            a2[k] = angle_estimate_alpha2_largetheta(bulk_x, th) * angle_estimate_alpha2_largetheta(bulk_y, th)
        else:
            a2[k] = angle_estimate_alpha2(bulk_x, th) * angle_estimate_alpha2(bulk_y, th)
        mu[k] = _mu_from_alpha2(th, a2[k])
    verdict = bool(np.all(np.diff(mu) >= -MONOTONE_TOL))
    return CriterionCurve(thetas, mu, a2, verdict, switch)
