"""
Single-sample spike estimation: bias-corrected spike size, the filtered
rank-one covariance and angle estimators.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from .errors import DegenerateSpectrum, NotDetectable, NotUnit, ZeroTrace
from .spectra import Spectrum, eig_sym, normalize_trace, solve_location

__all__ = [
    "SpikeEstimate",
    "FilteredCovariance",
    "estimate_spike",
    "filtered_matrix",
    "inv_sqrt_apply",
    "angle_estimate_alpha2",
    "angle_estimate_alpha2_largetheta",
    "detection_threshold",
]


@dataclass(frozen=True)
class SpikeEstimate:
    theta_hat: float
    theta_unbiased: float
    u_hat: NDArray[np.float64] = field(repr=False)
    bulk: Spectrum = field(repr=False)
    detectable: bool
    c_hat: float = float("nan")
    extra_isolated: int = 0

    @property
    def dim(self) -> int:
        return self.bulk.dim + 1


@dataclass(frozen=True)
class FilteredCovariance:
    """The rank-one matrix ``I + (theta_unbiased - 1) u u^T``, kept implicit."""

    theta_unbiased: float
    u_hat: NDArray[np.float64] = field(repr=False)

    def __post_init__(self) -> None:
        u = np.array(self.u_hat, dtype=np.float64).ravel()
        if abs(np.linalg.norm(u) - 1.0) > 1e-10:
            raise NotUnit("filtered covariance direction must be a unit vector")
        if not self.theta_unbiased > 0:
            raise ValueError("filtered covariance must be positive definite")
        u.setflags(write=False)
        object.__setattr__(self, "u_hat", u)

    @property
    def dim(self) -> int:
        return int(self.u_hat.size)

    def materialize(self) -> NDArray[np.float64]:
        u = self.u_hat
        return np.eye(self.dim) + (self.theta_unbiased - 1.0) * np.outer(u, u)

    def apply(self, v):
        v = np.asarray(v, dtype=np.float64)
        return v + (self.theta_unbiased - 1.0) * np.outer(self.u_hat, self.u_hat @ v).reshape(v.shape)

    @property
    def inv_sqrt_coef(self) -> float:
        return self.theta_unbiased**-0.5 - 1.0


def detection_threshold(bulk: Spectrum, m: int, n: int | None = None) -> tuple[float, float]:
    """Edge-plus-buffer threshold a top eigenvalue must clear to count as a spike.

    Returns ``(threshold, c_hat)``.  ``c_hat`` is ``m/n`` when the sample size
    is known, otherwise the squared coefficient of variation of the bulk
    (which equals ``c`` for a Marcenko-Pastur bulk).
    """
    mean = bulk.moment(1)
    if n is not None:
        c_hat = m / n
    else:
        c_hat = max(bulk.moment(2) / mean**2 - 1.0, 0.0)
    return (1 + np.sqrt(c_hat)) ** 2 * mean + 5.0 * m ** (-2.0 / 3.0), float(c_hat)


def estimate_spike(sigma_hat, n: int | None = None, normalize: bool = True) -> SpikeEstimate:
    """Estimate the single spike of a sample covariance matrix.

    With ``normalize`` the whole spectrum is rescaled so the bulk (all but the
    top eigenvalue) has mean one.  ``theta_unbiased`` does not depend on this
    scale; the bulk moments fed to the null law do.
    """
    decomp = eig_sym(sigma_hat)
    lam = decomp.values.values
    m = lam.size
    if m < 3:
        raise ValueError("need at least 3 variables")
    if lam[0] - lam[1] < 1e-9 * max(lam[0], 1.0):
        raise DegenerateSpectrum("top two eigenvalues coincide")
    if normalize:
        total = float(lam[1:].sum())
        if total <= 0:
            raise ZeroTrace("bulk has no mass")
        scale = (m - 1) / total
        bulk = normalize_trace(Spectrum(lam[1:]))
    else:
        bulk = Spectrum(lam[1:])
        scale = 1.0
    theta_hat = float(lam[0] * scale)
    b = bulk.values
    # observable i >= 2 form of the T-transform correction
    t_bulk = float(np.mean(b / (theta_hat - b)))
    theta_unbiased = 1.0 + 1.0 / t_bulk
    thr, c_hat = detection_threshold(bulk, m, n)
    detectable = theta_hat > thr
    extra = int(np.sum(b > thr))
    if detectable and extra:
        warnings.warn(f"{extra} additional isolated eigenvalue(s); only the top one is filtered", stacklevel=2)
    u = np.array(decomp.vectors[:, 0])
    # fix sign so results are reproducible
    k = int(np.argmax(np.abs(u)))
    if u[k] < 0:
        u = -u
    u.setflags(write=False)
    return SpikeEstimate(theta_hat, theta_unbiased, u, bulk, bool(detectable), c_hat, extra)


def filtered_matrix(est: SpikeEstimate) -> FilteredCovariance:
    if not est.detectable:
        raise NotDetectable(f"top eigenvalue {est.theta_hat:.4g} does not clear the bulk edge")
    return FilteredCovariance(est.theta_unbiased, est.u_hat)


def inv_sqrt_apply(f: FilteredCovariance, a) -> NDArray[np.float64]:
    """S A S with S = f^{-1/2} = I + (theta^{-1/2} - 1) u u^T, in O(m^2)."""
    a = np.asarray(a, dtype=np.float64)
    if a.shape != (f.dim, f.dim):
        raise ValueError(f"shape {a.shape} does not match filter dimension {f.dim}")
    u = f.u_hat
    k = f.inv_sqrt_coef
    au = a @ u
    uau = float(u @ au)
    out = a + k * (np.outer(u, au) + np.outer(au, u)) + k * k * uau * np.outer(u, u)
    return 0.5 * (out + out.T)


def _alpha2_from_bulk(bulk: Spectrum, theta: float) -> tuple[float, float]:
    loc = solve_location(bulk, theta)
    m12 = bulk.m_functional(loc, 1, 2)
    return theta / ((theta - 1.0) ** 2 * loc * m12), loc


def angle_estimate_alpha2(est: SpikeEstimate | Spectrum, theta: float) -> float:
    """Squared cosine between the sample and population spike directions.

    Solves the fixed point for the spike location over the observed bulk, then
    evaluates ``theta / ((theta-1)^2 loc M_{1,2}(loc))``.
    """
    bulk = est.bulk if isinstance(est, SpikeEstimate) else est
    return _alpha2_from_bulk(bulk, theta)[0]


def angle_estimate_alpha2_largetheta(est: SpikeEstimate | Spectrum, theta: float) -> float:
    """Second-order expansion of the squared angle in 1/theta."""
    bulk = est.bulk if isinstance(est, SpikeEstimate) else est
    m2 = bulk.moment(2)
    m3 = bulk.moment(3)
    return 1.0 + (1.0 - m2) / theta + (1.0 - 2.0 * m2 + 3.0 * m2**2 - 2.0 * m3) / theta**2
