"""
Exact finite-m identities for a rank-one multiplicative perturbation
``P = I + (theta - 1) u u^T`` of a symmetric PSD matrix W.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from numpy.typing import NDArray

from .errors import NotUnit, PoleTooClose, RootBracketFailure
from .spectra import EigenDecomposition

__all__ = [
    "PerturbationSpec",
    "AngleFormulas",
    "ResidualEigs",
    "secular_eigenvalues",
    "angle_formulas",
    "lemma_residual_eigs",
    "lemma_residual_eigs_2theta",
    "perturbation_sqrt",
]

WEIGHT_FLOOR = 1e-14


@dataclass(frozen=True)
class PerturbationSpec:
    theta: float
    u: NDArray[np.float64] = field(repr=False)

    def __post_init__(self) -> None:
        u = np.array(self.u, dtype=np.float64).ravel()
        if abs(np.linalg.norm(u) - 1.0) > 1e-10:
            raise NotUnit("perturbation direction must have unit norm")
        if not self.theta > 0:
            raise ValueError("theta must be positive")
        u.setflags(write=False)
        object.__setattr__(self, "u", u)

    @classmethod
    def canonical(cls, theta: float, m: int, index: int = 0) -> "PerturbationSpec":
        u = np.zeros(m)
        u[index] = 1.0
        return cls(theta, u)

    @property
    def dim(self) -> int:
        return int(self.u.size)

    def matrix(self) -> NDArray[np.float64]:
        return np.eye(self.dim) + (self.theta - 1.0) * np.outer(self.u, self.u)


def perturbation_sqrt(pert: PerturbationSpec, power: float = 0.5) -> NDArray[np.float64]:
    """Dense ``P**power`` (P has eigenvalue theta on u and 1 elsewhere)."""
    return np.eye(pert.dim) + (pert.theta**power - 1.0) * np.outer(pert.u, pert.u)


class AngleFormulas(NamedTuple):
    tilde_sq: float
    hat_u_sq: float
    hat_u_sq_derivative: float
    residual: float


class ResidualEigs(NamedTuple):
    lam_hi: float
    lam_lo: float
    is_complex: bool = False


def _grouped_poles(lam, w, rtol=1e-12):
    """Merge numerically equal eigenvalues; returns (poles, weights, deflated)."""
    poles, weights, deflated = [], [], []
    scale = max(float(np.max(np.abs(lam))), 1.0)
    i = 0
    n = lam.size
    while i < n:
        j = i
        while j + 1 < n and abs(lam[j + 1] - lam[i]) <= rtol * scale:
            j += 1
        wsum = float(np.sum(w[i : j + 1]))
        # a cluster of size k keeps k-1 eigenvalues at the pole
        deflated.extend([float(lam[i])] * (j - i))
        if wsum < WEIGHT_FLOOR or lam[i] <= 0:
            deflated.append(float(lam[i]))
        else:
            poles.append(float(lam[i]))
            weights.append(wsum)
        i = j + 1
    return np.array(poles), np.array(weights), deflated


def _bisect(f, lo, hi, rtol=1e-12, maxiter=300):
    flo, fhi = f(lo), f(hi)
    if not (flo > 0 > fhi):
        raise RootBracketFailure(f"no sign change on [{lo!r}, {hi!r}]")
    for _ in range(maxiter):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if f(mid) > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= rtol * abs(hi):
            break
    return 0.5 * (lo + hi)


def secular_eigenvalues(W: EigenDecomposition, pert: PerturbationSpec) -> NDArray[np.float64]:
    """Eigenvalues of ``P^{1/2} W P^{1/2}`` as roots of the secular equation.

    sum_i l_i <w_i, u>^2 / (z - l_i) = 1/(theta - 1).  One root sits in each
    gap between effective poles and one above the largest; zero-weight and
    repeated poles stay eigenvalues unchanged.
    """
    if not pert.theta > 1:
        raise ValueError("secular solver requires theta > 1")
    if pert.dim != W.dim:
        raise ValueError("dimension mismatch between W and perturbation")
    lam = W.values.values
    w = (W.vectors.T @ pert.u) ** 2
    poles, weights, roots = _grouped_poles(lam, w)
    target = 1.0 / (pert.theta - 1.0)
    if poles.size:
        lw = poles * weights

        def f(z):
            return float(np.sum(lw / (z - poles))) - target

        top = poles[0]
        hi = top + (pert.theta - 1.0) * float(np.sum(lw)) * (1 + 1e-12) + 1e-300
        gap = 4 * np.finfo(float).eps * max(top, 1.0)
        roots.append(_bisect(f, top + gap, max(hi, top + 2 * gap)))
        for k in range(poles.size - 1):
            a, b = poles[k + 1], poles[k]
            eps = 4 * np.finfo(float).eps * max(b, 1.0)
            lo_, hi_ = a + eps, b - eps
            if not lo_ < hi_:
                roots.append(0.5 * (a + b))
                continue
            try:
                roots.append(_bisect(f, lo_, hi_))
            except RootBracketFailure:
                # root closer to a pole than float spacing allows
                roots.append(a if f(lo_) <= 0 else b)
    return np.sort(np.array(roots, dtype=np.float64))[::-1]


def angle_formulas(W: EigenDecomposition, pert: PerturbationSpec, lambda_s: float) -> AngleFormulas:
    """Squared angles between u and the eigenvectors attached to root ``lambda_s``.

    ``tilde_sq`` refers to the eigenvector of ``W P``; ``hat_u_sq`` to the
    eigenvector of ``P^{1/2} W P^{1/2}``, computed from ``tilde_sq`` and, as a
    check, from the derivative of the weighted T-transform.
    """
    lam = W.values.values
    w = (W.vectors.T @ pert.u) ** 2
    d = lambda_s - lam
    live = w > WEIGHT_FLOOR
    if np.any(np.abs(d[live]) < 1e-9 * max(abs(lambda_s), 1.0)):
        raise PoleTooClose(f"lambda_s={lambda_s!r} coincides with a pole")
    th = pert.theta
    a = float(np.sum((lam**2 * w / d**2)[live]))
    tilde = 1.0 / ((th - 1.0) ** 2 * a)
    hat = th * tilde / (1.0 + (th - 1.0) * tilde)
    t_prime = -float(np.sum((lam * w / d**2)[live]))
    hat_d = -th / ((th - 1.0) ** 2 * lambda_s * t_prime)
    return AngleFormulas(float(tilde), float(hat), float(hat_d), float(abs(hat - hat_d)))


def _radical(rad: float, scale: float = 1.0) -> tuple[float, bool]:
    # rad is a difference of terms of size ``scale``; tolerate their roundoff
    if rad < -1e-9 * max(scale, 1.0):
        return float("nan"), True
    return float(np.sqrt(max(rad, 0.0))), False


def lemma_residual_eigs(theta: float, alpha2: float) -> ResidualEigs:
    """The two non-unit eigenvalues of P_X^{-1/2} P_Y P_X^{-1/2} (equal theta).

    ``alpha2`` is the squared cosine between the two spike directions.
    """
    if not 0 <= alpha2 <= 1 + 1e-12:
        raise ValueError("alpha2 must lie in [0, 1]")
    if not theta > 0:
        raise ValueError("theta must be positive")
    p = 1.0 + theta**2 - (theta - 1.0) ** 2 * alpha2
    root, cplx = _radical(-4.0 * theta**2 + p * p, p * p)
    if cplx:
        return ResidualEigs(float("nan"), float("nan"), True)
    base = -1.0 + alpha2 - 2.0 * alpha2 * theta - theta**2 * (1.0 - alpha2)
    lam_a = -(base + root) / (2.0 * theta)
    lam_b = -(base - root) / (2.0 * theta)
    return ResidualEigs(max(lam_a, lam_b), min(lam_a, lam_b))


def lemma_residual_eigs_2theta(theta_x: float, theta_y: float, alpha2: float) -> ResidualEigs:
    """Non-unit eigenvalues of P_X^{-1/2} P_Y P_X^{-1/2} with separate spike sizes."""
    if not 0 <= alpha2 <= 1 + 1e-12:
        raise ValueError("alpha2 must lie in [0, 1]")
    if not (theta_x > 0 and theta_y > 0):
        raise ValueError("spike sizes must be positive")
    q = 1.0 + theta_y * theta_x - (theta_y - 1.0) * (theta_x - 1.0) * alpha2
    root, cplx = _radical(-4.0 * theta_y * theta_x + q * q, q * q)
    if cplx:
        return ResidualEigs(float("nan"), float("nan"), True)
    head = theta_y + alpha2 - theta_y * alpha2
    tail = 1.0 + (theta_y - 1.0) * alpha2
    lam_a = 0.5 * (head + (tail + root) / theta_x)
    lam_b = 0.5 * (head + (tail - root) / theta_x)
    return ResidualEigs(lam_a, lam_b)
