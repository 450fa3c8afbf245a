"""
Spectrum containers and the scalar spectral statistics built on them.

Every statistic here consumes a :class:`Spectrum` (or the exact
:class:`MarcenkoPasturLaw`), never a raw matrix, so the spectrum of an
idealised noise matrix and the bulk of an estimated covariance share one
code path.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from math import comb

import numpy as np
from numpy.typing import NDArray
from scipy import integrate

from .errors import ConvergenceFailure, NonSymmetric, NotUnit, PoleTooClose, ZeroTrace

__all__ = [
    "Spectrum",
    "MomentSet",
    "EigenDecomposition",
    "MarcenkoPasturLaw",
    "eig_sym",
    "normalize_trace",
    "moment",
    "m_functional",
    "t_transform",
    "weighted_m_functional",
    "weighted_t_transform",
    "solve_location",
]

CLAMP_RTOL = 1e-12
POLE_GAP = 1e-9
MAX_MOMENT = 8


def _readonly(a: NDArray[np.float64]) -> NDArray[np.float64]:
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Spectrum:
    """Eigenvalues sorted in descending order.

    Values within ``1e-12 * max`` of zero from below are clamped to 0; larger
    negative values are rejected unless ``psd=False``.
    """

    values: NDArray[np.float64]
    normalized: bool = False

    def __post_init__(self) -> None:
        v = np.sort(np.asarray(self.values, dtype=np.float64).ravel())[::-1]
        if v.size == 0:
            raise ValueError("a spectrum needs at least one eigenvalue")
        if not np.all(np.isfinite(v)):
            raise ValueError("spectrum contains non-finite values")
        scale = float(np.max(np.abs(v)))
        small = (v < 0) & (v >= -CLAMP_RTOL * scale)
        if np.any(small):
            v = v.copy()
            v[small] = 0.0
        object.__setattr__(self, "values", _readonly(v))

    @classmethod
    def from_values(cls, values, normalized: bool = False, psd: bool = True) -> "Spectrum":
        spec = cls(np.asarray(values, dtype=np.float64), normalized=normalized)
        if psd and spec.values[-1] < 0:
            raise ValueError(f"negative eigenvalue {spec.values[-1]:.3g} in a PSD spectrum")
        if normalized and abs(spec.values.sum() - spec.dim) > 1e-8 * spec.dim:
            raise ValueError("normalized spectrum must sum to its dimension")
        return spec

    @property
    def dim(self) -> int:
        return int(self.values.size)

    @property
    def max(self) -> float:
        return float(self.values[0])

    def moment(self, s: int) -> float:
        return moment(self, s)

    def m_functional(self, rho: float, s1: int, s2: int) -> float:
        return m_functional(self, rho, s1, s2)

    def t_transform(self, z: float) -> float:
        return t_transform(self, z)


@dataclass(frozen=True)
class MomentSet:
    """Plain spectral moments M2, M3, M4 of one group (mean-one spectra)."""

    m2: float
    m3: float
    m4: float
    source: str = "pooled"

    def __post_init__(self) -> None:
        vals = (self.m2, self.m3, self.m4)
        if not all(np.isfinite(vals)):
            raise ValueError("moments must be finite")
        if self.m2 <= 0 or self.m4 <= 0:
            raise ValueError("even moments must be positive")
        # Cauchy-Schwarz: (sum l^3)^2 <= sum l^2 * sum l^4
        tol = 1e-12 * max(1.0, self.m2 * self.m4)
        if self.m3**2 > self.m2 * self.m4 + tol or self.m2**2 > self.m4 + tol * self.m4:
            raise ValueError(f"moments {vals} are not realizable by any spectrum")

    @classmethod
    def from_spectrum(cls, spec: "Spectrum | MarcenkoPasturLaw", source: str = "pooled") -> "MomentSet":
        return cls(spec.moment(2), spec.moment(3), spec.moment(4), source)


@dataclass(frozen=True)
class EigenDecomposition:
    values: Spectrum
    vectors: NDArray[np.float64] = field(repr=False)

    @property
    def dim(self) -> int:
        return self.values.dim


def eig_sym(matrix, psd: bool = True, sym_rtol: float = 1e-10) -> EigenDecomposition:
    """Full symmetric eigendecomposition with eigenvalues in descending order."""
    a = np.asarray(matrix, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    norm = np.linalg.norm(a)
    if np.linalg.norm(a - a.T) > sym_rtol * max(norm, np.finfo(float).tiny):
        raise NonSymmetric("matrix is not symmetric within tolerance")
    try:
        w, v = np.linalg.eigh(a)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise ConvergenceFailure(str(exc)) from exc
    w = w[::-1]
    v = v[:, ::-1]
    spec = Spectrum.from_values(w, psd=psd)
    return EigenDecomposition(spec, _readonly(v))


def normalize_trace(spec: Spectrum) -> Spectrum:
    total = float(spec.values.sum())
    if total <= 0:
        raise ZeroTrace("cannot rescale a spectrum with non-positive trace")
    if spec.normalized:
        return spec
    return Spectrum(spec.values * (spec.dim / total), normalized=True)


def moment(spec: Spectrum, s: int) -> float:
    if not 1 <= s <= MAX_MOMENT:
        raise ValueError(f"moment order must be in 1..{MAX_MOMENT}, got {s}")
    return float(np.mean(spec.values**s))


def _check_pole(top: float, rho: float) -> None:
    if rho - top < POLE_GAP:
        raise PoleTooClose(f"rho={rho!r} is within {POLE_GAP} of the spectrum top {top!r}")


def m_functional(spec: Spectrum, rho: float, s1: int, s2: int) -> float:
    """(1/m) sum l^s1 / (rho - l)^s2."""
    lam = spec.values
    if s2 == 0:
        return float(np.mean(lam**s1))
    _check_pole(spec.max, rho)
    return float(np.mean(lam**s1 / (rho - lam) ** s2))


def t_transform(spec: Spectrum, z: float) -> float:
    return m_functional(spec, z, 1, 1)


def _weights(decomp: EigenDecomposition, u) -> NDArray[np.float64]:
    u = np.asarray(u, dtype=np.float64).ravel()
    if u.size != decomp.dim:
        raise ValueError("vector and decomposition dimensions differ")
    if abs(np.linalg.norm(u) - 1.0) > 1e-10:
        raise NotUnit(f"|u| = {np.linalg.norm(u)!r}")
    return (decomp.vectors.T @ u) ** 2


def weighted_m_functional(decomp: EigenDecomposition, u, rho: float, s1: int, s2: int) -> float:
    """sum_i l_i^s1 / (rho - l_i)^s2 <u_i, u>^2 (no 1/m factor)."""
    w = _weights(decomp, u)
    lam = decomp.values.values
    if s2 == 0:
        return float(np.sum(lam**s1 * w))
    _check_pole(decomp.values.max, rho)
    return float(np.sum(lam**s1 / (rho - lam) ** s2 * w))


def weighted_t_transform(decomp: EigenDecomposition, u, z: float) -> float:
    return weighted_m_functional(decomp, u, z, 1, 1)


def solve_location(spec: "Spectrum | MarcenkoPasturLaw", theta: float, rtol: float = 1e-12) -> float:
    """Root above the spectrum of  T(x) = 1/(theta - 1).

    T is strictly decreasing on (max, inf), so a bracketed bisection finds the
    unique root.  Used both for the criterion fixed point and for the
    deterministic spike location rho.
    """
    from .errors import NoRoot

    if not theta > 1:
        raise NoRoot(f"theta must exceed 1, got {theta!r}")
    top = spec.max
    if top <= 0:
        raise NoRoot("spectrum has no positive eigenvalue")
    target = 1.0 / (theta - 1.0)
    m1 = spec.moment(1)
    lo = top * (1 + 1e-15) + POLE_GAP
    hi = top + (theta - 1.0) * m1 + POLE_GAP
    f = lambda x: spec.t_transform(x) - target  # noqa: E731
    if f(lo) <= 0:
        # root is closer to the pole than we can resolve
        return lo
    while f(hi) > 0:  # pragma: no cover - bound above is analytic
        hi = top + 2 * (hi - top)
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        if f(mid) > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= rtol * hi:
            break
    return 0.5 * (lo + hi)


def _narayana_moment(c: float, s: int) -> float:
    return float(sum(comb(s, k) * comb(s, k + 1) / s * c**k for k in range(s)))


@dataclass(frozen=True)
class MarcenkoPasturLaw:
    """Exact Marcenko-Pastur law with ratio ``c = m/n`` and unit mean.

    Plays the role of an infinitely large spectrum: moments are the Narayana
    polynomials and M-functionals are evaluated by quadrature against the
    density.
    """

    c: float

    def __post_init__(self) -> None:
        if not self.c > 0:
            raise ValueError("MP ratio must be positive")

    @property
    def lower(self) -> float:
        return (1 - np.sqrt(self.c)) ** 2

    @property
    def max(self) -> float:
        return float((1 + np.sqrt(self.c)) ** 2)

    def moment(self, s: int) -> float:
        if not 1 <= s <= MAX_MOMENT:
            raise ValueError(f"moment order must be in 1..{MAX_MOMENT}, got {s}")
        return _narayana_moment(self.c, s)

    def density(self, x):
        x = np.asarray(x, dtype=np.float64)
        a, b = self.lower, self.max
        inside = (x > a) & (x < b)
        out = np.zeros_like(x)
        xi = x[inside]
        out[inside] = np.sqrt((b - xi) * (xi - a)) / (2 * np.pi * self.c * xi)
        return out

    def m_functional(self, rho: float, s1: int, s2: int) -> float:
        if s2 == 0:
            return self.moment(s1) if s1 > 0 else 1.0
        _check_pole(self.max, rho)
        a, b, c = self.lower, self.max, self.c

        def f(x):
            return x ** (s1 - 1) / (2 * np.pi * c * (rho - x) ** s2)

        with warnings.catch_warnings():
            # roundoff notices near the edge; the algebraic weight keeps ~1e-12 accuracy
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            val, _ = integrate.quad(f, a, b, weight="alg", wvar=(0.5, 0.5), epsabs=1e-15, epsrel=1e-13, limit=200)
        if s1 == 0 and c > 1:
            val += (1 - 1 / c) / rho**s2
        return float(val)

    def t_transform(self, z: float) -> float:
        return self.m_functional(z, 1, 1)

    def quantile_spectrum(self, m: int) -> Spectrum:
        """Deterministic m-point spectrum placed at MP quantiles (c <= 1 only)."""
        if self.c > 1:
            raise ValueError("quantile spectrum only supported for c <= 1")
        grid = np.linspace(self.lower, self.max, 20001)
        dens = self.density(grid)
        cdf = integrate.cumulative_trapezoid(dens, grid, initial=0.0)
        cdf /= cdf[-1]
        probs = (np.arange(m) + 0.5) / m
        vals = np.interp(probs, cdf, grid)
        return normalize_trace(Spectrum(vals))
