"""
Asymptotic null law of the extreme residual spikes.

Under equal perturbations and a spike growing faster than sqrt(m), the
largest and smallest non-unit eigenvalues of the doubly filtered product are
approximately Gaussian, conditional on the two noise spectra.  Their location
and scale depend only on the spectral moments M2, M3, M4 of each group.
"""

from __future__ import annotations

import enum
from dataclasses import asdict, dataclass

import numpy as np
from scipy import stats

from .errors import DegenerateBulk
from .spectra import MomentSet

__all__ = [
    "NullLaw",
    "ResidualZone",
    "Variant",
    "null_law_general",
    "null_law_cx_zero",
    "null_law_mp",
    "residual_zone",
    "pvalues",
    "quantiles",
    "density_curve",
]


class Variant(str, enum.Enum):
    BOTH_FILTERED = "both_filtered"
    FILTERED_RAW = "filtered_raw"


@dataclass(frozen=True)
class NullLaw:
    """Gaussian approximations N(lambda_plus, sigma_plus^2/m) and N(lambda_minus, sigma_minus^2/m)."""

    lambda_plus: float
    sigma_plus: float
    lambda_minus: float
    sigma_minus: float
    m: int

    @property
    def sd_max(self) -> float:
        return self.sigma_plus / np.sqrt(self.m)

    @property
    def sd_min(self) -> float:
        return self.sigma_minus / np.sqrt(self.m)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "NullLaw":
        return cls(
            float(d["lambda_plus"]),
            float(d["sigma_plus"]),
            float(d["lambda_minus"]),
            float(d["sigma_minus"]),
            int(d["m"]),
        )


@dataclass(frozen=True)
class ResidualZone:
    lower: float
    upper: float
    variant: Variant


def _locations(m2: float) -> tuple[float, float]:
    r = np.sqrt(m2 * m2 - 1.0)
    return m2 + r, m2 - r


def _from_variance(m2_pooled: float, var_plus: float, m: int) -> NullLaw:
    lam_p, lam_m = _locations(m2_pooled)
    sig_p = np.sqrt(var_plus)
    # sigma_minus^2 = lambda_minus^4 sigma_plus^2
    sig_m = lam_m**2 * sig_p
    return NullLaw(float(lam_p), float(sig_p), float(lam_m), float(sig_m), int(m))


def _sigma_plus_sq_poly(X2, X3, X4, Y2, Y3, Y4):
    """Numerators of the two blocks of sigma_plus^2 (one line per printed monomial)."""
    a = 0.0
    a += 9 * X2**4 * Y2
    a += 4 * X2**3 * Y2**2
    a += 4 * X2**3 * Y2
    a += 2 * X2**3 * Y3
    a -= 2 * X2**2 * Y2**3
    a += 4 * X2**2 * Y2**2
    a -= 11 * X2**2 * Y2
    a -= 8 * X3 * X2**2 * Y2
    a += 2 * X2**2 * Y2 * Y3
    a -= 2 * X2**2 * Y3
    a += X2**2 * Y4
    a += 4 * X2 * Y2**3
    a += X2 * Y2**2
    a += 4 * X2 * Y2
    a -= 4 * X3 * X2 * Y2**2
    a -= 4 * X3 * X2 * Y2
    a -= 2 * X2 * Y2**2 * Y3
    a -= 4 * X2 * Y2 * Y3
    a -= 6 * X2 * Y3
    a += 2 * X4 * X2 * Y2
    a += 2 * X2 * Y2 * Y4
    a -= 2 * X3 * Y2**2
    a += 2 * X3 * Y2
    a += X4 * Y2**2
    a += 4 * X2**5
    a += 2 * X2**4
    a -= 4 * X3 * X2**3
    a -= 13 * X2**3
    a -= 2 * X3 * X2**2
    a += X4 * X2**2
    a -= 2 * X2**2
    a += 10 * X3 * X2
    a += 4 * X2
    a += 4 * X3
    a -= 2 * X4
    a += Y2**5
    a += 2 * Y2**4
    a -= Y2**3
    a -= 2 * Y2**2
    a += 4 * Y2
    a -= 2 * Y2**3 * Y3
    a -= 2 * Y2**2 * Y3
    a += 2 * Y2 * Y3
    a += 4 * Y3
    a += Y2**2 * Y4
    a -= 2 * Y4
    a -= 4

    b = 0.0
    b += 5 * X2**3 * Y2
    b -= X2**2 * Y2**2
    b += 2 * X2**2 * Y2
    b += 2 * X2**2 * Y3
    b -= X2 * Y2**3
    b += 2 * X2 * Y2**2
    b -= 4 * X2 * Y2
    b -= 4 * X3 * X2 * Y2
    b -= 2 * X2 * Y3
    b += X2 * Y4
    b -= 2 * X3 * Y2
    b += X4 * Y2
    b += 4 * X2**4
    b += 2 * X2**3
    b -= 4 * X3 * X2**2
    b -= 5 * X2**2
    b -= 2 * X3 * X2
    b += X4 * X2
    b += 2 * X2
    b += 2 * X3
    b += Y2**4
    b += 2 * Y2**3
    b += Y2**2
    b += 2 * Y2
    b -= 2 * Y2**2 * Y3
    b -= 2 * Y2 * Y3
    b -= 2 * Y3
    b += Y2 * Y4
    return a, b


def sigma_plus_sq(mom_x: MomentSet, mom_y: MomentSet) -> float:
    s = mom_x.m2 + mom_y.m2
    if s <= 2 + 1e-9:
        raise DegenerateBulk(f"M2,X + M2,Y = {s!r} leaves no residual fluctuation")
    den = (s - 2.0) * (s + 2.0)
    a, b = _sigma_plus_sq_poly(mom_x.m2, mom_x.m3, mom_x.m4, mom_y.m2, mom_y.m3, mom_y.m4)
    return float(a / den + b / np.sqrt(den))


def null_law_general(mom_x: MomentSet, mom_y: MomentSet, m: int) -> NullLaw:
    """Null law from the spectral moments of both groups.

    The scale formula is not symmetric in X and Y; X is the group whose
    filtered covariance is inverted (the one with the larger sample).
    """
    var = sigma_plus_sq(mom_x, mom_y)
    return _from_variance(0.5 * (mom_x.m2 + mom_y.m2), var, m)


def null_law_cx_zero(mom_y: MomentSet, m: int) -> NullLaw:
    """Limit of :func:`null_law_general` when the X spectrum degenerates to 1."""
    Y2, Y3, Y4 = mom_y.m2, mom_y.m3, mom_y.m4
    if Y2 <= 1 + 1e-9:
        raise DegenerateBulk("M2,Y must exceed 1")
    d = (Y2 - 1) * (Y2 + 3)
    first = (
        Y2**5 + 2 * Y2**4 - 2 * Y3 * Y2**3 + Y2**3 - 4 * Y3 * Y2**2 + Y4 * Y2**2
        + 2 * Y2**2 + 2 * Y4 * Y2 + 2 * Y2 - 2 * Y3 - Y4 - 2
    ) / d
    second = (
        Y2**4 + Y2**3 - 2 * Y3 * Y2**2 + 2 * Y2**2 - 2 * Y3 * Y2 + Y4 * Y2 - 2 * Y3 + Y4
    ) / np.sqrt(d)
    return _from_variance(0.5 * (1.0 + Y2), first + second, m)


def null_law_mp(cx: float, cy: float, m: int) -> NullLaw:
    """Closed form for two Marcenko-Pastur bulks with ratios ``cx = m/n_X``, ``cy = m/n_Y``."""
    if not (cx > 0 and cy > 0):
        raise ValueError("MP ratios must be positive")
    c = 0.5 * (cx + cy)
    root = np.sqrt(c * (c + 2))
    var = (
        cx**3 + cx**2 * cy + 3 * cx**2 + 4 * cx * cy - cx + cy**2 + cy
        + (4 * cx + cx**2) / (c + 2)
        + (cx**3 + 5 * cx**2 + cx**2 * cy + 4 * cx * cy + 5 * cx + 3 * cy + cy**2) * root / (c + 2)
    )
    return _from_variance(1.0 + c, var, m)


def residual_zone(c: float, variant: Variant | str = Variant.BOTH_FILTERED) -> ResidualZone:
    """Asymptotic interval that null residual spikes can occupy (MP bulks, ratio c)."""
    if not c > 0:
        raise ValueError("c must be positive")
    variant = Variant(variant)
    if variant is Variant.BOTH_FILTERED:
        r = np.sqrt(c * c + 2 * c)
        upper = 1 + c + r
        return ResidualZone(float(1.0 / upper), float(upper), variant)
    upper = 0.5 * (2 + c + np.sqrt(c * c + 4 * c))
    return ResidualZone(float((1 - np.sqrt(c)) ** 2), float(upper), variant)


def pvalues(law: NullLaw, observed_max: float, observed_min: float) -> tuple[float, float]:
    """Upper-tail p-value for the largest spike, lower-tail for the smallest."""
    z_max = np.sqrt(law.m) * (observed_max - law.lambda_plus) / law.sigma_plus
    z_min = np.sqrt(law.m) * (observed_min - law.lambda_minus) / law.sigma_minus
    return float(stats.norm.sf(z_max)), float(stats.norm.cdf(z_min))


def quantiles(law: NullLaw, alpha: float = 0.05) -> tuple[float, float]:
    """Two-sided critical values ``(q_min(alpha/2), q_max(1 - alpha/2))``."""
    z = stats.norm.isf(alpha / 2)
    return law.lambda_minus - z * law.sd_min, law.lambda_plus + z * law.sd_max


def density_curve(law: NullLaw, which: str = "max", points: int = 201, width: float = 4.0):
    """Grid and Gaussian density for plotting one extreme spike law."""
    if which == "max":
        mu, sd = law.lambda_plus, law.sd_max
    elif which == "min":
        mu, sd = law.lambda_minus, law.sd_min
    else:
        raise ValueError("which must be 'max' or 'min'")
    x = np.linspace(mu - width * sd, mu + width * sd, points)
    return x, stats.norm.pdf(x, mu, sd)
