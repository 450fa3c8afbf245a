"""
Gaussian approximations for the spike estimators conditional on the noise
spectra.

Covariances are returned already divided by ``m``.  Spectrum arguments may be
a :class:`~resispike.spectra.Spectrum` or an exact
:class:`~resispike.spectra.MarcenkoPasturLaw`; only ``moment``,
``m_functional``, ``t_transform`` and ``max`` are used.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from .errors import NoRoot, NotDetectable
from .spectra import EigenDecomposition, solve_location, weighted_m_functional

__all__ = [
    "GaussianApprox",
    "invariant_vector_cov",
    "spike_location",
    "single_law_smalltheta",
    "joint_law_smalltheta",
    "single_law_largetheta",
    "joint_law_largetheta",
    "joint_law_mixed",
    "wishart_single_smalltheta",
    "wishart_joint_smalltheta",
    "wishart_single_largetheta",
    "wishart_joint_largetheta",
    "wishart_invariant_cov",
    "angle_plugin_estimates",
    "double_angle",
]


@dataclass(frozen=True)
class GaussianApprox:
    mean: NDArray[np.float64]
    cov: NDArray[np.float64] = field(repr=False)
    labels: tuple[str, ...]

    def __post_init__(self) -> None:
        mean = np.array(self.mean, dtype=np.float64).ravel()
        cov = np.array(self.cov, dtype=np.float64)
        if cov.shape != (mean.size, mean.size) or len(self.labels) != mean.size:
            raise ValueError("mean, cov and labels disagree in size")
        scale = max(float(np.max(np.abs(cov))), 1e-300)
        if np.max(np.abs(cov - cov.T)) > 1e-12 * scale:
            raise ValueError("covariance is not symmetric")
        if np.any(np.diag(cov) < -1e-12 * scale):
            raise ValueError("covariance has a negative variance")
        cov = 0.5 * (cov + cov.T)
        mean.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "labels", tuple(self.labels))

    @property
    def sd(self) -> NDArray[np.float64]:
        return np.sqrt(np.clip(np.diag(self.cov), 0.0, None))

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.cov)[0])

    def index(self, label: str) -> int:
        return self.labels.index(label)


def _m(spec, rho, s, r):
    return spec.m_functional(rho, s, r)


def invariant_vector_cov(spec, rho: float, s: tuple[int, int], r: tuple[int, int], same_index: bool) -> NDArray[np.float64]:
    """Limiting covariance of sqrt(m) (sum f_s(l_i) u_i v_i, sum f_r(l_i) u_i v_i).

    ``f_s(l) = l^s1 / (rho - l)^s2``.  With ``same_index`` (u = v) the
    statistics are centered at M_s, M_r and the covariance doubles.
    """
    s1, s2 = s
    r1, r2 = r
    ms = _m(spec, rho, s1, s2)
    mr = _m(spec, rho, r1, r2)
    a = _m(spec, rho, 2 * s1, 2 * s2) - ms * ms
    b = _m(spec, rho, s1 + r1, s2 + r2) - ms * mr
    d = _m(spec, rho, 2 * r1, 2 * r2) - mr * mr
    k = 2.0 if same_index else 1.0
    return k * np.array([[a, b], [b, d]])


def wishart_invariant_cov(c: float) -> NDArray[np.float64]:
    """Covariance of (sum l u_i^2, sum l^2 u_i^2) for a Marcenko-Pastur spectrum."""
    return np.array([[2 * c, 2 * c * (2 + c)], [2 * c * (2 + c), 2 * c * (c + 1) * (c + 4)]])


def spike_location(spec, theta: float) -> float:
    """Deterministic location of the top sample eigenvalue: T(rho) = 1/(theta - 1)."""
    try:
        return solve_location(spec, theta)
    except NoRoot as exc:
        raise NotDetectable(str(exc)) from exc


def _small_parts(spec, theta: float) -> dict:
    rho = spike_location(spec, theta)
    m11 = _m(spec, rho, 1, 1)
    m12 = _m(spec, rho, 1, 2)
    m13 = _m(spec, rho, 1, 3)
    m22 = _m(spec, rho, 2, 2)
    m23 = _m(spec, rho, 2, 3)
    m24 = _m(spec, rho, 2, 4)
    tm1 = theta - 1.0
    alpha2 = theta / (tm1**2 * rho * m12)
    var_theta = 2.0 * (m22 - m11**2) / m11**4
    g = 2.0 * rho * m13 / m12 - 1.0
    var_alpha = (
        2.0 * theta**2 / (tm1 * rho * m12) ** 4
        * (rho**2 * (m24 - m12**2) + g**2 * (m22 - m11**2) - 2.0 * rho * g * (m23 - m11 * m12))
    )
    cov_ta = (
        2.0 * theta / (m11**2 * m12**3 * rho**2 * tm1**2)
        * (
            m11 * m12**2 * rho
            + 2.0 * m13 * m22 * rho
            + m11**2 * (m12 - 2.0 * m13 * rho)
            - m12 * (m22 + m23 * rho)
        )
    )
    return {"rho": rho, "alpha2": alpha2, "var_theta": var_theta, "var_alpha": var_alpha, "cov_ta": cov_ta}


def single_law_smalltheta(spec, theta: float, m: int, tag: str = "X") -> GaussianApprox:
    """Law of (unbiased spike size, squared angle with the true direction) for theta << sqrt(m)."""
    p = _small_parts(spec, theta)
    cov = np.array([[p["var_theta"], p["cov_ta"]], [p["cov_ta"], p["var_alpha"]]]) / m
    return GaussianApprox(np.array([theta, p["alpha2"]]), cov, (f"theta_unbiased_{tag}", f"angle_sq_{tag}"))


def _joint_labels():
    return ("theta_unbiased_X", "theta_unbiased_Y", "angle_sq_XY")


def joint_law_smalltheta(
    spec_x, spec_y, theta: float, m: int, use_alpha_y: bool = False, unscaled_cross: bool = False
) -> GaussianApprox:
    """Law of (theta_X, theta_Y, <u_X, u_Y>^2) for theta << sqrt(m).

    The last variance uses (1 - a_X^2)^2 in its final term; ``use_alpha_y``
    switches it to (1 - a_X^2)(1 - a_Y^2).

    Since <u_X, u_Y>^2 ~ <u_X, u>^2 <u_Y, u>^2, the covariance of theta_X with
    the double angle is the single-sample one times a_Y^2 (and symmetrically).
    ``unscaled_cross`` drops that factor; the result can then fail to be PSD
    near the detection edge.
    """
    px = _small_parts(spec_x, theta)
    py = _small_parts(spec_y, theta)
    ax, ay = px["alpha2"], py["alpha2"]
    axy = ax * ay
    tail = (1.0 - ax) * ((1.0 - ay) if use_alpha_y else (1.0 - ax))
    var_xy = px["var_alpha"] * ay**2 + py["var_alpha"] * ax**2 + 4.0 * axy * tail
    kx, ky = (1.0, 1.0) if unscaled_cross else (ay, ax)
    cov = np.array(
        [
            [px["var_theta"], 0.0, kx * px["cov_ta"]],
            [0.0, py["var_theta"], ky * py["cov_ta"]],
            [kx * px["cov_ta"], ky * py["cov_ta"], var_xy],
        ]
    )
    return GaussianApprox(np.array([theta, theta, axy]), cov / m, _joint_labels())


def _large_blocks(spec, theta: float) -> tuple[float, float, float, float]:
    m2, m3, m4 = spec.moment(2), spec.moment(3), spec.moment(4)
    var_theta = 2.0 * theta**2 * (m2 - 1.0)
    cov_ta = 2.0 * (2.0 * m2**2 - m2 - m3)
    q = 4.0 * m2**3 - m2**2 - 4.0 * m2 * m3 + m4
    return var_theta, cov_ta, q, m2


def single_law_largetheta(spec, theta: float, m: int, tag: str = "X") -> GaussianApprox:
    """Law of (unbiased spike size, squared angle) for theta >> sqrt(m)."""
    var_theta, cov_ta, q, m2 = _large_blocks(spec, theta)
    cov = np.array([[var_theta, cov_ta], [cov_ta, 2.0 * q / theta**2]]) / m
    mean = np.array([theta, 1.0 + (1.0 - m2) / theta])
    return GaussianApprox(mean, cov, (f"theta_unbiased_{tag}", f"angle_sq_{tag}"))


def joint_law_largetheta(spec_x, spec_y, theta: float, m: int) -> GaussianApprox:
    vx, cx, qx, m2x = _large_blocks(spec_x, theta)
    vy, cy, qy, m2y = _large_blocks(spec_y, theta)
    s = 2.0 * qx + 2.0 * qy + 4.0 * (m2y - 1.0) * (m2x - 1.0)
    cov = np.array([[vx, 0.0, cx], [0.0, vy, cy], [cx, cy, s / theta**2]]) / m
    mean = np.array([theta, theta, 1.0 + (2.0 - m2x - m2y) / theta])
    return GaussianApprox(mean, cov, _joint_labels())


def joint_law_mixed(spec_x, spec_y, theta: float, m: int) -> GaussianApprox:
    """theta of order sqrt(m): small-theta means with large-theta covariances."""
    small = joint_law_smalltheta(spec_x, spec_y, theta, m)
    large = joint_law_largetheta(spec_x, spec_y, theta, m)
    return GaussianApprox(small.mean, large.cov, small.labels)


def _wishart_alpha2(c: float, theta: float) -> float:
    tm1 = theta - 1.0
    if tm1**2 <= c:
        raise NotDetectable(f"theta={theta!r} is below the detection edge for c={c!r}")
    return (1.0 - c / tm1**2) / (1.0 + c / tm1)


def _wishart_small_entries(c: float, theta: float):
    tm1 = theta - 1.0
    den = c - tm1**2
    v_t = -2.0 * c * tm1**2 * theta**2 / den
    c_ta = -2.0 * c**2 * tm1 * theta**3 / (den * (c + tm1) ** 2)
    v_a = -2.0 * c**2 * theta**2 * (c**2 + (theta * (theta + 2) - 2) * c + tm1**2) / (den * (c + tm1) ** 4)
    return v_t, c_ta, v_a


def wishart_single_smalltheta(c: float, theta: float, m: int) -> GaussianApprox:
    a2 = _wishart_alpha2(c, theta)
    v_t, c_ta, v_a = _wishart_small_entries(c, theta)
    cov = np.array([[v_t, c_ta], [c_ta, v_a]]) / m
    return GaussianApprox(np.array([theta, a2]), cov, ("theta_unbiased_X", "angle_sq_X"))


def wishart_joint_smalltheta(c: float, theta: float, m: int, unscaled_cross: bool = False) -> GaussianApprox:
    a2 = _wishart_alpha2(c, theta)
    v_t, c_ta, _ = _wishart_small_entries(c, theta)
    if not unscaled_cross:
        c_ta *= a2
    tm1 = theta - 1.0
    den = c - tm1**2
    v_xy = (
        4.0 * c**2 * theta**2 * den**2
        * (c**3 + 4.0 * c**2 * tm1 + c * tm1 * (theta * (theta + 5) - 5) + 2.0 * tm1**3)
        / (tm1**4 * (c + tm1) ** 7)
    )
    cov = np.array([[v_t, 0.0, c_ta], [0.0, v_t, c_ta], [c_ta, c_ta, v_xy]]) / m
    return GaussianApprox(np.array([theta, theta, a2**2]), cov, _joint_labels())


def wishart_single_largetheta(c: float, theta: float, m: int) -> GaussianApprox:
    a2 = _wishart_alpha2(c, theta)
    cov = np.array([[2 * c * theta**2, 2 * c**2], [2 * c**2, 2 * c**2 * (c + 1) / theta**2]]) / m
    return GaussianApprox(np.array([theta, a2]), cov, ("theta_unbiased_X", "angle_sq_X"))


def wishart_joint_largetheta(c: float, theta: float, m: int) -> GaussianApprox:
    a2 = _wishart_alpha2(c, theta)
    v, k = 2 * c * theta**2, 2 * c**2
    cov = np.array([[v, 0, k], [0, v, k], [k, k, 4 * c**2 * (c + 2) / theta**2]]) / m
    return GaussianApprox(np.array([theta, theta, a2]), cov, _joint_labels())


def angle_plugin_estimates(W: EigenDecomposition, pert, rho: float) -> tuple[float, float, float]:
    """Three approximations of <u_hat, u>^2 built from weighted spectral sums.

    The first linearizes the exact identity around ``rho``; the second and
    third are expansions in 1/theta of second and first order.
    """
    spec = W.values
    u = pert.u
    theta = pert.theta
    tm1 = theta - 1.0
    m12 = spec.m_functional(rho, 1, 2)
    m13 = spec.m_functional(rho, 1, 3)
    w11 = weighted_m_functional(W, u, rho, 1, 1)
    w12 = weighted_m_functional(W, u, rho, 1, 2)
    lin = (theta / tm1**2) * (
        1.0 / (rho * m12)
        + (2.0 * m13 / m12 - 1.0 / rho) * (w11 - 1.0 / tm1) / (rho * m12**2)
        - (w12 - m12) / (rho * m12**2)
    )
    w1 = weighted_m_functional(W, u, rho, 1, 0)
    w2 = weighted_m_functional(W, u, rho, 2, 0)
    w3 = weighted_m_functional(W, u, rho, 3, 0)
    m2 = spec.moment(2)
    first = 1.0 + (1.0 - w2 + 2.0 * m2 * (w1 - 1.0)) / theta
    second = first + (1.0 - 2.0 * w2 + 3.0 * w2**2 - 2.0 * w3) / theta**2
    return float(lin), float(second), float(first)


def double_angle(angle_x: float, angle_y: float, m2_x: float, m2_y: float, theta: float, z: float) -> float:
    """<u_X, u_Y> given the two angles with the true direction and a draw z ~ N(0, 1/m)."""
    return float(angle_x * angle_y + np.sqrt(max(m2_x - 1.0, 0.0)) * np.sqrt(max(m2_y - 1.0, 0.0)) / theta * z)
