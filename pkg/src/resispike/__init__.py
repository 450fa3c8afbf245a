"""Residual-spike test for equality of two high-dimensional spiked covariance matrices."""

from __future__ import annotations

__version__ = "0.1.0"

from .algebra import (
    AngleFormulas,
    PerturbationSpec,
    ResidualEigs,
    angle_formulas,
    lemma_residual_eigs,
    lemma_residual_eigs_2theta,
    perturbation_sqrt,
    secular_eigenvalues,
)
from .asymptotics import (
    GaussianApprox,
    angle_plugin_estimates,
    double_angle,
    invariant_vector_cov,
    joint_law_largetheta,
    joint_law_mixed,
    joint_law_smalltheta,
    single_law_largetheta,
    single_law_smalltheta,
    spike_location,
    wishart_invariant_cov,
    wishart_joint_largetheta,
    wishart_joint_smalltheta,
    wishart_single_largetheta,
    wishart_single_smalltheta,
)
from .criterion import CriterionCurve, criterion_check, criterion_mu, criterion_mu_largetheta
from .errors import *  # noqa: F401,F403
from .nulllaw import (
    NullLaw,
    ResidualZone,
    Variant,
    density_curve,
    null_law_cx_zero,
    null_law_general,
    null_law_mp,
    pvalues,
    quantiles,
    residual_zone,
)
from .simlab import (
    MonteCarloSummary,
    PowerRow,
    ScenarioConfig,
    StudyConfig,
    apply_perturbation,
    criterion_curve_for,
    generate,
    load_study,
    power_cell,
    run_null_study,
    run_power_study,
    with_replicates,
)
from .spectra import (
    EigenDecomposition,
    MarcenkoPasturLaw,
    MomentSet,
    Spectrum,
    eig_sym,
    m_functional,
    normalize_trace,
    solve_location,
    t_transform,
)
from .spike import FilteredCovariance, SpikeEstimate, estimate_spike, filtered_matrix
from .testkit import BaselineReport, TestReport, baselines, residual_spike_test


def bundled_config(name: str):
    """Path to one of the study configs shipped with the package, e.g. ``"criterion_scenarios"``."""
    from importlib.resources import files

    fname = name if name.endswith(".cfg") else f"{name}.cfg"
    path = files(__package__) / "configs" / fname
    if not path.is_file():
        raise FileNotFoundError(f"no bundled config {fname!r}")
    return path
