"""Acceptance gate: one check per criterion, each printing a PASS/FAIL line."""

from __future__ import annotations

import json
import time
import warnings
from dataclasses import replace

import numpy as np
import pytest
from scipy import stats

from resispike.algebra import (
    PerturbationSpec,
    angle_formulas,
    lemma_residual_eigs,
    lemma_residual_eigs_2theta,
    perturbation_sqrt,
    secular_eigenvalues,
)
from resispike.asymptotics import (
    joint_law_largetheta,
    joint_law_mixed,
    joint_law_smalltheta,
    single_law_largetheta,
    single_law_smalltheta,
    wishart_invariant_cov,
    wishart_joint_largetheta,
    wishart_joint_smalltheta,
    wishart_single_largetheta,
    wishart_single_smalltheta,
)
from resispike.cli import main
from resispike.criterion import criterion_check, criterion_mu
from resispike.nulllaw import NullLaw, null_law_general, null_law_mp
from resispike.parallel import replicate_rng
from resispike.simlab import (
    ScenarioConfig,
    _perturbed,
    criterion_curve_for,
    power_cell,
    run_null_study,
)
from resispike.spectra import MarcenkoPasturLaw, MomentSet, Spectrum, eig_sym, normalize_trace
from resispike.spike import angle_estimate_alpha2, estimate_spike
from resispike.testkit import BaselineReport, TestReport, baselines, residual_spike_test

from helpers import random_unit, record

slow = pytest.mark.slow


def unit_pair(rng, m):
    return random_unit(rng, m), random_unit(rng, m)


def dense_nonunit(px, py):
    w, q = np.linalg.eigh(px)
    s = (q / np.sqrt(w)) @ q.T
    ev = np.linalg.eigvalsh(s @ py @ s)
    return ev[-1], ev[0]


# formula tier


def test_general_law_at_mp_moments_equals_closed_form():
    t0 = time.perf_counter()
    worst = 0.0
    for c in (0.1, 0.5, 1.0, 2.0):
        mom = MomentSet.from_spectrum(MarcenkoPasturLaw(c))
        a, b = null_law_general(mom, mom, 100), null_law_mp(c, c, 100)
        for k in ("lambda_plus", "sigma_plus", "lambda_minus", "sigma_minus"):
            worst = max(worst, abs(getattr(a, k) / getattr(b, k) - 1))
    dt = time.perf_counter() - t0
    ok = worst < 1e-9 and dt < 1.0
    assert record("general null law = MP closed form (c in 0.1,0.5,1,2)", ok, f"max rel err {worst:.1e}, {dt:.2f}s")


def test_reciprocal_locations_and_scale_relation():
    t0 = time.perf_counter()
    rng = np.random.default_rng(101)
    worst = 0.0
    done = 0
    while done < 100:
        m = int(rng.integers(5, 200))
        vals = [rng.gamma(rng.uniform(0.5, 5), size=m) for _ in range(2)]
        mx, my = (MomentSet.from_spectrum(normalize_trace(Spectrum.from_values(v))) for v in vals)
        if mx.m2 + my.m2 < 2 + 1e-6:
            continue
        law = null_law_general(mx, my, m)
        worst = max(
            worst,
            abs(law.lambda_plus * law.lambda_minus - 1),
            abs(law.sigma_minus**2 - law.lambda_minus**4 * law.sigma_plus**2) / law.sigma_minus**2,
        )
        done += 1
    dt = time.perf_counter() - t0
    ok = worst < 1e-10 and dt < 1.0
    assert record("lambda+ lambda- = 1 and sigma- relation (100 moment sets)", ok, f"max err {worst:.1e}, {dt:.2f}s")


def test_lemma_closed_forms_against_dense():
    t0 = time.perf_counter()
    rng = np.random.default_rng(102)
    worst = 0.0
    for _ in range(200):
        m = int(rng.integers(2, 9))
        u, v = unit_pair(rng, m)
        a2 = min(float(u @ v) ** 2, 1.0)
        tx, ty = 10 ** rng.uniform(0.05, 3, size=2)
        px = np.eye(m) + (tx - 1) * np.outer(u, u)
        hi, lo = dense_nonunit(px, np.eye(m) + (tx - 1) * np.outer(v, v))
        r = lemma_residual_eigs(tx, a2)
        worst = max(worst, abs(r.lam_hi / hi - 1), abs(r.lam_lo / lo - 1))
        hi, lo = dense_nonunit(px, np.eye(m) + (ty - 1) * np.outer(v, v))
        r = lemma_residual_eigs_2theta(tx, ty, a2)
        if m > 2:
            r = (max(r.lam_hi, 1.0), min(r.lam_lo, 1.0))
        worst = max(worst, abs(r[0] / hi - 1), abs(r[1] / lo - 1))
    dt = time.perf_counter() - t0
    ok = worst < 1e-8 and dt < 5.0
    assert record("residual-eigenvalue closed forms = dense (m<=8, 200 cases)", ok, f"max rel err {worst:.1e}, {dt:.2f}s")


def test_secular_roots_and_angles_against_dense():
    t0 = time.perf_counter()
    rng = np.random.default_rng(103)
    worst_root = worst_angle = 0.0
    for _ in range(200):
        m = int(rng.integers(2, 13))
        g = rng.standard_normal((m, int(rng.integers(m, 3 * m + 2))))
        w = g @ g.T / g.shape[1]
        pert = PerturbationSpec(10 ** rng.uniform(0.05, 3), random_unit(rng, m))
        s = perturbation_sqrt(pert)
        dw, dv = np.linalg.eigh(s @ w @ s)
        roots = secular_eigenvalues(eig_sym(w), pert)
        worst_root = max(worst_root, float(np.max(np.abs(roots - dw[::-1]))) / dw[-1])
        af = angle_formulas(eig_sym(w), pert, roots[0])
        worst_angle = max(worst_angle, abs(af.hat_u_sq - float(dv[:, -1] @ pert.u) ** 2), af.residual)
    dt = time.perf_counter() - t0
    ok = worst_root < 1e-8 and worst_angle < 1e-8 and dt < 10.0
    assert record(
        "secular roots and angle formulas = dense (m<=12, 200 cases)",
        ok,
        f"root err {worst_root:.1e}, angle err {worst_angle:.1e}, {dt:.2f}s",
    )


def test_criterion_plus_branch_equals_lemma():
    t0 = time.perf_counter()
    rng = np.random.default_rng(104)
    worst = 0.0
    for _ in range(50):
        bx = normalize_trace(Spectrum.from_values(rng.gamma(4.0, size=60)))
        by = normalize_trace(Spectrum.from_values(rng.gamma(4.0, size=60)))
        theta = 10 ** rng.uniform(0.6, 4)
        a2 = angle_estimate_alpha2(bx, theta) * angle_estimate_alpha2(by, theta)
        worst = max(worst, abs(criterion_mu(bx, by, theta) / lemma_residual_eigs(theta, a2).lam_hi - 1))
    dt = time.perf_counter() - t0
    ok = worst < 1e-10 and dt < 1.0
    assert record("criterion mu = lemma plus branch", ok, f"max rel err {worst:.1e}, {dt:.2f}s")


# Monte Carlo tier


@slow
def test_null_normal_lambda_max():
    lmax, _ = run_null_study(ScenarioConfig(m=100, n_x=500, n_y=500, theta_x=5000, theta_y=5000, replicates=200))
    ok = (
        1.80 <= lmax.empirical_mean <= 1.94
        and 0.09 <= lmax.empirical_sd <= 0.15
        and abs(lmax.theory_mean - 1.87) <= 0.05
    )
    detail = f"mean {lmax.empirical_mean:.3f}, sd {lmax.empirical_sd:.3f}, theory {lmax.theory_mean:.3f}"
    assert record("null lambda_max, normal m=100 n=500 (mean, sd, theory)", ok, detail)


@slow
def test_null_normal_lambda_min():
    _, lmin = run_null_study(ScenarioConfig(m=100, n_x=2000, n_y=2000, theta_x=5000, theta_y=5000, replicates=200))
    ok = 0.70 <= lmin.empirical_mean <= 0.76
    assert record("null lambda_min, normal m=100 n=2000 mean", ok, f"mean {lmin.empirical_mean:.4f}")


@slow
def test_scenario_two_kolmogorov_distance():
    lmax, _ = run_null_study(ScenarioConfig(m=300, n_x=300, n_y=300, theta_x=5000, theta_y=5000, replicates=200))
    d = stats.kstest(np.array(lmax.zscores), "norm").statistic
    assert record("standardized lambda_max vs N(0,1), m=300 c=1, KS < 0.12", d < 0.12, f"KS {d:.4f}")


@pytest.fixture(scope="module")
def table3_cell():
    cfg = ScenarioConfig(m=500, n_x=250, n_y=250, theta_x=7, theta_y=7, u_x=0, u_y=1, replicates=200, seed=0)
    return power_cell(cfg, null_reps=200, alpha=0.05)


@slow
def test_power_cell_residual_spike_test(table3_cell):
    r = table3_cell.rate_t
    assert record("power T (m=500, n=250, theta=7, e1 vs e2) in [0.70, 0.90]", 0.70 <= r <= 0.90, f"rate {r:.3f}")


@slow
def test_power_cell_log_determinant(table3_cell):
    r = table3_cell.rate_t2
    assert record("power T2 (same cell) in [0.05, 0.25]", 0.05 <= r <= 0.25, f"rate {r:.3f}")


@slow
def test_power_cell_trace(table3_cell):
    r = table3_cell.rate_t3
    assert record("power T3 (same cell) in [0.03, 0.20]", 0.03 <= r <= 0.20, f"rate {r:.3f}")


@slow
def test_criterion_curves_monotone_four_scenarios():
    settings = [(0.5, 300, 900, 600), (0.0, 300, 300, 300), (0.5, 600, 300, 300), (0.0, 600, 300, 300)]
    verdicts = []
    for rho, m, nx, ny in settings:
        curve = criterion_curve_for(ScenarioConfig(rho=rho, m=m, n_x=nx, n_y=ny, theta_x=5000, theta_y=5000))
        verdicts.append(bool(curve.verdict and np.all(np.diff(curve.mu) >= -1e-9)))
    assert record("criterion curves weakly increasing, four scenarios", all(verdicts), f"{verdicts}")


@slow
def test_wishart_invariant_covariance():
    m, c, reps = 400, 0.5, 2000
    n = int(m / c)
    s = np.empty((reps, 2))
    for r in range(reps):
        g = replicate_rng(20, r, 0).standard_normal((m, n))
        wu = g @ g[0] / n
        s[r] = np.sqrt(m) * (wu[0] - 1), np.sqrt(m) * (wu @ wu - (1 + c))
    ratio = np.cov(s.T) / wishart_invariant_cov(c)
    worst = float(np.max(np.abs(ratio - 1)))
    assert record("invariant-vector covariance, m=400 c=0.5, within 15%", worst < 0.15, f"max rel dev {worst:.3f}")


@slow
def test_wishart_spike_estimator_variance():
    m, n, theta, reps = 300, 300, 10.0, 500
    est = np.empty(reps)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        for r in range(reps):
            g = replicate_rng(21, r, 0).standard_normal((m, n))
            g[0] *= np.sqrt(theta)
            est[r] = estimate_spike(g @ g.T / n, n=n).theta_unbiased
    c = m / n
    target = -2 * c * (theta - 1) ** 2 * theta**2 / (c - (theta - 1) ** 2)
    mv = m * est.var(ddof=1)
    se = mv * np.sqrt(2 / (reps - 1))
    ok = abs(mv - target) <= 3 * se
    assert record("m var(theta_unbiased), m=300 c=1 theta=10, within 3 SE", ok, f"{mv:.1f} vs {target:.1f}, SE {se:.1f}")


# property tier


@slow
def test_null_rejection_rate():
    cfg = ScenarioConfig(m=300, n_x=600, n_y=450, theta_x=50, theta_y=50, replicates=200, seed=7)
    rej = [residual_spike_test(*_perturbed(cfg, r), check_criterion=False).reject for r in range(cfg.replicates)]
    rate = float(np.mean(rej))
    assert record("H0 rejection rate <= 0.08 at level 0.05 (m=300, MP)", rate <= 0.08, f"rate {rate:.3f}")


def test_returned_covariances_psd():
    specs = [MarcenkoPasturLaw(c) for c in (0.1, 0.5, 1.0, 2.0)]
    rng = np.random.default_rng(105)
    specs += [normalize_trace(Spectrum.from_values(rng.gamma(3.0, size=200))) for _ in range(3)]
    worst = 0.0
    count = 0
    for sx in specs:
        for sy in specs:
            edge = max(1 + np.sqrt(max(s.moment(2) - 1, 0)) for s in (sx, sy))
            for theta in (2 * edge, 10.0 * edge, 300.0, 5000.0):
                for law in (
                    joint_law_smalltheta(sx, sy, theta, 100),
                    joint_law_largetheta(sx, sy, theta, 100),
                    joint_law_mixed(sx, sy, theta, 100),
                    single_law_smalltheta(sx, theta, 100),
                    single_law_largetheta(sx, theta, 100),
                ):
                    worst = min(worst, law.min_eigenvalue() / np.abs(law.cov).max())
                    count += 1
    for c in (0.1, 0.5, 1.0, 2.0):
        for theta in (2 * (1 + np.sqrt(c)), 20.0, 5000.0):
            for law in (
                wishart_single_smalltheta(c, theta, 100),
                wishart_joint_smalltheta(c, theta, 100),
                wishart_single_largetheta(c, theta, 100),
                wishart_joint_largetheta(c, theta, 100),
            ):
                worst = min(worst, law.min_eigenvalue() / np.abs(law.cov).max())
                count += 1
    ok = worst >= -1e-12
    assert record("every returned covariance is PSD", ok, f"{count} matrices, min scaled eig {worst:.1e}")


def test_bit_identical_across_workers():
    cfg = ScenarioConfig(m=80, n_x=200, n_y=160, theta_x=100, theta_y=100, replicates=8, seed=3)
    same = run_null_study(cfg, workers=1) == run_null_study(cfg, workers=3)
    alt = ScenarioConfig(m=60, n_x=150, n_y=150, theta_x=20, theta_y=20, u_x=0, u_y=1, replicates=6, seed=4)
    same &= power_cell(alt, null_reps=12, workers=1) == power_cell(alt, null_reps=12, workers=2)
    x, y = _perturbed(alt, 0)
    same &= baselines(x, y, null_reps=16, seed=5, workers=1) == baselines(x, y, null_reps=16, seed=5, workers=2)
    same &= run_null_study(cfg) == run_null_study(cfg)
    assert record("bit-identical reruns under fixed seed and any worker count", bool(same))


def test_json_round_trips():
    alt = ScenarioConfig(m=60, n_x=150, n_y=120, theta_x=20, theta_y=20, u_x=0, u_y=1, seed=6)
    x, y = _perturbed(alt, 0)
    rep = residual_spike_test(x, y)
    base = baselines(x, y, null_reps=10, seed=1)
    law = null_law_mp(0.4, 0.8, 120)
    curve = criterion_check(estimate_spike(x @ x.T).bulk, estimate_spike(y @ y.T).bulk)

    row = power_cell(replace(alt, replicates=2), null_reps=4).row()

    def rt(d):
        return json.loads(json.dumps(d))

    ok = (
        TestReport.from_dict(rt(rep.to_dict())) == rep
        and BaselineReport.from_dict(rt(base.to_dict())) == base
        and NullLaw.from_dict(rt(law.to_dict())) == law
        and rt(curve.to_dict()) == curve.to_dict()
        and rt(row) == row
    )
    assert record("JSON round-trips for all report types", ok)


@slow
def test_cli_exit_code_on_alternative(tmp_path, capsys):
    cfg = ScenarioConfig(m=500, n_x=250, n_y=250, theta_x=7, theta_y=7, u_x=0, u_y=1, seed=0)
    hits = 0
    runs = 20
    for r in range(runs):
        x, y = _perturbed(cfg, r)
        px, py = tmp_path / "x.csv", tmp_path / "y.csv"
        np.savetxt(px, x, delimiter=",")
        np.savetxt(py, y, delimiter=",")
        code = main(["test", str(px), str(py)])
        doc = json.loads(capsys.readouterr().out)
        hits += code == 2 and doc["report"]["p_max"] < 0.05
    frac = hits / runs
    assert record("CLI exit 2 with p_max < 0.05 on alternative, >= 75% of runs", frac >= 0.75, f"{hits}/{runs}")


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
