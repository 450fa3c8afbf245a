"""
Noise generators and Monte Carlo drivers for null-distribution and power
studies.

Every replicate draws from its own counter-based stream keyed by
``(seed, replicate, group)``, so results do not depend on how replicates are
spread over worker processes.
"""

from __future__ import annotations

import configparser
import csv
import json
import math
import warnings
from dataclasses import asdict, dataclass, field, replace
from functools import partial
from pathlib import Path
from typing import Sequence

import numpy as np
from numpy.typing import NDArray
from scipy import signal

from .criterion import CriterionCurve, criterion_check
from .errors import ConfigError, NotDetectable
from .parallel import map_replicates, replicate_rng
from .spike import estimate_spike
from .testkit import _cov, _prepare, baseline_statistics, residual_spike_test

__all__ = [
    "FAMILIES",
    "ScenarioConfig",
    "StudyConfig",
    "MonteCarloSummary",
    "PowerRow",
    "generate",
    "apply_perturbation",
    "run_null_study",
    "run_power_study",
    "power_cell",
    "criterion_curve_for",
    "load_study",
    "parse_study",
    "write_csv",
    "write_json",
]

FAMILIES = ("ar_normal", "student_t8", "arma")
ARMA_BURN_IN = 200
NULL_STREAMS = (2, 3)


@dataclass(frozen=True)
class ScenarioConfig:
    family: str = "ar_normal"
    m: int = 100
    n_x: int = 500
    n_y: int = 500
    rho: float = 0.0
    arma_ar: tuple[float, ...] = (0.6, 0.2)
    arma_ma: tuple[float, ...] = (0.5, 0.2)
    theta_x: float = 5000.0
    theta_y: float = 5000.0
    u_x: int = 0
    u_y: int = 0
    replicates: int = 200
    seed: int = 0
    name: str = ""

    def __post_init__(self) -> None:
        if self.family not in FAMILIES:
            raise ValueError(f"family must be one of {FAMILIES}, got {self.family!r}")
        if min(self.m, self.n_x, self.n_y) <= 0:
            raise ValueError("m, n_x and n_y must be positive")
        if not abs(self.rho) < 1:
            raise ValueError("|rho| must be below 1")
        if self.theta_x < 1 or self.theta_y < 1:
            raise ValueError("spike sizes must be at least 1")
        if not (0 <= self.u_x < self.m and 0 <= self.u_y < self.m):
            raise ValueError("spike directions must index a variable")
        if self.replicates < 1:
            raise ValueError("replicates must be positive")
        object.__setattr__(self, "arma_ar", tuple(float(v) for v in self.arma_ar))
        object.__setattr__(self, "arma_ma", tuple(float(v) for v in self.arma_ma))

    @property
    def is_null(self) -> bool:
        return self.theta_x == self.theta_y and self.u_x == self.u_y


@dataclass(frozen=True)
class MonteCarloSummary:
    stat_name: str
    empirical_mean: float
    empirical_sd: float
    theory_mean: float
    theory_sd: float
    replicates: int
    samples: tuple[float, ...] = field(default=(), repr=False)
    zscores: tuple[float, ...] = field(default=(), repr=False)

    def __post_init__(self) -> None:
        if self.replicates <= 1:
            raise ValueError("a summary needs more than one replicate")
        if self.empirical_sd < 0 or self.theory_sd < 0:
            raise ValueError("standard deviations must be non-negative")

    def row(self) -> dict:
        d = asdict(self)
        d.pop("samples")
        d.pop("zscores")
        return d


@dataclass(frozen=True)
class PowerRow:
    name: str
    theta_x: float
    u_x: int
    theta_y: float
    u_y: int
    rate_t: float
    rate_t2: float
    rate_t3: float
    replicates: int
    skipped: int = 0

    def row(self) -> dict:
        return asdict(self)


def _noise(family: str, rng: np.random.Generator, m: int, n: int, cfg: ScenarioConfig) -> NDArray[np.float64]:
    if family == "ar_normal":
        eps = rng.standard_normal((m, n))
        if cfg.rho == 0:
            return eps
        s = math.sqrt(1.0 - cfg.rho**2)
        # X_1 = eps_1, X_{i+1} = rho X_i + s eps_{i+1}
        zi = ((1.0 - s) * eps[:, 0])[:, None]
        out, _ = signal.lfilter([s], [1.0, -cfg.rho], eps, axis=1, zi=zi)
        return out
    if family == "student_t8":
        g = rng.standard_normal((m, n))
        w = np.sqrt(rng.chisquare(8.0, size=n) / 8.0)
        return g / w
    e = rng.standard_normal((m, n + ARMA_BURN_IN))
    b = np.r_[1.0, cfg.arma_ma]
    a = np.r_[1.0, -np.asarray(cfg.arma_ar)]
    out = signal.lfilter(b, a, e, axis=1)[:, ARMA_BURN_IN:]
    # global rescale so that trace(X X^T / n) = m
    return out * math.sqrt(m * n / float(np.sum(out * out)))


def generate(config: ScenarioConfig, replicate_index: int) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Unperturbed noise matrices (m x n_X, m x n_Y) for one replicate."""
    rx = replicate_rng(config.seed, replicate_index, 0)
    ry = replicate_rng(config.seed, replicate_index, 1)
    return (
        _noise(config.family, rx, config.m, config.n_x, config),
        _noise(config.family, ry, config.m, config.n_y, config),
    )


def apply_perturbation(data, theta: float, u_index: int) -> NDArray[np.float64]:
    """P^{1/2} data for P = I + (theta - 1) e_u e_u^T."""
    if theta < 1:
        raise ValueError("theta must be at least 1")
    out = np.array(data, dtype=np.float64, copy=True)
    out[u_index] *= math.sqrt(theta)
    return out


def _perturbed(config: ScenarioConfig, rep: int):
    x, y = generate(config, rep)
    return apply_perturbation(x, config.theta_x, config.u_x), apply_perturbation(y, config.theta_y, config.u_y)


def _null_rep(rep: int, config: ScenarioConfig):
    x, y = _perturbed(config, rep)
    r = residual_spike_test(x, y, strict=False, check_criterion=False)
    law = r.law
    return (r.lambda_max_obs, r.lambda_min_obs, law.lambda_plus, law.sd_max, law.lambda_minus, law.sd_min)


def run_null_study(config: ScenarioConfig, workers: int | None = 1) -> tuple[MonteCarloSummary, MonteCarloSummary]:
    """Empirical and predicted mean/sd of the extreme residual spikes under H0.

    The prediction is the null law evaluated on each replicate's own bulk
    spectra, averaged over replicates.
    """
    if not config.is_null:
        raise ValueError("null study needs equal perturbations in both groups")
    if config.replicates < 2:
        raise ValueError("null study needs at least two replicates")
    res = np.array(map_replicates(partial(_null_rep, config=config), range(config.replicates), workers))
    out = []
    for name, k in (("lambda_max", 0), ("lambda_min", 1)):
        obs = res[:, k]
        out.append(
            MonteCarloSummary(
                name,
                float(obs.mean()),
                float(obs.std(ddof=1)),
                float(res[:, 2 + 2 * k].mean()),
                float(res[:, 3 + 2 * k].mean()),
                config.replicates,
                tuple(float(v) for v in obs),
                tuple(float(v) for v in (obs - res[:, 2 + 2 * k]) / res[:, 3 + 2 * k]),
            )
        )
    return out[0], out[1]


def _baseline_null_rep(rep: int, config: ScenarioConfig):
    rx = replicate_rng(config.seed, rep, NULL_STREAMS[0])
    ry = replicate_rng(config.seed, rep, NULL_STREAMS[1])
    x = apply_perturbation(_noise(config.family, rx, config.m, config.n_x, config), config.theta_x, config.u_x)
    y = apply_perturbation(_noise(config.family, ry, config.m, config.n_y, config), config.theta_x, config.u_x)
    x, y = _prepare(x, y, True)
    return baseline_statistics(_cov(x), _cov(y), config.n_x, config.n_y)


def _power_rep(rep: int, config: ScenarioConfig):
    x, y = _perturbed(config, rep)
    try:
        t_rej = residual_spike_test(x, y, check_criterion=False).reject
    except NotDetectable:
        return None
    xc, yc = _prepare(x, y, True)
    return (float(t_rej),) + baseline_statistics(_cov(xc), _cov(yc), config.n_x, config.n_y)


def power_cell(
    config: ScenarioConfig, null_reps: int = 200, alpha: float = 0.05, workers: int | None = 1
) -> PowerRow:
    """Rejection rates of T, T2, T3 for one alternative.

    Baseline quantiles are simulated once per cell with the X perturbation in
    both groups.
    """
    sims = np.array(map_replicates(partial(_baseline_null_rep, config=config), range(null_reps), workers))
    q = np.quantile(sims, [alpha / 2, 1 - alpha / 2], axis=0)
    res = map_replicates(partial(_power_rep, config=config), range(config.replicates), workers)
    kept = np.array([r for r in res if r is not None])
    skipped = len(res) - kept.shape[0]
    if kept.shape[0] == 0:
        nan = float("nan")
        return PowerRow(config.name, config.theta_x, config.u_x, config.theta_y, config.u_y, nan, nan, nan, 0, skipped)
    out = (kept[:, 1:] < q[0]) | (kept[:, 1:] > q[1])
    return PowerRow(
        config.name,
        config.theta_x,
        config.u_x,
        config.theta_y,
        config.u_y,
        float(kept[:, 0].mean()),
        float(out[:, 1].mean()),
        float(out[:, 2].mean()),
        int(kept.shape[0]),
        skipped,
    )


def run_power_study(
    configs: Sequence[ScenarioConfig], null_reps: int = 200, alpha: float = 0.05, workers: int | None = 1
) -> list[PowerRow]:
    return [power_cell(c, null_reps, alpha, workers) for c in configs]


def criterion_curve_for(config: ScenarioConfig, replicate_index: int = 0, theta_grid=None) -> CriterionCurve:
    """Criterion curve on the bulk spectra of one generated replicate."""
    x, y = _perturbed(config, replicate_index)
    x, y = _prepare(x, y, True)
    with warnings.catch_warnings():
        # correlated columns push several bulk eigenvalues past the white-noise edge
        warnings.simplefilter("ignore", UserWarning)
        bx = estimate_spike(_cov(x), n=config.n_x - 1).bulk
        by = estimate_spike(_cov(y), n=config.n_y - 1).bulk
    return criterion_check(bx, by, theta_grid)


@dataclass(frozen=True)
class StudyConfig:
    kind: str
    scenarios: tuple[ScenarioConfig, ...]
    null_reps: int = 200
    alpha: float = 0.05
    workers: int = 1


_INT_FIELDS = {"m", "n_x", "n_y", "u_x", "u_y", "replicates", "seed"}
_FLOAT_FIELDS = {"rho", "theta_x", "theta_y"}
_TUPLE_FIELDS = {"arma_ar", "arma_ma"}
_KINDS = ("null", "power", "criterion")


def _convert(path: str, key: str, raw: str):
    try:
        if key in _INT_FIELDS:
            return int(raw)
        if key in _FLOAT_FIELDS:
            return float(raw)
        if key in _TUPLE_FIELDS:
            return tuple(float(v) for v in raw.replace(",", " ").split())
    except ValueError as exc:
        raise ConfigError(f"cannot parse {raw!r}", path) from exc
    return raw.strip()


def parse_study(text: str, seed_override: int | None = None) -> StudyConfig:
    """Parse an INI study description.

    ``[study]`` holds ``kind`` (null, power or criterion) and optional
    ``null_reps``, ``alpha``, ``workers``; ``[defaults]`` holds scenario
    fields shared by every ``[scenario.NAME]`` section.  ``theta`` sets both
    ``theta_x`` and ``theta_y``.
    """
    cp = configparser.ConfigParser(interpolation=None, default_section="__none__")
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc).splitlines()[0], "<file>") from exc
    if "study" not in cp:
        raise ConfigError("missing section", "study")
    study = cp["study"]
    kind = study.get("kind", "").strip()
    if kind not in _KINDS:
        raise ConfigError(f"must be one of {_KINDS}", "study.kind")
    opts = {}
    for key, conv in (("null_reps", int), ("alpha", float), ("workers", int)):
        if key in study:
            try:
                opts[key] = conv(study[key])
            except ValueError as exc:
                raise ConfigError(f"cannot parse {study[key]!r}", f"study.{key}") from exc
    unknown = set(study) - {"kind", "null_reps", "alpha", "workers"}
    if unknown:
        raise ConfigError("unknown key", f"study.{sorted(unknown)[0]}")
    defaults = dict(cp["defaults"]) if "defaults" in cp else {}
    names = [s for s in cp.sections() if s.startswith("scenario.")]
    if not names:
        raise ConfigError("no [scenario.NAME] sections", "scenario")
    valid = set(ScenarioConfig.__dataclass_fields__) - {"name"} | {"theta"}
    scenarios = []
    for sec in names:
        fields = {**defaults, **dict(cp[sec])}
        kwargs = {"name": sec.split(".", 1)[1]}
        for key, raw in fields.items():
            where = f"{sec}.{key}"
            if key not in valid:
                raise ConfigError("unknown key", where)
            if key == "theta":
                kwargs["theta_x"] = kwargs["theta_y"] = _convert(where, "theta_x", raw)
            else:
                kwargs[key] = _convert(where, key, raw)
        if seed_override is not None and "seed" not in fields:
            kwargs["seed"] = int(seed_override)
        try:
            scenarios.append(ScenarioConfig(**kwargs))
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc), sec) from exc
    return StudyConfig(kind, tuple(scenarios), **opts)


def load_study(path, seed_override: int | None = None) -> StudyConfig:
    text = Path(path).read_text(encoding="utf-8")
    if not text.strip():
        raise ConfigError("empty configuration", "study")
    return parse_study(text, seed_override)


def with_replicates(config: ScenarioConfig, replicates: int) -> ScenarioConfig:
    return replace(config, replicates=int(replicates))


def write_csv(rows: Sequence[dict], path) -> None:
    rows = list(rows)
    if not rows:
        raise ValueError("nothing to write")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)


def write_json(obj, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
