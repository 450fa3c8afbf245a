"""
The sanity check that guards the test: the predicted largest residual spike
should never shrink as the spike grows. We evaluate it for four scenarios from
the bundled config, mixing correlated and white noise.
"""

from __future__ import annotations

import warnings

import numpy as np

from resispike import bundled_config, criterion_curve_for, load_study

study = load_study(bundled_config("criterion_scenarios"))
for cfg in study.scenarios:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        curve = criterion_curve_for(cfg)
    pick = np.linspace(0, curve.thetas.size - 1, 7).astype(int)
    cells = "  ".join(f"{curve.thetas[i]:9.3g}:{curve.mu[i]:.4f}" for i in pick)
    print(f"{cfg.name:4s} rho={cfg.rho:.1f} m={cfg.m} n={cfg.n_x}/{cfg.n_y}  monotone={curve.verdict}")
    print(f"     theta:mu  {cells}")
    print(f"     switch to the large-theta series at theta = {curve.regime_switch:.0f}")
