"""
Power of the residual-spike test against the classical statistics.

Runs a slimmed version of the bundled power study: each cell changes either
the direction or the size of the spike in Y. Pass a replicate count to trade
time for precision (the bundled config uses 200).
"""

from __future__ import annotations

import sys

from resispike import bundled_config, load_study, power_cell, with_replicates

reps = int(sys.argv[1]) if len(sys.argv) > 1 else 40
study = load_study(bundled_config("power_grid"))

print(f"{'cell':22s} {'theta_y':>8s} {'u_y':>4s} {'T':>6s} {'T2':>6s} {'T3':>6s}")
for cfg in study.scenarios[:6]:
    row = power_cell(with_replicates(cfg, reps), null_reps=reps, alpha=study.alpha)
    print(
        f"{cfg.name:22s} {cfg.theta_y:8.1f} {cfg.u_y:4d} "
        f"{row.rate_t:6.2f} {row.rate_t2:6.2f} {row.rate_t3:6.2f}"
    )
