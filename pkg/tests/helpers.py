from __future__ import annotations

import numpy as np

from resispike.parallel import replicate_rng


def wishart(seed: int, m: int, n: int, rep: int = 0) -> np.ndarray:
    g = replicate_rng(seed, rep, 0).standard_normal((m, n))
    return g @ g.T / n


def random_unit(rng, m: int) -> np.ndarray:
    u = rng.standard_normal(m)
    return u / np.linalg.norm(u)


ACCEPTANCE_LINES: list[str] = []


def record(name: str, ok: bool, detail: str = "") -> bool:
    line = f"{'PASS' if ok else 'FAIL'}  {name}" + (f"  [{detail}]" if detail else "")
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok
