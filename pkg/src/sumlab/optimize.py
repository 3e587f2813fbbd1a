"""Small deterministic optimization helpers.

Everything here is seeded explicitly and breaks ties by the lowest restart
index, so repeated runs produce identical results.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

__all__ = ["subgradient_descent", "multistart_points"]


def subgradient_descent(
    objective: Callable[[np.ndarray], float],
    subgrad: Callable[[np.ndarray], np.ndarray],
    z0: np.ndarray,
    steps: int = 150,
    step0: float | None = None,
) -> tuple[np.ndarray, float]:
    """Projected-free subgradient descent with a diminishing step rule.

    Returns the best iterate seen, not the last one; the objective may be
    nonsmooth and the iterates need not be monotone.
    """
    z = np.array(z0, dtype=float)
    best_z, best_f = z.copy(), float(objective(z))
    if step0 is None:
        step0 = 0.5 * max(1.0, float(np.linalg.norm(z)))
    for t in range(steps):
        g = subgrad(z)
        gn = float(np.linalg.norm(g))
        if gn < 1e-14:
            break
        z = z - (step0 / np.sqrt(t + 1.0)) * g / gn
        f = float(objective(z))
        if f < best_f - 1e-15:
            best_f, best_z = f, z.copy()
    return best_z, best_f


def multistart_points(rng: np.random.Generator, count: int, dim: int) -> np.ndarray:
    """Gaussian directions for restarts; unit-normalized rows."""
    pts = rng.standard_normal((count, dim))
    norms = np.linalg.norm(pts, axis=1)
    norms[norms < 1e-12] = 1.0
    return pts / norms[:, None]
