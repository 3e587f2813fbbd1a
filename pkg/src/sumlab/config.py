"""Solver configuration shared by the bound computations.

All searches in the package are deterministic: pseudo-random restarts are
drawn from ``numpy.random.default_rng`` seeded with ``seed`` plus a fixed
per-site offset, and ties are broken by the lowest restart index.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace

__all__ = ["SolverConfig", "DEFAULT_CONFIG", "thread_count"]

TOL_BALL = 1e-9
TOL_EQ = 1e-10
TOL_GAP = 1e-6
TOL_DUALITY = 1e-6

THREADS_ENV_VAR = "SUMLAB_THREADS"


@dataclass(frozen=True)
class SolverConfig:
    """Knobs for the cutting-plane, search and decomposition routines."""

    seed: int = 0
    max_iter: int = 200
    tol_gap: float = TOL_GAP
    tol_duality: float = TOL_DUALITY
    mesh_resolution: int = 16
    restarts: int = 32
    decomposition_parts: int = 4  # k_max for domination-space seminorms
    decomposition_restarts: int = 64
    rank_cap: int = 4  # bounded-rank cap for tensor representations
    sphere_samples: int = 40  # deterministic per-factor sphere samples
    universe_cap: int = 4096  # hard cap (2**12) on enumerated tuples
    enable_ascent: bool = True

    def with_seed(self, seed: int) -> "SolverConfig":
        return replace(self, seed=seed)


DEFAULT_CONFIG = SolverConfig()


def thread_count() -> int:
    """Worker count from the environment; all current code paths are serial.

    The variable is validated here so configs can carry it forward once a
    parallel reduction lands; an invalid value falls back to 1.
    """
    raw = os.environ.get(THREADS_ENV_VAR, "1")
    try:
        n = int(raw)
    except ValueError:
        return 1
    return max(1, n)
